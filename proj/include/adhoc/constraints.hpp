#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adhoc/model.hpp"
#include "adhoc/text.hpp"

namespace adhoc {

enum class ConstraintOrigin {
    ElicitedUnary,    // stage-(c) marginal of one variable
    ElicitedPairwise, // stage-(c) conditional along an edge
    Query,            // the user's question itself
    Interpolated,     // shifted toward a dataset oracle
    Noise,            // shifted toward a random distribution
};

[[nodiscard]] inline std::string_view to_string(ConstraintOrigin o) {
    switch (o) {
        case ConstraintOrigin::ElicitedUnary: return "elicited-unary";
        case ConstraintOrigin::ElicitedPairwise: return "elicited-pairwise";
        case ConstraintOrigin::Query: return "query";
        case ConstraintOrigin::Interpolated: return "interpolated";
        case ConstraintOrigin::Noise: return "noise";
    }
    return "unknown";
}

// One membership event "variable takes a value in `values`".
struct ConditionTerm {
    std::string variable;
    std::vector<std::string> values;
};

// A fuzzy conditional moment constraint: the distribution of `target`,
// conditioned on every term holding, should be near `target_probs`; the
// squared residual enters the objective scaled by `weight`. No terms means
// a plain marginal constraint. Terms are conjoined; elicited constraints
// carry at most one single-value term, only query-origin constraints use
// more.
struct MomentConstraint {
    std::string target;
    std::vector<ConditionTerm> conditions;
    std::vector<double> target_probs;
    double weight = 10.0;
    ConstraintOrigin origin = ConstraintOrigin::ElicitedUnary;
    std::string source; // fingerprint of the chat call the numbers came from; empty if synthetic
};

struct ConstraintSet {
    std::vector<MomentConstraint> constraints;
};

// Turns a raw elicited vector into a distribution. Entries summing into
// [99, 101] are read as percentages; anything else is renormalized by its
// sum. Negative entries and all-zero vectors are rejected.
[[nodiscard]] inline std::vector<double> normalize_probability_vector(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("probability vector is empty");
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument("probability vector has a non-finite entry");
        if (x < 0.0) throw std::invalid_argument("probability vector has a negative entry");
        sum += x;
    }
    if (sum <= 0.0) throw std::invalid_argument("probability vector sums to zero");
    if (sum >= 99.0 && sum <= 101.0)
        for (double& x : v) x /= 100.0;
    sum = 0.0;
    for (double x : v) sum += x;
    for (double& x : v) x /= sum;
    return v;
}

namespace detail {

inline void validate_constraint_against(const Schema& schema, const MomentConstraint& c) {
    const Variable* target = schema.find(c.target);
    if (!target) throw std::invalid_argument("constraint target '" + c.target + "' names no variable");
    if (c.target_probs.size() != target->values.size())
        throw std::invalid_argument("constraint on '" + c.target + "' has " +
                                    std::to_string(c.target_probs.size()) + " probabilities for " +
                                    std::to_string(target->values.size()) + " values");
    double sum = 0.0;
    for (double p : c.target_probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("constraint on '" + c.target + "' has a negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("constraint on '" + c.target + "' is not normalized");
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
        throw std::invalid_argument("constraint weight must be finite and non-negative");
    for (const auto& term : c.conditions) {
        const Variable* cv = schema.find(term.variable);
        if (!cv) throw std::invalid_argument("constraint condition '" + term.variable + "' names no variable");
        if (label_eq(term.variable, c.target))
            throw std::invalid_argument("constraint on '" + c.target + "' conditions on itself");
        if (term.values.empty())
            throw std::invalid_argument("constraint condition on '" + term.variable + "' has no values");
        for (const auto& val : term.values)
            if (!cv->value_index(val))
                throw std::invalid_argument("condition value '" + val + "' is not a value of '" +
                                            term.variable + "'");
    }
}

} // namespace detail

inline void validate_constraints(const Schema& schema, const ConstraintSet& cs) {
    for (const auto& c : cs.constraints) detail::validate_constraint_against(schema, c);
}

// `raw` may be an unnormalized elicitation (percentages etc.); it is run
// through normalize_probability_vector.
inline MomentConstraint make_unary_constraint(const Schema& schema, std::string_view target,
                                              std::vector<double> raw, double weight,
                                              ConstraintOrigin origin = ConstraintOrigin::ElicitedUnary,
                                              std::string source = {}) {
    MomentConstraint c{std::string(target), {}, normalize_probability_vector(std::move(raw)),
                       weight, origin, std::move(source)};
    detail::validate_constraint_against(schema, c);
    return c;
}

inline MomentConstraint make_conditional_constraint(const Schema& schema, std::string_view target,
                                                    std::string_view condition_variable,
                                                    std::string_view condition_value,
                                                    std::vector<double> raw, double weight,
                                                    ConstraintOrigin origin = ConstraintOrigin::ElicitedPairwise,
                                                    std::string source = {}) {
    MomentConstraint c{std::string(target),
                       {ConditionTerm{std::string(condition_variable), {std::string(condition_value)}}},
                       normalize_probability_vector(std::move(raw)),
                       weight, origin, std::move(source)};
    detail::validate_constraint_against(schema, c);
    return c;
}

// ---------------------------------------------------------------------------
// Residuals against an explicit joint.

struct ResidualReport {
    std::vector<double> residuals;   // b_v - p(target=v | conditions); zeros when inactive
    double condition_mass = 0.0;     // probability of the condition event
    bool active = false;             // condition mass above `epsilon`
};

// Internal world-predicate form of a constraint, reused by the solver.
struct BoundConstraint {
    std::size_t target_dim = 0;                       // OutcomeSpace dim of the target
    std::vector<std::vector<char>> allowed;           // per condition dim, allowed value mask
    std::vector<std::size_t> condition_dims;
    std::vector<double> b;
    double weight = 0.0;

    static BoundConstraint of(const Schema& schema, const OutcomeSpace& sp, const MomentConstraint& c) {
        detail::validate_constraint_against(schema, c);
        BoundConstraint bc;
        auto td = sp.dim_of(schema, c.target);
        if (!td)
            throw std::invalid_argument("constraint target '" + c.target +
                                        "' is single-valued; nothing to constrain");
        bc.target_dim = *td;
        bc.b = c.target_probs;
        bc.weight = c.weight;
        for (const auto& term : c.conditions) {
            auto cd = sp.dim_of(schema, term.variable);
            if (!cd) continue; // single-valued condition variable: vacuously true
            std::vector<char> mask(sp.size[*cd], 0);
            const Variable& v = schema.variables[sp.var_index[*cd]];
            for (const auto& val : term.values) mask[*v.value_index(val)] = 1;
            bc.condition_dims.push_back(*cd);
            bc.allowed.push_back(std::move(mask));
        }
        return bc;
    }

    [[nodiscard]] bool holds(const OutcomeSpace& sp, std::uint64_t flat) const {
        for (std::size_t i = 0; i < condition_dims.size(); ++i)
            if (!allowed[i][sp.value_at(flat, condition_dims[i])]) return false;
        return true;
    }
};

// Residual of one constraint under an explicit joint. Constraints whose
// condition event carries less than `epsilon` mass are inactive and
// contribute zero residual (their penalty term is defined as 0).
inline ResidualReport constraint_residual(const JointDistribution& joint, const MomentConstraint& c,
                                          double epsilon = 1e-12) {
    const OutcomeSpace sp = OutcomeSpace::of(joint.schema);
    if (joint.probs.size() != sp.total)
        throw std::invalid_argument("joint probability table does not match the schema's outcome space");
    const BoundConstraint bc = BoundConstraint::of(joint.schema, sp, c);
    std::vector<double> mass(bc.b.size(), 0.0);
    double total = 0.0;
    for (std::uint64_t w = 0; w < sp.total; ++w) {
        if (!bc.holds(sp, w)) continue;
        const double p = joint.probs[static_cast<std::size_t>(w)];
        mass[sp.value_at(w, bc.target_dim)] += p;
        total += p;
    }
    ResidualReport out;
    out.condition_mass = total;
    out.active = total >= epsilon;
    out.residuals.assign(bc.b.size(), 0.0);
    if (out.active)
        for (std::size_t v = 0; v < bc.b.size(); ++v)
            out.residuals[v] = bc.b[v] - mass[v] / total;
    return out;
}

} // namespace adhoc
