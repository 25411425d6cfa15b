#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adhoc/constraints.hpp"
#include "adhoc/errors.hpp"
#include "adhoc/model.hpp"

namespace adhoc {

// A formal question: the distribution of `target` given that every
// condition term holds. `text` keeps the natural-language phrasing when
// one exists.
struct Query {
    std::string target;
    std::vector<ConditionTerm> conditions;
    std::string text;
};

// Exact conditional marginal by summation over the joint. Condition terms
// must name schema variables and resolve every value label; a condition
// event of (numerically) zero mass raises UnanswerableQueryError.
inline Distribution conditional_marginal(const JointDistribution& joint, std::string_view target,
                                         const std::vector<ConditionTerm>& conditions = {},
                                         double epsilon = 1e-12) {
    const Schema& schema = joint.schema;
    const Variable* tv = schema.find(target);
    if (!tv) throw std::invalid_argument("marginal target '" + std::string(target) + "' names no variable");

    const OutcomeSpace sp = OutcomeSpace::of(schema);
    if (joint.probs.size() != sp.total)
        throw std::invalid_argument("joint probability table does not match the schema's outcome space");

    std::vector<std::size_t> cond_dims;
    std::vector<std::vector<char>> masks;
    for (const auto& term : conditions) {
        const Variable* cv = schema.find(term.variable);
        if (!cv)
            throw std::invalid_argument("condition variable '" + term.variable + "' names no variable");
        if (term.values.empty())
            throw std::invalid_argument("condition on '" + term.variable + "' has no values");
        std::vector<char> mask(cv->values.size(), 0);
        for (const auto& val : term.values) {
            auto idx = cv->value_index(val);
            if (!idx)
                throw std::invalid_argument("condition value '" + val + "' is not a value of '" +
                                            term.variable + "'");
            mask[*idx] = 1;
        }
        auto cd = sp.dim_of(schema, term.variable);
        if (!cd) continue; // single-valued variable: condition is vacuous
        cond_dims.push_back(*cd);
        masks.push_back(std::move(mask));
    }

    Distribution out;
    out.support = tv->values;
    out.probs.assign(tv->values.size(), 0.0);

    auto target_dim = sp.dim_of(schema, target);
    double total = 0.0;
    for (std::uint64_t w = 0; w < sp.total; ++w) {
        bool ok = true;
        for (std::size_t i = 0; i < cond_dims.size() && ok; ++i)
            ok = masks[i][sp.value_at(w, cond_dims[i])] != 0;
        if (!ok) continue;
        const double p = joint.probs[static_cast<std::size_t>(w)];
        total += p;
        if (target_dim) out.probs[sp.value_at(w, *target_dim)] += p;
    }
    if (total < epsilon)
        throw UnanswerableQueryError("condition event has probability below " + std::to_string(epsilon));
    if (target_dim) {
        for (double& p : out.probs) p /= total;
    } else {
        out.probs[0] = 1.0; // single-valued target: a point mass
    }
    return out;
}

struct QueryAnswer {
    Distribution distribution;
    // Condition variables absent from the schema, dropped with a warning
    // (the answer "backs off" to the remaining conditions).
    std::vector<std::string> backed_off;
};

// Answers a query against the graph structure using the supplied weights
// (typically the solver's optimum). Conditions naming unknown variables are
// backed off; known variables with unknown value labels are an error.
inline QueryAnswer answer_query(const FactorGraph& graph, const std::vector<double>& theta,
                                const Query& query, double epsilon = 1e-12) {
    FactorGraph g{graph.schema, graph.edges, theta};
    const JointDistribution joint = joint_distribution(g);
    QueryAnswer out;
    std::vector<ConditionTerm> kept;
    for (const auto& term : query.conditions) {
        if (graph.schema.find(term.variable)) kept.push_back(term);
        else out.backed_off.push_back(term.variable);
    }
    out.distribution = conditional_marginal(joint, query.target, kept, epsilon);
    return out;
}

// Total variation distance between two distributions over the same support
// (same labels under the canonical match rule, any order).
inline double tvd(const Distribution& a, const Distribution& b) {
    validate_distribution(a);
    validate_distribution(b);
    if (a.support.size() != b.support.size())
        throw std::invalid_argument("tvd: supports have different sizes");
    double sum = 0.0;
    std::vector<char> used(b.support.size(), 0);
    for (std::size_t i = 0; i < a.support.size(); ++i) {
        bool found = false;
        for (std::size_t j = 0; j < b.support.size(); ++j) {
            if (used[j] || !label_eq(a.support[i], b.support[j])) continue;
            sum += std::abs(a.probs[i] - b.probs[j]);
            used[j] = 1;
            found = true;
            break;
        }
        if (!found)
            throw std::invalid_argument("tvd: label '" + a.support[i] + "' missing from second support");
    }
    return 0.5 * sum;
}

} // namespace adhoc
