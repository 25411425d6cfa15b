#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adhoc/text.hpp"

namespace adhoc {

// A categorical random variable with mutually exclusive value labels.
// Variables with exactly one value are legal: they carry context for the
// prompts but contribute no outcome dimension and no model features.
struct Variable {
    std::string name;
    std::vector<std::string> values;

    [[nodiscard]] bool multi_valued() const { return values.size() > 1; }

    // Index of a label under the canonical match rule, if any.
    [[nodiscard]] std::optional<std::size_t> value_index(std::string_view label) const {
        for (std::size_t i = 0; i < values.size(); ++i)
            if (label_eq(values[i], label)) return i;
        return std::nullopt;
    }
};

struct Schema {
    std::vector<Variable> variables;
    std::string domain;       // one-sentence population summary
    std::string target_name;  // query target; must name a variable
    std::vector<std::string> condition_names; // query condition variables present in the schema

    [[nodiscard]] const Variable* find(std::string_view name) const {
        for (const auto& v : variables)
            if (label_eq(v.name, name)) return &v;
        return nullptr;
    }

    [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < variables.size(); ++i)
            if (label_eq(variables[i].name, name)) return i;
        return std::nullopt;
    }

    [[nodiscard]] const Variable& target() const {
        const Variable* v = find(target_name);
        if (!v) throw std::invalid_argument("schema target '" + target_name + "' names no variable");
        return *v;
    }

    [[nodiscard]] std::vector<std::size_t> multi_valued_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < variables.size(); ++i)
            if (variables[i].multi_valued()) out.push_back(i);
        return out;
    }

    // Size of the outcome space: product over multi-valued variables.
    [[nodiscard]] std::uint64_t outcome_count() const {
        std::uint64_t n = 1;
        for (const auto& v : variables) {
            if (!v.multi_valued()) continue;
            const auto k = static_cast<std::uint64_t>(v.values.size());
            if (n > (~std::uint64_t{0}) / k) return ~std::uint64_t{0}; // saturate
            n *= k;
        }
        return n;
    }
};

// An undirected pairwise interaction. `target`/`condition` record which
// conditional direction the proposer said was easier to estimate; the
// factor itself is symmetric.
struct Edge {
    std::string target;
    std::string condition;
};

// Discrete log-linear model over the schema's outcome space. Features are
// indicators: one per (multi-valued variable, value) and one per
// (edge, value pair); theta holds one weight per feature.
struct FactorGraph {
    Schema schema;
    std::vector<Edge> edges;
    std::vector<double> theta;
};

// A labeled distribution over one variable's values.
struct Distribution {
    std::vector<std::string> support;
    std::vector<double> probs;
};

inline void validate_distribution(const Distribution& d) {
    if (d.support.size() != d.probs.size())
        throw std::invalid_argument("distribution support/probability size mismatch");
    if (d.probs.empty()) throw std::invalid_argument("distribution is empty");
    double sum = 0.0;
    for (double p : d.probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("distribution has a negative or NaN probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("distribution probabilities sum to " + std::to_string(sum) + ", not 1");
}

// ---------------------------------------------------------------------------
// Schema construction and validation.

inline void validate_schema(const Schema& s) {
    if (s.variables.empty()) throw std::invalid_argument("schema has no variables");
    for (const auto& v : s.variables) {
        if (trim(v.name).empty()) throw std::invalid_argument("schema variable with empty name");
        if (v.values.empty())
            throw std::invalid_argument("variable '" + v.name + "' has no values");
        for (std::size_t i = 0; i < v.values.size(); ++i) {
            if (trim(v.values[i]).empty())
                throw std::invalid_argument("variable '" + v.name + "' has an empty value label");
            for (std::size_t j = i + 1; j < v.values.size(); ++j)
                if (label_eq(v.values[i], v.values[j]))
                    throw std::invalid_argument("variable '" + v.name + "' repeats value '" + v.values[i] + "'");
        }
    }
    for (std::size_t i = 0; i < s.variables.size(); ++i)
        for (std::size_t j = i + 1; j < s.variables.size(); ++j)
            if (label_eq(s.variables[i].name, s.variables[j].name))
                throw std::invalid_argument("duplicate variable name '" + s.variables[i].name + "'");
    if (!s.target_name.empty() && !s.find(s.target_name))
        throw std::invalid_argument("schema target '" + s.target_name + "' names no variable");
    for (const auto& c : s.condition_names)
        if (!s.find(c))
            throw std::invalid_argument("schema condition '" + c + "' names no variable");
}

inline Schema build_schema(std::vector<Variable> variables, std::string domain,
                           std::string target_name, std::vector<std::string> condition_names = {}) {
    Schema s{std::move(variables), std::move(domain), std::move(target_name), std::move(condition_names)};
    validate_schema(s);
    return s;
}

// ---------------------------------------------------------------------------
// Outcome space: indexing machinery shared by enumeration, inference and the
// solver. Outcomes are tuples over the multi-valued variables in schema
// order; flat indices enumerate them lexicographically with the last
// variable varying fastest.

struct OutcomeSpace {
    std::vector<std::size_t> var_index; // positions into schema.variables
    std::vector<std::size_t> size;      // value counts, aligned with var_index
    std::vector<std::uint64_t> stride;
    std::uint64_t total = 1;

    static OutcomeSpace of(const Schema& schema, std::uint64_t cap = 1000000) {
        validate_schema(schema);
        OutcomeSpace sp;
        for (std::size_t i = 0; i < schema.variables.size(); ++i) {
            if (!schema.variables[i].multi_valued()) continue;
            sp.var_index.push_back(i);
            sp.size.push_back(schema.variables[i].values.size());
        }
        sp.stride.assign(sp.size.size(), 1);
        sp.total = 1;
        bool overflow = false;
        for (std::size_t i = sp.size.size(); i-- > 0;) {
            sp.stride[i] = sp.total;
            if (sp.total > cap / sp.size[i]) { // next multiply would pass cap
                overflow = true;
                break;
            }
            sp.total *= sp.size[i];
        }
        if (overflow || sp.total > cap)
            throw std::invalid_argument("outcome space exceeds cap of " + std::to_string(cap) + " worlds");
        return sp;
    }

    [[nodiscard]] std::size_t dims() const { return size.size(); }

    // Value index of the d-th multi-valued variable in world `flat`.
    [[nodiscard]] std::size_t value_at(std::uint64_t flat, std::size_t d) const {
        return static_cast<std::size_t>((flat / stride[d]) % size[d]);
    }

    // Position within this space of the schema variable named `name`, if it
    // is multi-valued.
    [[nodiscard]] std::optional<std::size_t> dim_of(const Schema& schema, std::string_view name) const {
        for (std::size_t d = 0; d < var_index.size(); ++d)
            if (label_eq(schema.variables[var_index[d]].name, name)) return d;
        return std::nullopt;
    }
};

// Materialized outcome list: one row per world, value labels of the
// multi-valued variables in schema order. Intended for desk-scale models;
// throws when the space exceeds `cap`.
inline std::vector<std::vector<std::string>> enumerate_worlds(const Schema& schema,
                                                              std::uint64_t cap = 1000000) {
    const OutcomeSpace sp = OutcomeSpace::of(schema, cap);
    std::vector<std::vector<std::string>> worlds;
    worlds.reserve(static_cast<std::size_t>(sp.total));
    for (std::uint64_t w = 0; w < sp.total; ++w) {
        std::vector<std::string> row(sp.dims());
        for (std::size_t d = 0; d < sp.dims(); ++d)
            row[d] = schema.variables[sp.var_index[d]].values[sp.value_at(w, d)];
        worlds.push_back(std::move(row));
    }
    return worlds;
}

// ---------------------------------------------------------------------------
// Feature layout. theta order: unary blocks for each multi-valued variable
// in schema order, then one block per edge in edge order holding
// |target values| * |condition values| pairwise indicators (target value
// major).

struct FeatureLayout {
    std::vector<std::size_t> unary_offset; // aligned with OutcomeSpace dims
    std::vector<std::size_t> edge_offset;  // aligned with edges
    std::vector<std::size_t> edge_target_dim;
    std::vector<std::size_t> edge_condition_dim;
    std::size_t total = 0;

    static FeatureLayout of(const Schema& schema, const std::vector<Edge>& edges,
                            const OutcomeSpace& sp) {
        FeatureLayout fl;
        std::size_t off = 0;
        fl.unary_offset.resize(sp.dims());
        for (std::size_t d = 0; d < sp.dims(); ++d) {
            fl.unary_offset[d] = off;
            off += sp.size[d];
        }
        for (const auto& e : edges) {
            auto td = sp.dim_of(schema, e.target);
            auto cd = sp.dim_of(schema, e.condition);
            if (!td || !cd)
                throw std::invalid_argument("edge (" + e.target + ", " + e.condition +
                                            ") references a variable that is missing or single-valued");
            if (*td == *cd)
                throw std::invalid_argument("edge (" + e.target + ", " + e.condition + ") is a self-loop");
            fl.edge_offset.push_back(off);
            fl.edge_target_dim.push_back(*td);
            fl.edge_condition_dim.push_back(*cd);
            off += sp.size[*td] * sp.size[*cd];
        }
        fl.total = off;
        return fl;
    }

    // Applies fn to the index of every feature active in world `flat`.
    template <class Fn>
    void for_each_active(const OutcomeSpace& sp, std::uint64_t flat, Fn&& fn) const {
        for (std::size_t d = 0; d < sp.dims(); ++d)
            fn(unary_offset[d] + sp.value_at(flat, d));
        for (std::size_t e = 0; e < edge_offset.size(); ++e) {
            const std::size_t tv = sp.value_at(flat, edge_target_dim[e]);
            const std::size_t cv = sp.value_at(flat, edge_condition_dim[e]);
            fn(edge_offset[e] + tv * sp.size[edge_condition_dim[e]] + cv);
        }
    }
};

inline void validate_graph(const FactorGraph& g, std::uint64_t cap = 1000000) {
    const OutcomeSpace sp = OutcomeSpace::of(g.schema, cap);
    const FeatureLayout fl = FeatureLayout::of(g.schema, g.edges, sp);
    for (std::size_t i = 0; i < g.edges.size(); ++i)
        for (std::size_t j = i + 1; j < g.edges.size(); ++j) {
            const bool same = (label_eq(g.edges[i].target, g.edges[j].target) &&
                               label_eq(g.edges[i].condition, g.edges[j].condition)) ||
                              (label_eq(g.edges[i].target, g.edges[j].condition) &&
                               label_eq(g.edges[i].condition, g.edges[j].target));
            if (same)
                throw std::invalid_argument("duplicate edge between '" + g.edges[i].target +
                                            "' and '" + g.edges[i].condition + "'");
        }
    if (!g.theta.empty() && g.theta.size() != fl.total)
        throw std::invalid_argument("theta has " + std::to_string(g.theta.size()) +
                                    " weights, feature layout needs " + std::to_string(fl.total));
    for (double t : g.theta)
        if (!std::isfinite(t)) throw std::invalid_argument("theta contains a non-finite weight");
}

// The full joint over the outcome space, indexed by flat world index.
struct JointDistribution {
    Schema schema;
    std::vector<double> probs; // aligned with OutcomeSpace::of(schema) flat order
};

// Exact joint by brute-force normalization. Empty theta means all-zero
// weights (the uniform distribution). Numerically shift-invariant: adding a
// constant to every score leaves the result unchanged.
inline JointDistribution joint_distribution(const FactorGraph& g, std::uint64_t cap = 1000000) {
    validate_graph(g, cap);
    const OutcomeSpace sp = OutcomeSpace::of(g.schema, cap);
    const FeatureLayout fl = FeatureLayout::of(g.schema, g.edges, sp);
    const std::size_t n = static_cast<std::size_t>(sp.total);
    std::vector<double> score(n, 0.0);
    if (!g.theta.empty()) {
        for (std::size_t w = 0; w < n; ++w) {
            double s = 0.0;
            fl.for_each_active(sp, w, [&](std::size_t k) { s += g.theta[k]; });
            score[w] = s;
        }
    }
    const double m = *std::max_element(score.begin(), score.end());
    double z = 0.0;
    for (double& s : score) {
        s = std::exp(s - m);
        z += s;
    }
    JointDistribution out{g.schema, std::move(score)};
    for (double& p : out.probs) p /= z;
    return out;
}

// ---------------------------------------------------------------------------
// Pruning: keep only the connected component of the target (treating edges
// as undirected), so stray proposals cannot inflate the outcome space.
// Single-valued variables never join components; they are kept as context.

struct PruneResult {
    Schema schema;
    std::vector<Edge> edges;
    std::vector<std::string> dropped_variables;
    std::vector<Edge> dropped_edges;
};

inline PruneResult prune_to_target_component(const Schema& schema, const std::vector<Edge>& edges) {
    validate_schema(schema);
    if (schema.target_name.empty())
        throw std::invalid_argument("prune_to_target_component needs a schema target");
    const Variable& target = schema.target();

    std::vector<std::string> frontier{target.name};
    std::vector<std::string> component{target.name};
    auto in_component = [&](std::string_view name) {
        return std::any_of(component.begin(), component.end(),
                           [&](const std::string& c) { return label_eq(c, name); });
    };
    while (!frontier.empty()) {
        const std::string cur = frontier.back();
        frontier.pop_back();
        for (const auto& e : edges) {
            std::string other;
            if (label_eq(e.target, cur)) other = e.condition;
            else if (label_eq(e.condition, cur)) other = e.target;
            else continue;
            if (!in_component(other)) {
                component.push_back(other);
                frontier.push_back(other);
            }
        }
    }

    PruneResult out;
    out.schema.domain = schema.domain;
    out.schema.target_name = schema.target_name;
    for (const auto& v : schema.variables) {
        if (!v.multi_valued() || in_component(v.name)) out.schema.variables.push_back(v);
        else out.dropped_variables.push_back(v.name);
    }
    for (const auto& e : edges) {
        if (in_component(e.target) && in_component(e.condition)) out.edges.push_back(e);
        else out.dropped_edges.push_back(e);
    }
    for (const auto& c : schema.condition_names)
        if (out.schema.find(c)) out.schema.condition_names.push_back(c);
    validate_schema(out.schema);
    return out;
}

} // namespace adhoc
