#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adhoc/dataset.hpp"
#include "adhoc/elicitation.hpp"
#include "adhoc/errors.hpp"
#include "adhoc/inference.hpp"
#include "adhoc/io.hpp"
#include "adhoc/model.hpp"
#include "adhoc/rng.hpp"

namespace adhoc {

struct GeneratedQuestion {
    Query query;            // target + single-value conditions, canonical labels
    std::string text;
    Distribution reference; // empirical answer from the source table
    int n_conditions = 0;
    std::string split_label;
};

inline ojson question_to_json(const GeneratedQuestion& q) {
    ojson j = query_to_json(q.query, q.reference.support);
    j["Text"] = q.text;
    j["Reference"] = q.reference.probs;
    j["Split"] = q.split_label;
    j["NConditions"] = q.n_conditions;
    return j;
}

inline ojson questions_to_json(const std::vector<GeneratedQuestion>& qs) {
    ojson arr = ojson::array();
    for (const auto& q : qs) arr.push_back(question_to_json(q));
    return ojson{{"Questions", arr}};
}

inline GeneratedQuestion question_from_json(const nlohmann::json& j) {
    GeneratedQuestion q;
    std::vector<std::string> support;
    q.query = query_from_json(j, &support);
    q.text = q.query.text;
    const auto* ref = jsonio::find_key(j, {"Reference"});
    if (!ref) throw IoError("question entry is missing its Reference distribution");
    q.reference.support = support;
    if (ref->is_array()) {
        for (const auto& x : *ref) q.reference.probs.push_back(jsonio::number_from(x));
    } else {
        throw IoError("question Reference must be an array of probabilities");
    }
    if (q.reference.support.size() != q.reference.probs.size())
        throw IoError("question Reference length does not match the target's value list");
    validate_distribution(q.reference);
    if (const auto* s = jsonio::find_key(j, {"Split", "split"}))
        q.split_label = jsonio::scalar_to_string(*s);
    if (const auto* n = jsonio::find_key(j, {"NConditions"}))
        q.n_conditions = static_cast<int>(jsonio::number_from(*n));
    else
        q.n_conditions = static_cast<int>(q.query.conditions.size());
    return q;
}

inline std::vector<GeneratedQuestion> questions_from_json(const nlohmann::json& j) {
    const auto* arr = j.is_array() ? &j : jsonio::find_key(j, {"Questions"});
    if (!arr || !arr->is_array()) throw IoError("question set file has no Questions list");
    std::vector<GeneratedQuestion> out;
    std::size_t index = 0;
    for (const auto& entry : *arr) {
        try {
            out.push_back(question_from_json(entry));
        } catch (const std::exception& e) {
            throw IoError("question entry " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    return out;
}

// Optional hand-corrected texts: entries shaped like questions (Target +
// Condition + Text); matched by target and condition assignment.
class TextOverrides {
public:
    TextOverrides() = default;

    static TextOverrides load(const std::string& path) {
        TextOverrides o;
        nlohmann::json j = load_json_file(path);
        const auto* arr = j.is_array() ? &j : jsonio::find_key(j, {"Overrides"});
        if (!arr || !arr->is_array()) throw IoError("overrides file has no Overrides list");
        for (const auto& entry : *arr) {
            Query q = query_from_json(entry);
            const auto* text = jsonio::find_key(entry, {"Text", "text"});
            if (!text) throw IoError("an override entry is missing its Text");
            o.entries_.emplace_back(std::move(q), jsonio::scalar_to_string(*text));
        }
        return o;
    }

    [[nodiscard]] std::optional<std::string> lookup(const Query& q) const {
        for (const auto& [known, text] : entries_) {
            if (!label_eq(known.target, q.target)) continue;
            if (known.conditions.size() != q.conditions.size()) continue;
            bool same = true;
            for (const auto& t : known.conditions) {
                auto it = std::find_if(q.conditions.begin(), q.conditions.end(),
                                       [&](const ConditionTerm& u) {
                                           return label_eq(u.variable, t.variable);
                                       });
                if (it == q.conditions.end() || it->values.size() != t.values.size()) {
                    same = false;
                    break;
                }
                for (const auto& v : t.values)
                    same = same && std::any_of(it->values.begin(), it->values.end(),
                                               [&](const std::string& w) { return label_eq(v, w); });
            }
            if (same) return text;
        }
        return std::nullopt;
    }

private:
    std::vector<std::pair<Query, std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Question generation: enumerate conditional queries over the table schema,
// keep those where some condition visibly moves the target marginal, then
// sample a fixed number with the seeded generator.

struct QuestionGenOptions {
    int n_conditions = 1;     // 0, 1, or 2
    int count = 6;
    double threshold = 0.05;  // minimum per-condition TVD shift
    std::uint64_t seed = 0;
    const TextOverrides* overrides = nullptr;
};

inline std::vector<GeneratedQuestion> generate_questions(ChatClient& client,
                                                         const PromptLibrary& prompts,
                                                         const DatasetTable& table,
                                                         const QuestionGenOptions& gen,
                                                         const PipelineOptions& opts,
                                                         PipelineTrace& trace) {
    if (gen.n_conditions < 0 || gen.n_conditions > 2)
        throw std::invalid_argument("n_conditions must be 0, 1, or 2");
    if (gen.count < 1) throw std::invalid_argument("count must be at least 1");
    const Schema& schema = table.schema;
    if (schema.target_name.empty())
        throw std::invalid_argument("the schema file does not designate a target variable");
    const Variable& target = schema.target();
    if (!target.multi_valued())
        throw std::invalid_argument("the designated target has fewer than two values");

    const Distribution marginal = reference_distribution(table, Query{target.name, {}, ""});

    // candidate condition variables in schema order
    std::vector<std::size_t> cond_vars;
    for (std::size_t v = 0; v < schema.variables.size(); ++v)
        if (schema.variables[v].multi_valued() && !label_eq(schema.variables[v].name, target.name))
            cond_vars.push_back(v);

    auto shift_passes = [&](const ConditionTerm& term) {
        try {
            Distribution moved = reference_distribution(table, Query{target.name, {term}, ""});
            return tvd(moved, marginal) >= gen.threshold;
        } catch (const UnanswerableQueryError&) {
            return false;
        }
    };

    std::vector<std::vector<ConditionTerm>> pool;
    if (gen.n_conditions == 0) {
        pool.push_back({});
    } else if (gen.n_conditions == 1) {
        for (std::size_t v : cond_vars)
            for (const auto& value : schema.variables[v].values) {
                ConditionTerm term{schema.variables[v].name, {value}};
                try {
                    reference_distribution(table, Query{target.name, {term}, ""});
                } catch (const UnanswerableQueryError&) {
                    continue;
                }
                if (shift_passes(term)) pool.push_back({term});
            }
    } else {
        for (std::size_t a = 0; a < cond_vars.size(); ++a)
            for (std::size_t b = a + 1; b < cond_vars.size(); ++b) {
                const Variable& va = schema.variables[cond_vars[a]];
                const Variable& vb = schema.variables[cond_vars[b]];
                for (const auto& x : va.values)
                    for (const auto& y : vb.values) {
                        std::vector<ConditionTerm> terms{ConditionTerm{va.name, {x}},
                                                         ConditionTerm{vb.name, {y}}};
                        try {
                            reference_distribution(table, Query{target.name, terms, ""});
                        } catch (const UnanswerableQueryError&) {
                            continue;
                        }
                        if (shift_passes(terms[0]) || shift_passes(terms[1])) pool.push_back(terms);
                    }
            }
    }

    if (pool.size() < static_cast<std::size_t>(gen.count))
        throw PipelineError("question pool has only " + std::to_string(pool.size()) +
                            " entries after filtering; requested " + std::to_string(gen.count));

    Rng rng(gen.seed);
    Rng stream = rng.substream("question-sample");
    auto picks = stream.sample_without_replacement(pool.size(), static_cast<std::size_t>(gen.count));

    std::string domain = schema.domain;
    if (!table.split_label.empty()) domain += " (" + table.split_label + ")";

    std::vector<GeneratedQuestion> out;
    for (std::size_t pick : picks) {
        GeneratedQuestion q;
        q.query = Query{target.name, pool[pick], ""};
        q.reference = reference_distribution(table, q.query);
        q.n_conditions = static_cast<int>(pool[pick].size());
        q.split_label = table.split_label;
        std::optional<std::string> fixed;
        if (gen.overrides) fixed = gen.overrides->lookup(q.query);
        q.text = fixed ? *fixed
                       : generate_query_text(client, prompts, domain, target, pool[pick], opts, trace);
        q.query.text = q.text;
        out.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Interventions: controlled perturbations used to attribute pipeline
// performance. Each is the identity at its zero parameter and a pure
// function of (inputs, rng state).

// Replace k latent variables (multi-valued, neither target nor condition)
// with unused variables from the pool schema; edges follow the rename.
inline void intervene_substitute_variables(Schema& schema, std::vector<Edge>& edges, int k,
                                           const Schema& pool_schema, Rng rng,
                                           std::vector<std::string>* notes = nullptr) {
    if (k == 0) return;
    if (k < 0) throw std::invalid_argument("substitution count must be non-negative");

    auto is_condition = [&](const std::string& name) {
        return std::any_of(schema.condition_names.begin(), schema.condition_names.end(),
                           [&](const std::string& c) { return label_eq(c, name); });
    };
    std::vector<std::size_t> latents;
    for (std::size_t v = 0; v < schema.variables.size(); ++v) {
        const Variable& var = schema.variables[v];
        if (var.multi_valued() && !label_eq(var.name, schema.target_name) && !is_condition(var.name))
            latents.push_back(v);
    }
    if (latents.size() < static_cast<std::size_t>(k))
        throw PipelineError("model has " + std::to_string(latents.size()) +
                            " substitutable latent variables; need " + std::to_string(k));

    std::vector<const Variable*> pool;
    for (const auto& cand : pool_schema.variables) {
        if (!cand.multi_valued()) continue;
        const bool present = std::any_of(schema.variables.begin(), schema.variables.end(),
                                         [&](const Variable& v) { return label_eq(v.name, cand.name); });
        if (!present) pool.push_back(&cand);
    }
    if (pool.size() < static_cast<std::size_t>(k))
        throw PipelineError("replacement pool has " + std::to_string(pool.size()) +
                            " unused variables; need " + std::to_string(k));

    auto victim_picks = rng.substream("victims").sample_without_replacement(
        latents.size(), static_cast<std::size_t>(k));
    auto pool_picks = rng.substream("replacements").sample_without_replacement(
        pool.size(), static_cast<std::size_t>(k));

    for (int i = 0; i < k; ++i) {
        Variable& victim = schema.variables[latents[victim_picks[static_cast<std::size_t>(i)]]];
        const Variable& repl = *pool[pool_picks[static_cast<std::size_t>(i)]];
        for (auto& e : edges) {
            if (label_eq(e.target, victim.name)) e.target = repl.name;
            if (label_eq(e.condition, victim.name)) e.condition = repl.name;
        }
        if (notes)
            notes->push_back("substituted latent variable '" + victim.name + "' with '" + repl.name +
                             "'");
        victim = repl;
    }
}

// Swap target/condition on j seed-chosen edges (changes which conditionals
// stage (c) asks for).
inline void intervene_reverse_edges(std::vector<Edge>& edges, int j, Rng rng,
                                    std::vector<std::string>* notes = nullptr) {
    if (j == 0) return;
    if (j < 0) throw std::invalid_argument("reversal count must be non-negative");
    if (static_cast<std::size_t>(j) > edges.size())
        throw PipelineError("model has " + std::to_string(edges.size()) + " edges; cannot reverse " +
                            std::to_string(j));
    auto picks = rng.substream("reversals").sample_without_replacement(edges.size(),
                                                                       static_cast<std::size_t>(j));
    std::sort(picks.begin(), picks.end());
    for (std::size_t idx : picks) {
        std::swap(edges[idx].target, edges[idx].condition);
        if (notes)
            notes->push_back("reversed edge to (" + edges[idx].target + " | " + edges[idx].condition +
                             ")");
    }
}

// Blend every constraint's probabilities toward either the table's
// empirical value (oracle) or a uniform-simplex draw (noise):
// b <- (1-w) b + w r. The oracle form assumes the model's variables came
// from the table's schema, so value lists line up index-for-index.
inline void intervene_interpolate(ConstraintSet& cs, const DatasetTable* table, double w,
                                  bool oracle, Rng rng,
                                  std::vector<std::string>* notes = nullptr) {
    if (w < 0.0 || w > 1.0) throw std::invalid_argument("interpolation weight must be in [0, 1]");
    if (w == 0.0) return;
    if (oracle && !table) throw std::invalid_argument("oracle interpolation needs a table");

    Rng noise = rng.substream("noise");
    for (std::size_t i = 0; i < cs.constraints.size(); ++i) {
        MomentConstraint& c = cs.constraints[i];
        std::vector<double> r;
        if (oracle) {
            Distribution ref = reference_distribution(*table, Query{c.target, c.conditions, ""});
            if (ref.probs.size() != c.target_probs.size())
                throw PipelineError("table value list for '" + c.target +
                                    "' does not match the constraint's dimension");
            r = ref.probs;
        } else {
            r = noise.substream("constraint", i).next_simplex(c.target_probs.size());
        }
        for (std::size_t k = 0; k < c.target_probs.size(); ++k)
            c.target_probs[k] = (1.0 - w) * c.target_probs[k] + w * r[k];
        c.origin = oracle ? ConstraintOrigin::Interpolated : ConstraintOrigin::Noise;
        if (notes && i == 0)
            notes->push_back(std::string("interpolated constraints toward ") +
                             (oracle ? "table values" : "simplex noise") + " at weight " +
                             std::to_string(w));
    }
}

// ---------------------------------------------------------------------------
// End-to-end scoring.

struct EvalOptions {
    std::string answerer = "pipeline"; // or "direct"
    int repeats = 3;
    std::uint64_t seed = 0;
    int n_calls = 5;                   // direct-baseline call count
    std::string intervention;          // "", substitute-variable, reverse-edge,
                                       // interpolate-oracle, interpolate-noise
    int k = 0;
    int j = 0;
    double weight = 0.0;
    PipelineOptions pipeline;
};

struct QuestionScore {
    std::size_t index = 0;
    std::string split_label;
    int n_conditions = 0;
    std::string text;
    std::vector<double> tvd_per_repeat;   // successful repeats only
    std::vector<int> estimation_calls;    // stage-(c) calls per successful repeat
    std::vector<std::string> failures;
    double tvd_mean = 0.0;
};

struct EvalReport {
    EvalOptions options;
    std::vector<QuestionScore> rows;
    double overall = 0.0;
    std::map<std::string, double> by_split;
    std::map<int, double> by_n_conditions;
    std::size_t failure_count = 0;
    double mean_estimation_calls = 0.0;

    [[nodiscard]] ojson to_json() const {
        ojson rows_json = ojson::array();
        for (const auto& r : rows)
            rows_json.push_back(ojson{{"Index", r.index},
                                      {"Split", r.split_label},
                                      {"NConditions", r.n_conditions},
                                      {"Text", r.text},
                                      {"TvdPerRepeat", r.tvd_per_repeat},
                                      {"TvdMean", r.tvd_mean},
                                      {"EstimationCalls", r.estimation_calls},
                                      {"Failures", r.failures}});
        ojson by_split_json = ojson::object();
        for (const auto& [k, v] : by_split) by_split_json[k] = v;
        ojson by_n_json = ojson::object();
        for (const auto& [k, v] : by_n_conditions) by_n_json[std::to_string(k)] = v;
        return ojson{
            {"Metadata",
             ojson{{"Answerer", options.answerer},
                   {"Repeats", options.repeats},
                   {"Seed", options.seed},
                   {"Intervention", options.intervention},
                   {"K", options.k},
                   {"J", options.j},
                   {"Weight", options.weight},
                   {"NCalls", options.n_calls},
                   {"FilterReading", "per-condition shift against the unconditional target marginal"},
                   {"CallAveraging", "mean stage-(c) estimation calls per run, rounded up"}}},
            {"Rows", rows_json},
            {"Aggregates", ojson{{"Overall", overall},
                                 {"BySplit", by_split_json},
                                 {"ByNConditions", by_n_json}}},
            {"FailureCount", failure_count},
            {"MeanEstimationCalls", mean_estimation_calls}};
    }

    [[nodiscard]] std::string to_csv() const {
        std::string out = "index,split,n_conditions,tvd_mean,tvd_per_repeat,failures\n";
        for (const auto& r : rows) {
            std::string repeats;
            for (std::size_t i = 0; i < r.tvd_per_repeat.size(); ++i) {
                if (i) repeats += ";";
                repeats += std::to_string(r.tvd_per_repeat[i]);
            }
            out += std::to_string(r.index) + ",\"" + r.split_label + "\"," +
                   std::to_string(r.n_conditions) + "," + std::to_string(r.tvd_mean) + ",\"" +
                   repeats + "\"," + std::to_string(r.failures.size()) + "\n";
        }
        return out;
    }
};

inline EvalReport evaluate_run(ChatClient& client, const PromptLibrary& prompts,
                               const std::vector<GeneratedQuestion>& questions,
                               const DatasetTable* table, const EvalOptions& options) {
    if (options.repeats < 1) throw std::invalid_argument("repeats must be at least 1");
    const bool intervened = !options.intervention.empty();
    EvalReport report;
    report.options = options;

    Rng root(options.seed);
    std::size_t total_calls = 0;
    std::size_t call_samples = 0;

    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
        const GeneratedQuestion& question = questions[qi];
        QuestionScore row;
        row.index = qi;
        row.split_label = question.split_label;
        row.n_conditions = question.n_conditions;
        row.text = question.text;

        const Variable target{question.query.target, question.reference.support};
        for (int rep = 0; rep < options.repeats; ++rep) {
            const std::string tag = std::to_string(qi) + ":" + std::to_string(rep);
            try {
                Distribution answer;
                int est_calls = 0;
                if (options.answerer == "direct") {
                    PipelineTrace trace;
                    answer = direct_baseline(client, prompts, question.text, target,
                                             options.n_calls, options.pipeline, trace);
                } else if (options.answerer == "pipeline") {
                    PipelineOptions po = options.pipeline;
                    if (intervened) {
                        // intervention runs leave the query's own constraint out
                        po.omit_query_constraint = true;
                        if (options.intervention == "substitute-variable") {
                            if (!po.restricted_schema)
                                throw PipelineError(
                                    "substitute-variable needs a restricted schema as the pool");
                            const Schema pool = *po.restricted_schema;
                            Rng stream = root.substream("substitute:" + tag);
                            const int k = options.k;
                            po.structure_hook = [pool, stream, k](Schema& s, std::vector<Edge>& e,
                                                                  PipelineTrace& t) {
                                intervene_substitute_variables(s, e, k, pool, stream, &t.notes);
                            };
                        } else if (options.intervention == "reverse-edge") {
                            Rng stream = root.substream("reverse:" + tag);
                            const int j = options.j;
                            po.structure_hook = [stream, j](Schema&, std::vector<Edge>& e,
                                                            PipelineTrace& t) {
                                intervene_reverse_edges(e, j, stream, &t.notes);
                            };
                        } else if (options.intervention == "interpolate-oracle" ||
                                   options.intervention == "interpolate-noise") {
                            const bool oracle = options.intervention == "interpolate-oracle";
                            if (oracle && !table)
                                throw PipelineError("interpolate-oracle needs the source table");
                            Rng stream = root.substream("interpolate:" + tag);
                            const double w = options.weight;
                            po.constraints_hook = [table, oracle, w, stream](ConstraintSet& cs,
                                                                             PipelineTrace& t) {
                                intervene_interpolate(cs, table, w, oracle, stream, &t.notes);
                            };
                        } else {
                            throw std::invalid_argument("unknown intervention: " +
                                                        options.intervention);
                        }
                    }
                    SynthesisResult result = synthesize_model(client, prompts, target,
                                                              question.query, po);
                    answer = result.answer.distribution;
                    est_calls = result.trace.stage_c_estimation_calls;
                } else {
                    throw std::invalid_argument("unknown answerer: " + options.answerer);
                }
                row.tvd_per_repeat.push_back(tvd(answer, question.reference));
                row.estimation_calls.push_back(est_calls);
                total_calls += static_cast<std::size_t>(est_calls);
                ++call_samples;
            } catch (const ReplayMismatchError&) {
                throw; // a broken fixture should fail the run, not skew the mean
            } catch (const std::exception& e) {
                row.failures.push_back("repeat " + std::to_string(rep) + ": " + e.what());
                ++report.failure_count;
            }
        }
        if (!row.tvd_per_repeat.empty()) {
            double sum = 0.0;
            for (double x : row.tvd_per_repeat) sum += x;
            row.tvd_mean = sum / static_cast<double>(row.tvd_per_repeat.size());
        }
        report.rows.push_back(std::move(row));
    }

    // aggregates over questions that produced at least one answer
    double grand = 0.0;
    std::size_t answered = 0;
    std::map<std::string, std::pair<double, std::size_t>> split_acc;
    std::map<int, std::pair<double, std::size_t>> ncond_acc;
    for (const auto& r : report.rows) {
        if (r.tvd_per_repeat.empty()) continue;
        grand += r.tvd_mean;
        ++answered;
        auto& s = split_acc[r.split_label];
        s.first += r.tvd_mean;
        ++s.second;
        auto& n = ncond_acc[r.n_conditions];
        n.first += r.tvd_mean;
        ++n.second;
    }
    report.overall = answered ? grand / static_cast<double>(answered) : 0.0;
    for (const auto& [k, v] : split_acc) report.by_split[k] = v.first / static_cast<double>(v.second);
    for (const auto& [k, v] : ncond_acc)
        report.by_n_conditions[k] = v.first / static_cast<double>(v.second);
    report.mean_estimation_calls =
        call_samples ? static_cast<double>(total_calls) / static_cast<double>(call_samples) : 0.0;
    return report;
}

// n_calls for a matched direct baseline: the pipeline's average stage-(c)
// estimation call count, rounded up.
inline int matched_call_count(const nlohmann::json& report_json) {
    const auto* mean = jsonio::find_key(report_json, {"MeanEstimationCalls"});
    if (!mean) throw IoError("report has no MeanEstimationCalls field");
    double value = jsonio::number_from(*mean);
    if (value <= 0.0) throw IoError("report's MeanEstimationCalls is not positive");
    return static_cast<int>(std::ceil(value - 1e-12));
}

} // namespace adhoc
