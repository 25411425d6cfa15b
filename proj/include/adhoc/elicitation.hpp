#pragma once

#include <algorithm>
#include <functional>
#include <future>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adhoc/chat.hpp"
#include "adhoc/constraints.hpp"
#include "adhoc/errors.hpp"
#include "adhoc/inference.hpp"
#include "adhoc/io.hpp"
#include "adhoc/model.hpp"
#include "adhoc/prompts.hpp"
#include "adhoc/solver.hpp"
#include "adhoc/text.hpp"

namespace adhoc {

// One chat call as it happened (every retry is its own record).
struct LlmCallRecord {
    std::string template_id;
    std::vector<std::pair<std::string, std::string>> placeholders;
    std::string fingerprint;
    std::string response;
};

struct PipelineTrace {
    std::vector<LlmCallRecord> calls;
    std::vector<std::string> notes; // drops, repairs, back-offs, skips
    int stage_c_estimation_calls = 0;

    Schema schema;
    std::vector<Edge> edges;
    ConstraintSet constraints;
    std::vector<double> theta;
    SolverReport solver;
    Query query;                 // as answered (canonical labels where resolvable)
    Distribution answer;
    std::vector<std::string> backed_off;
    bool has_model = false;
    bool has_answer = false;

    [[nodiscard]] ojson to_json() const {
        ojson out;
        if (has_model) {
            out["Schema"] = schema_to_json(schema);
            out["Edges"] = edges_to_json(edges);
            auto cons = ojson::array();
            auto meta = ojson::array();
            for (const auto& c : constraints.constraints) {
                cons.push_back(constraint_to_json(schema, c));
                meta.push_back(ojson{{"Origin", std::string(to_string(c.origin))},
                                     {"Weight", c.weight},
                                     {"Source", c.source}});
            }
            out["Constraints"] = cons;
            out["ConstraintDetails"] = meta;
            out["Theta"] = theta;
            out["Solver"] = ojson{{"objective", solver.objective},
                                  {"grad_norm", solver.grad_norm},
                                  {"iterations", solver.iterations},
                                  {"converged", solver.converged},
                                  {"stop_reason", solver.stop_reason},
                                  {"residual_norms", solver.constraint_residual_norms},
                                  {"inactive_constraints", solver.inactive_constraints}};
        }
        if (has_answer) {
            out["Query"] = query_to_json(query);
            out["Answer"] = answer_to_json(query.target, answer);
            out["BackedOff"] = backed_off;
        }
        out["Notes"] = notes;
        out["StageCEstimationCalls"] = stage_c_estimation_calls;
        auto calls_json = ojson::array();
        for (const auto& c : calls) {
            ojson ph = ojson::object();
            for (const auto& [k, v] : c.placeholders) ph[k] = v;
            calls_json.push_back(ojson{{"template_id", c.template_id},
                                       {"fingerprint", c.fingerprint},
                                       {"placeholders", ph},
                                       {"response", c.response}});
        }
        out["Calls"] = calls_json;
        return out;
    }
};

struct PipelineOptions {
    double weight_c = 10.0;         // shared constraint weight
    SolverOptions solver;
    int retry_budget = 3;           // total attempts per chat call
    int parallelism = 1;            // concurrent stage-(c) constraint elicitations
    double temperature = 0.2;
    int max_tokens = 4096;
    int variable_cap = 4;           // multi-valued variables kept after stage (a)
    std::size_t value_cap = 5;      // values kept per variable
    std::uint64_t outcome_cap = 1000000;
    bool omit_query_constraint = false;
    std::optional<Schema> restricted_schema; // confine stage (a) to these variables

    // Intervention hooks: run after structure is final (post-prune) and
    // after constraints are elicited, respectively.
    std::function<void(Schema&, std::vector<Edge>&, PipelineTrace&)> structure_hook;
    std::function<void(ConstraintSet&, PipelineTrace&)> constraints_hook;
};

// ---------------------------------------------------------------------------
// Prompt-side rendering helpers (formats follow the prompt examples).

namespace elicit_detail {

inline std::string variable_block(const Variable& v) { return v.name + ": " + quoted_list(v.values); }

inline std::string bracket_block(const Variable& v) {
    return v.name + ": [" + quoted_list(v.values) + "]";
}

inline std::string condition_line(const ConditionTerm& t) {
    return t.variable + " ∈ [" + quoted_list(t.values) + "]";
}

inline std::string condition_block(const std::vector<ConditionTerm>& terms) {
    std::vector<std::string> lines;
    lines.reserve(terms.size());
    for (const auto& t : terms) lines.push_back(condition_line(t));
    return join(lines, "\n");
}

// Binds client + prompts + options and records every call into a trace.
class Caller {
public:
    Caller(ChatClient& client, const PromptLibrary& prompts, const PipelineOptions& opts)
        : client_(client), prompts_(prompts), opts_(opts) {}

    struct CallResult {
        std::string text;
        std::string fingerprint;
    };

    CallResult call(PipelineTrace& trace, const std::string& template_id,
                    std::vector<std::pair<std::string, std::string>> placeholders,
                    std::vector<ChatMessage> messages) const {
        ChatRequest req{template_id, std::move(placeholders), std::move(messages),
                        opts_.temperature, opts_.max_tokens};
        const std::string fp = request_fingerprint(req);
        std::string text = client_.send(req);
        trace.calls.push_back(LlmCallRecord{req.template_id, req.placeholders, fp, text});
        return CallResult{std::move(text), fp};
    }

    // Retry loop for calls whose output must parse. `parse` throws
    // std::invalid_argument to reject a response; each retry appends the bad
    // reply plus a corrective instruction and gets a fresh fingerprint via
    // the "attempt" placeholder.
    template <class T>
    std::pair<T, std::string> call_parsed(PipelineTrace& trace, const std::string& template_id,
                                          const std::vector<std::pair<std::string, std::string>>& placeholders,
                                          const std::vector<ChatMessage>& messages,
                                          const std::function<T(const std::string&)>& parse,
                                          const std::string& what) const {
        std::vector<ChatMessage> convo = messages;
        std::string last_error;
        for (int attempt = 1; attempt <= std::max(1, opts_.retry_budget); ++attempt) {
            auto kv = placeholders;
            if (attempt > 1) kv.emplace_back("attempt", std::to_string(attempt));
            CallResult res = call(trace, template_id, kv, convo);
            try {
                return {parse(res.text), res.fingerprint};
            } catch (const std::invalid_argument& e) {
                last_error = e.what();
                convo.push_back(ChatMessage{"assistant", res.text});
                convo.push_back(ChatMessage{"user",
                                            std::string("Your previous reply could not be used (") +
                                                e.what() +
                                                "). Reply again with exactly the required output and "
                                                "nothing else."});
            }
        }
        throw PipelineError(what + " failed after " + std::to_string(opts_.retry_budget) +
                            " attempts: " + last_error);
    }

    [[nodiscard]] const PipelineOptions& options() const { return opts_; }
    [[nodiscard]] const PromptLibrary& prompts() const { return prompts_; }

private:
    ChatClient& client_;
    const PromptLibrary& prompts_;
    const PipelineOptions& opts_;
};

inline std::string nonempty_text(const std::string& response) {
    std::string t = trim(response);
    if (t.empty()) throw std::invalid_argument("the reply was empty");
    return t;
}

} // namespace elicit_detail

// ---------------------------------------------------------------------------
// Stage (a): propose variables, translate to JSON, enforce caps.

inline Schema propose_variables(ChatClient& client, const PromptLibrary& prompts,
                                const std::string& question, const Variable& supplied_target,
                                const PipelineOptions& opts, PipelineTrace& trace) {
    elicit_detail::Caller caller(client, prompts, opts);
    const std::string supplied = elicit_detail::variable_block(supplied_target);

    std::string system = prompts.raw("variable_proposal_system");
    std::string restriction;
    if (opts.restricted_schema) {
        std::vector<std::string> lines;
        for (const auto& v : opts.restricted_schema->variables)
            lines.push_back(elicit_detail::variable_block(v));
        restriction = prompts.fill("variable_proposal_restriction",
                                   {{"schema_options", join(lines, "\n")}});
        system += "\n\n" + restriction;
    }

    const std::vector<std::pair<std::string, std::string>> placeholders{
        {"question", question}, {"supplied_variables", supplied}, {"restriction", restriction}};
    const std::vector<ChatMessage> brainstorm_messages{
        {"system", system},
        {"user", prompts.raw("variable_proposal_example_user")},
        {"assistant", prompts.raw("variable_proposal_example_assistant")},
        {"user", prompts.fill("variable_proposal_user",
                              {{"question", question}, {"supplied_variables", supplied}})}};
    auto [brainstorm, brainstorm_fp] = caller.call_parsed<std::string>(
        trace, "variable_proposal", placeholders, brainstorm_messages,
        elicit_detail::nonempty_text, "variable proposal");

    const std::vector<ChatMessage> translation_messages{
        {"system",
         prompts.fill("variable_translation_system", {{"target_name", supplied_target.name}})},
        {"user", brainstorm}};
    auto parse = std::function<VariablesPayload(const std::string&)>([](const std::string& text) {
        auto j = extract_json(text);
        if (!j) throw std::invalid_argument("no JSON object found");
        auto payload = parse_variables_payload(*j);
        for (std::size_t i = 0; i < payload.variables.size(); ++i) {
            const Variable& v = payload.variables[i];
            if (trim(v.name).empty()) throw std::invalid_argument("a variable has an empty name");
            if (v.values.empty())
                throw std::invalid_argument("variable '" + v.name + "' has no values");
            for (std::size_t a = 0; a < v.values.size(); ++a)
                for (std::size_t b = a + 1; b < v.values.size(); ++b)
                    if (label_eq(v.values[a], v.values[b]))
                        throw std::invalid_argument("variable '" + v.name + "' repeats value '" +
                                                    v.values[a] + "'");
            for (std::size_t k = i + 1; k < payload.variables.size(); ++k)
                if (label_eq(v.name, payload.variables[k].name))
                    throw std::invalid_argument("variable '" + v.name + "' appears twice");
        }
        return payload;
    });
    auto [payload, translation_fp] = caller.call_parsed<VariablesPayload>(
        trace, "variable_translation",
        {{"target_name", supplied_target.name}, {"transcript", brainstorm}}, translation_messages,
        parse, "variable translation");

    std::vector<Variable> vars = payload.variables;

    // value cap: drop excess values in proposal order
    for (auto& v : vars) {
        if (v.values.size() > opts.value_cap) {
            trace.notes.push_back("variable '" + v.name + "' exceeded the value cap; kept the first " +
                                  std::to_string(opts.value_cap) + " of " +
                                  std::to_string(v.values.size()) + " values");
            v.values.resize(opts.value_cap);
        }
    }

    // the supplied target re-enters verbatim, replacing any rephrasing of it
    std::size_t target_pos = vars.size();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (label_eq(vars[i].name, supplied_target.name)) {
            target_pos = i;
            vars.erase(vars.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    vars.insert(vars.begin() + static_cast<std::ptrdiff_t>(std::min(target_pos, vars.size())),
                supplied_target);

    // restricted mode: names must come from the restriction schema, and the
    // value lists are taken from it verbatim
    if (opts.restricted_schema) {
        std::vector<Variable> kept;
        for (auto& v : vars) {
            if (label_eq(v.name, supplied_target.name)) {
                kept.push_back(v);
                continue;
            }
            const Variable* allowed = opts.restricted_schema->find(v.name);
            if (!allowed) {
                trace.notes.push_back("variable '" + v.name +
                                      "' is outside the restricted schema; dropped");
                continue;
            }
            if (v.values.size() != allowed->values.size())
                trace.notes.push_back("variable '" + v.name +
                                      "' redefined its values; restored the schema's list");
            kept.push_back(*allowed);
        }
        vars = std::move(kept);
    }

    // multi-valued variable cap, target exempt; excess dropped in proposal order
    std::size_t multi = 0;
    for (const auto& v : vars)
        if (v.multi_valued() && !label_eq(v.name, supplied_target.name)) ++multi;
    const std::size_t target_multi = supplied_target.multi_valued() ? 1u : 0u;
    if (multi + target_multi > static_cast<std::size_t>(opts.variable_cap)) {
        const std::size_t budget = static_cast<std::size_t>(opts.variable_cap) - target_multi;
        std::vector<Variable> kept;
        std::size_t used = 0;
        for (auto& v : vars) {
            if (!v.multi_valued() || label_eq(v.name, supplied_target.name)) {
                kept.push_back(std::move(v));
            } else if (used < budget) {
                kept.push_back(std::move(v));
                ++used;
            } else {
                trace.notes.push_back("variable '" + v.name +
                                      "' dropped: over the multi-valued variable cap");
            }
        }
        vars = std::move(kept);
    }

    return build_schema(std::move(vars), payload.domain, supplied_target.name);
}

// ---------------------------------------------------------------------------
// Stage (b): propose pairwise interactions and translate them to edges.

inline std::vector<Edge> propose_interactions(ChatClient& client, const PromptLibrary& prompts,
                                              const Schema& schema, const PipelineOptions& opts,
                                              PipelineTrace& trace) {
    elicit_detail::Caller caller(client, prompts, opts);
    const Variable& target = schema.target();

    auto is_observed = [&](const Variable& v) {
        return std::any_of(schema.condition_names.begin(), schema.condition_names.end(),
                           [&](const std::string& c) { return label_eq(c, v.name); });
    };
    std::vector<std::string> observed_lines, latent_lines;
    for (const auto& v : schema.variables) {
        if (!v.multi_valued() || label_eq(v.name, target.name)) continue;
        (is_observed(v) ? observed_lines : latent_lines).push_back(elicit_detail::variable_block(v));
    }

    std::string target_block = elicit_detail::variable_block(target);
    std::string observed_block = join(observed_lines, "\n\n");
    std::string latent_block = join(latent_lines, "\n\n");
    std::string user = "**Target Variable:** \n\n" + target_block;
    if (!observed_block.empty()) user += "\n\n**Observed Variable:** \n\n" + observed_block;
    if (!latent_block.empty()) user += "\n\n**Latent Variable:** \n\n" + latent_block;

    const std::vector<std::pair<std::string, std::string>> placeholders{
        {"domain", schema.domain},
        {"target_block", target_block},
        {"observed_block", observed_block},
        {"latent_block", latent_block}};
    const std::vector<ChatMessage> proposal_messages{
        {"system", prompts.fill("interaction_proposal_system", {{"domain", schema.domain}})},
        {"user", user}};
    auto [transcript, proposal_fp] = caller.call_parsed<std::string>(
        trace, "interaction_proposal", placeholders, proposal_messages,
        elicit_detail::nonempty_text, "interaction proposal");

    // names list: non-target multi-valued variables in schema order, target last
    std::vector<std::string> names;
    for (const auto& v : schema.variables)
        if (v.multi_valued() && !label_eq(v.name, target.name)) names.push_back(v.name);
    names.push_back(target.name);
    const std::string names_line = quoted_list(names) + ";";

    const std::vector<ChatMessage> translation_messages{
        {"system", prompts.raw("interaction_translation_system")},
        {"user", prompts.fill("interaction_translation_user",
                              {{"transcript", transcript}, {"variable_names", names_line}})}};
    auto parse = std::function<std::vector<Edge>(const std::string&)>([](const std::string& text) {
        auto j = extract_json(text);
        if (!j) throw std::invalid_argument("no JSON object found");
        return parse_features_payload(*j);
    });
    auto [proposed, translation_fp] = caller.call_parsed<std::vector<Edge>>(
        trace, "interaction_translation",
        {{"transcript", transcript}, {"variable_names", names_line}}, translation_messages, parse,
        "interaction translation");

    std::vector<Edge> edges;
    auto resolves = [&](const std::string& name) {
        const Variable* v = schema.find(name);
        return v && v->multi_valued();
    };
    for (const auto& e : proposed) {
        if (!resolves(e.target) || !resolves(e.condition)) {
            trace.notes.push_back("edge (" + e.target + ", " + e.condition +
                                  ") dropped: endpoint not a multi-valued schema variable");
            continue;
        }
        if (label_eq(e.target, e.condition)) {
            trace.notes.push_back("edge (" + e.target + ", " + e.condition + ") dropped: self-loop");
            continue;
        }
        const bool dup = std::any_of(edges.begin(), edges.end(), [&](const Edge& kept) {
            return (label_eq(kept.target, e.target) && label_eq(kept.condition, e.condition)) ||
                   (label_eq(kept.target, e.condition) && label_eq(kept.condition, e.target));
        });
        if (dup) {
            trace.notes.push_back("edge (" + e.target + ", " + e.condition + ") dropped: duplicate pair");
            continue;
        }
        // canonical names from the schema
        edges.push_back(Edge{schema.find(e.target)->name, schema.find(e.condition)->name});
    }
    const std::size_t cap = schema.variables.size();
    if (edges.size() > cap) {
        trace.notes.push_back("edge list truncated from " + std::to_string(edges.size()) + " to " +
                              std::to_string(cap));
        edges.resize(cap);
    }
    return edges;
}

// ---------------------------------------------------------------------------
// Q': one natural-language question per requested conditional.

inline std::string generate_query_text(ChatClient& client, const PromptLibrary& prompts,
                                       const std::string& domain, const Variable& target,
                                       const std::vector<ConditionTerm>& conditions,
                                       const PipelineOptions& opts, PipelineTrace& trace) {
    elicit_detail::Caller caller(client, prompts, opts);
    const std::string target_block = elicit_detail::bracket_block(target);
    const std::string condition_block = elicit_detail::condition_block(conditions);
    const std::vector<ChatMessage> messages{
        {"system", prompts.raw("question_generation_system")},
        {"user", prompts.raw("question_generation_example_user")},
        {"assistant", prompts.raw("question_generation_example_assistant")},
        {"user", prompts.fill("question_generation_user", {{"domain", domain},
                                                           {"target_block", target_block},
                                                           {"condition_block", condition_block}})}};
    auto [text, fp] = caller.call_parsed<std::string>(
        trace, "question_generation",
        {{"domain", domain}, {"target_block", target_block}, {"condition_block", condition_block}},
        messages, elicit_detail::nonempty_text, "question generation");
    return text;
}

// ---------------------------------------------------------------------------
// Stage (c): per-constraint question -> estimate -> numeric translation.

namespace elicit_detail {

struct ConstraintSpec {
    std::string target;
    std::vector<ConditionTerm> conditions;
    ConstraintOrigin origin;
};

struct SpecOutcome {
    std::optional<MomentConstraint> constraint;
    PipelineTrace local; // calls + notes made while working this spec
};

inline std::string describe_spec(const ConstraintSpec& spec) {
    std::string what = "p(" + spec.target;
    if (!spec.conditions.empty()) {
        what += " | ";
        for (std::size_t i = 0; i < spec.conditions.size(); ++i) {
            if (i) what += ", ";
            what += spec.conditions[i].variable + "=" + join(spec.conditions[i].values, "/");
        }
    }
    return what + ")";
}

inline SpecOutcome elicit_one_constraint(ChatClient& client, const PromptLibrary& prompts,
                                         const Schema& schema, const ConstraintSpec& spec,
                                         const PipelineOptions& opts) {
    SpecOutcome out;
    Caller caller(client, prompts, opts);
    const Variable& target = *schema.find(spec.target);
    const std::string values = quoted_list(target.values);
    try {
        const std::string question = generate_query_text(client, prompts, schema.domain, target,
                                                         spec.conditions, opts, out.local);

        const std::vector<ChatMessage> estimate_messages{
            {"system", prompts.raw("estimation_system")},
            {"user", prompts.fill("estimation_user", {{"question", question}, {"values", values}})}};
        auto [estimate, estimate_fp] = caller.call_parsed<std::string>(
            out.local, "estimation", {{"question", question}, {"values", values}},
            estimate_messages, nonempty_text, "probability estimation");
        ++out.local.stage_c_estimation_calls;

        const std::string count = std::to_string(target.values.size());
        const std::vector<ChatMessage> translation_messages{
            {"system", prompts.fill("numeric_translation_system", {{"target_name", target.name},
                                                                   {"values", values},
                                                                   {"count", count}})},
            {"user", estimate}};
        auto parse =
            std::function<std::vector<double>(const std::string&)>([&](const std::string& text) {
                auto j = extract_json(text);
                if (!j) throw std::invalid_argument("no JSON object found");
                return normalize_probability_vector(parse_probability_payload(*j, target.values));
            });
        auto [probs, translation_fp] = caller.call_parsed<std::vector<double>>(
            out.local, "numeric_translation",
            {{"target_name", target.name}, {"values", values}, {"count", count}, {"message", estimate}},
            translation_messages, parse, "numeric translation");

        MomentConstraint c{target.name, spec.conditions, probs, opts.weight_c, spec.origin,
                           translation_fp};
        detail::validate_constraint_against(schema, c);
        out.constraint = std::move(c);
    } catch (const PipelineError& e) {
        out.local.notes.push_back("skipped constraint " + describe_spec(spec) + ": " + e.what());
    }
    return out;
}

} // namespace elicit_detail

// Elicits the full constraint set: one marginal per multi-valued variable,
// one conditional per (edge, condition value), and the query's own
// constraint last. Constraints that fail elicitation are skipped and noted,
// never invented.
inline ConstraintSet elicit_constraints(ChatClient& client, const PromptLibrary& prompts,
                                        const Schema& schema, const std::vector<Edge>& edges,
                                        const std::optional<Query>& query,
                                        const PipelineOptions& opts, PipelineTrace& trace) {
    using elicit_detail::ConstraintSpec;
    std::vector<ConstraintSpec> specs;
    for (const auto& v : schema.variables)
        if (v.multi_valued())
            specs.push_back(ConstraintSpec{v.name, {}, ConstraintOrigin::ElicitedUnary});
    for (const auto& e : edges) {
        const Variable* cond = schema.find(e.condition);
        for (const auto& value : cond->values)
            specs.push_back(ConstraintSpec{e.target,
                                           {ConditionTerm{cond->name, {value}}},
                                           ConstraintOrigin::ElicitedPairwise});
    }
    if (query && !opts.omit_query_constraint) {
        const Variable* qt = schema.find(query->target);
        if (qt && qt->multi_valued())
            specs.push_back(ConstraintSpec{qt->name, query->conditions, ConstraintOrigin::Query});
        else
            trace.notes.push_back("query constraint skipped: target '" + query->target +
                                  "' is not a multi-valued schema variable");
    }

    std::vector<elicit_detail::SpecOutcome> outcomes(specs.size());
    if (opts.parallelism <= 1 || specs.size() <= 1) {
        for (std::size_t i = 0; i < specs.size(); ++i)
            outcomes[i] = elicit_detail::elicit_one_constraint(client, prompts, schema, specs[i], opts);
    } else {
        std::counting_semaphore<> gate(opts.parallelism);
        std::vector<std::future<elicit_detail::SpecOutcome>> futures;
        futures.reserve(specs.size());
        for (std::size_t i = 0; i < specs.size(); ++i) {
            futures.push_back(std::async(std::launch::async, [&, i]() {
                gate.acquire();
                struct Release {
                    std::counting_semaphore<>* g;
                    ~Release() { g->release(); }
                } release{&gate};
                return elicit_detail::elicit_one_constraint(client, prompts, schema, specs[i], opts);
            }));
        }
        for (std::size_t i = 0; i < specs.size(); ++i) outcomes[i] = futures[i].get();
    }

    ConstraintSet cs;
    for (auto& o : outcomes) {
        trace.calls.insert(trace.calls.end(), o.local.calls.begin(), o.local.calls.end());
        trace.notes.insert(trace.notes.end(), o.local.notes.begin(), o.local.notes.end());
        trace.stage_c_estimation_calls += o.local.stage_c_estimation_calls;
        if (o.constraint) cs.constraints.push_back(std::move(*o.constraint));
    }
    return cs;
}

// ---------------------------------------------------------------------------
// The full pipeline.

struct SynthesisResult {
    FactorGraph graph; // schema + edges + fitted weights
    SolverReport solver;
    ConstraintSet constraints;
    QueryAnswer answer;
    PipelineTrace trace;
};

inline SynthesisResult synthesize_model(ChatClient& client, const PromptLibrary& prompts,
                                        const Variable& supplied_target, const Query& query,
                                        const PipelineOptions& opts = {}) {
    if (trim(query.text).empty())
        throw std::invalid_argument("synthesize_model needs the natural-language question text");
    SynthesisResult result;
    PipelineTrace& trace = result.trace;

    Schema schema = propose_variables(client, prompts, query.text, supplied_target, opts, trace);

    // Bind query conditions to the proposed schema. Unknown variables back
    // off (kept for the final answer, which re-checks); unknown value labels
    // on known variables are a hard error; conditions covering every value
    // are vacuous and drop out of the operational condition set.
    std::vector<ConditionTerm> answer_terms;   // everything the user asked for
    std::vector<ConditionTerm> active_terms;   // bound, non-vacuous
    for (const auto& term : query.conditions) {
        const Variable* v = schema.find(term.variable);
        if (!v) {
            trace.notes.push_back("condition variable '" + term.variable +
                                  "' is not in the schema; the answer backs off");
            answer_terms.push_back(term);
            continue;
        }
        ConditionTerm bound{v->name, {}};
        std::vector<char> seen(v->values.size(), 0);
        for (const auto& raw : term.values) {
            auto idx = v->value_index(raw);
            if (!idx)
                throw PipelineError("condition value '" + raw + "' does not match any value of '" +
                                    v->name + "'");
            if (!seen[*idx]) {
                seen[*idx] = 1;
                bound.values.push_back(v->values[*idx]);
            }
        }
        answer_terms.push_back(bound);
        if (bound.values.size() == v->values.size()) {
            trace.notes.push_back("condition on '" + v->name + "' covers all its values; vacuous");
        } else {
            schema.condition_names.push_back(v->name);
            active_terms.push_back(bound);
        }
    }
    validate_schema(schema);

    auto edges = propose_interactions(client, prompts, schema, opts, trace);

    auto pruned = prune_to_target_component(schema, edges);
    for (const auto& name : pruned.dropped_variables)
        trace.notes.push_back("variable '" + name + "' dropped: disconnected from the target");
    for (const auto& e : pruned.dropped_edges)
        trace.notes.push_back("edge (" + e.target + ", " + e.condition +
                              ") dropped: outside the target's component");
    schema = std::move(pruned.schema);
    edges = std::move(pruned.edges);

    if (opts.structure_hook) {
        opts.structure_hook(schema, edges, trace);
        validate_schema(schema);
    }

    // conditions may have lost their variable to pruning or a structure hook
    std::vector<ConditionTerm> query_terms;
    for (const auto& t : active_terms) {
        const Variable* v = schema.find(t.variable);
        bool usable = v != nullptr;
        if (usable)
            for (const auto& val : t.values) usable = usable && v->value_index(val).has_value();
        if (usable)
            query_terms.push_back(t);
        else
            trace.notes.push_back("condition on '" + t.variable +
                                  "' no longer binds; left out of the query constraint");
    }
    Query bound_query{schema.target_name, query_terms, query.text};

    ConstraintSet constraints =
        elicit_constraints(client, prompts, schema, edges, bound_query, opts, trace);
    if (opts.constraints_hook) {
        opts.constraints_hook(constraints, trace);
        validate_constraints(schema, constraints);
    }

    FactorGraph graph{schema, edges, {}};
    SolverOptions solver_opts = opts.solver;
    solver_opts.outcome_cap = opts.outcome_cap;
    auto [theta, report] = optimize(graph, constraints, solver_opts);
    graph.theta = theta;

    Query answer_query_spec{schema.target_name, answer_terms, query.text};
    QueryAnswer answer = answer_query(graph, theta, answer_query_spec);
    for (const auto& name : answer.backed_off)
        trace.notes.push_back("answer backed off the condition on '" + name + "'");

    trace.schema = schema;
    trace.edges = edges;
    trace.constraints = constraints;
    trace.theta = theta;
    trace.solver = report;
    trace.query = answer_query_spec;
    trace.answer = answer.distribution;
    trace.backed_off = answer.backed_off;
    trace.has_model = true;
    trace.has_answer = true;

    result.graph = std::move(graph);
    result.solver = std::move(report);
    result.constraints = std::move(constraints);
    result.answer = std::move(answer);
    return result;
}

// ---------------------------------------------------------------------------
// Direct chain-of-thought baseline: ask the question n times, translate each
// reply to numbers, average the successes.

inline Distribution direct_baseline(ChatClient& client, const PromptLibrary& prompts,
                                    const std::string& question, const Variable& target,
                                    int n_calls, const PipelineOptions& opts,
                                    PipelineTrace& trace) {
    if (n_calls <= 0) throw std::invalid_argument("direct_baseline needs n_calls >= 1");
    elicit_detail::Caller caller(client, prompts, opts);
    const std::string values = quoted_list(target.values);
    const std::string count = std::to_string(target.values.size());

    std::vector<std::vector<double>> samples;
    for (int i = 0; i < n_calls; ++i) {
        try {
            const std::vector<ChatMessage> estimate_messages{
                {"system", prompts.raw("estimation_system")},
                {"user",
                 prompts.fill("estimation_user", {{"question", question}, {"values", values}})}};
            auto [estimate, estimate_fp] = caller.call_parsed<std::string>(
                trace, "direct_estimation", {{"question", question}, {"values", values}},
                estimate_messages, elicit_detail::nonempty_text, "direct estimation");

            const std::vector<ChatMessage> translation_messages{
                {"system", prompts.fill("direct_translation_system", {{"target_name", target.name},
                                                                      {"values", values},
                                                                      {"count", count}})},
                {"user", estimate}};
            auto parse =
                std::function<std::vector<double>(const std::string&)>([&](const std::string& text) {
                    auto j = extract_json(text);
                    if (!j) throw std::invalid_argument("no JSON object found");
                    return normalize_probability_vector(parse_probability_payload(*j, target.values));
                });
            auto [probs, translation_fp] = caller.call_parsed<std::vector<double>>(
                trace, "direct_translation",
                {{"target_name", target.name}, {"values", values}, {"count", count},
                 {"message", estimate}},
                translation_messages, parse, "direct translation");
            samples.push_back(probs);
        } catch (const PipelineError& e) {
            trace.notes.push_back("direct call " + std::to_string(i + 1) + " skipped: " + e.what());
        }
    }
    if (samples.empty()) throw PipelineError("direct baseline: every call failed");

    std::vector<double> mean(target.values.size(), 0.0);
    for (const auto& s : samples)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += s[k];
    double total = 0.0;
    for (double& x : mean) {
        x /= static_cast<double>(samples.size());
        total += x;
    }
    for (double& x : mean) x /= total;
    return Distribution{target.values, mean};
}

} // namespace adhoc
