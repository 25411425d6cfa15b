#pragma once

#include <cstdint>
#include <string>

#include "adhoc/dataset.hpp"
#include "adhoc/elicitation.hpp"
#include "adhoc/errors.hpp"
#include "adhoc/http_chat.hpp"
#include "adhoc/io.hpp"
#include "adhoc/solver.hpp"

namespace adhoc {

// One file describes a run; flags override individual fields. The API key
// is deliberately absent: it comes from ADHOC_LLM_API_KEY only.
struct RunConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    double temperature = 0.2;
    int max_tokens = 4096;
    double weight_c = 10.0;
    SolverOptions solver;
    int parallelism = 1;
    std::uint64_t seed = 0;
    int retry_budget = 3;
    int n_calls = 5;
    int repeats = 3;
    int timeout_seconds = 120;
    std::string prompts_dir = "assets/prompts";
    std::string replay_path;
    std::string record_path;
    std::string restricted_schema_path;

    void apply_json(const nlohmann::json& j) {
        if (!j.is_object()) throw IoError("config must be a JSON object");
        for (const char* banned : {"api_key", "apikey", "key", "token", "authorization"})
            if (jsonio::find_key(j, {banned}))
                throw IoError(std::string("config files must not carry credentials ('") + banned +
                              "'); set the " + kApiKeyEnvVar + " environment variable instead");
        auto str = [&](const char* k, std::string& into) {
            if (const auto* v = jsonio::find_key(j, {k})) into = jsonio::scalar_to_string(*v);
        };
        auto num = [&](const char* k, auto& into) {
            if (const auto* v = jsonio::find_key(j, {k}))
                into = static_cast<std::decay_t<decltype(into)>>(jsonio::number_from(*v));
        };
        str("endpoint", endpoint);
        str("model", model);
        num("temperature", temperature);
        num("max_tokens", max_tokens);
        num("weight_c", weight_c);
        num("parallelism", parallelism);
        num("seed", seed);
        num("retry_budget", retry_budget);
        num("n_calls", n_calls);
        num("repeats", repeats);
        num("timeout_seconds", timeout_seconds);
        str("prompts_dir", prompts_dir);
        str("replay", replay_path);
        str("record", record_path);
        str("restricted_schema", restricted_schema_path);
        num("learning_rate", solver.learning_rate);
        num("max_iters", solver.max_iters);
        num("grad_tol", solver.grad_tol);
        num("objective_tol", solver.objective_tol);
        num("max_halvings", solver.max_halvings);
        num("epsilon", solver.epsilon);
        num("outcome_cap", solver.outcome_cap);
    }

    static RunConfig load(const std::string& path) {
        RunConfig cfg;
        cfg.apply_json(load_json_file(path));
        return cfg;
    }

    [[nodiscard]] PipelineOptions pipeline_options() const {
        PipelineOptions po;
        po.weight_c = weight_c;
        po.solver = solver;
        po.retry_budget = retry_budget;
        po.parallelism = parallelism;
        po.temperature = temperature;
        po.max_tokens = max_tokens;
        po.outcome_cap = solver.outcome_cap;
        if (!restricted_schema_path.empty())
            po.restricted_schema = load_schema_file(restricted_schema_path);
        return po;
    }
};

} // namespace adhoc
