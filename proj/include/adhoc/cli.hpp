#pragma once

#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adhoc/chat.hpp"
#include "adhoc/config.hpp"
#include "adhoc/dataset.hpp"
#include "adhoc/elicitation.hpp"
#include "adhoc/errors.hpp"
#include "adhoc/evaluation.hpp"
#include "adhoc/http_chat.hpp"
#include "adhoc/io.hpp"
#include "adhoc/prompts.hpp"

namespace adhoc {

namespace cli_detail {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    double weight_c = 10.0;
    int n_calls = 5;
    int repeats = 3;
    int parallelism = 1;
    std::string replay_path;
    std::string record_path;
    std::string restricted_schema;
    std::string prompts_dir;
    std::string match_calls_from;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* weight_opt = nullptr;
    CLI::Option* n_calls_opt = nullptr;
    CLI::Option* repeats_opt = nullptr;
    CLI::Option* parallelism_opt = nullptr;

    void attach(CLI::App* cmd, bool with_calls) {
        cmd->add_option("--config", config_path, "run configuration JSON file");
        seed_opt = cmd->add_option("--seed", seed, "root seed for all randomized steps");
        weight_opt = cmd->add_option("--weight-c", weight_c, "shared constraint weight");
        parallelism_opt =
            cmd->add_option("--parallelism", parallelism, "concurrent constraint elicitations");
        cmd->add_option("--replay", replay_path, "transcript fixture to replay instead of live calls");
        cmd->add_option("--record", record_path, "write a replayable transcript fixture here");
        cmd->add_option("--restricted-schema", restricted_schema,
                        "schema file that confines proposed variables");
        cmd->add_option("--prompts", prompts_dir, "prompt template directory");
        if (with_calls) {
            n_calls_opt = cmd->add_option("--n-calls", n_calls, "direct-baseline call count");
            cmd->add_option("--match-calls-from", match_calls_from,
                            "report file whose mean stage-(c) call count sets --n-calls");
            repeats_opt = cmd->add_option("--repeats", repeats, "answer repetitions per question");
        }
    }

    [[nodiscard]] RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = RunConfig::load(config_path);
        if (seed_opt && seed_opt->count()) cfg.seed = seed;
        if (weight_opt && weight_opt->count()) cfg.weight_c = weight_c;
        if (n_calls_opt && n_calls_opt->count()) cfg.n_calls = n_calls;
        if (repeats_opt && repeats_opt->count()) cfg.repeats = repeats;
        if (parallelism_opt && parallelism_opt->count()) cfg.parallelism = parallelism;
        if (!replay_path.empty()) cfg.replay_path = replay_path;
        if (!record_path.empty()) cfg.record_path = record_path;
        if (!restricted_schema.empty()) cfg.restricted_schema_path = restricted_schema;
        if (!prompts_dir.empty()) cfg.prompts_dir = prompts_dir;
        if (!cfg.replay_path.empty() && !cfg.record_path.empty())
            throw std::invalid_argument("--replay and --record are mutually exclusive");
        return cfg;
    }

    [[nodiscard]] int resolve_n_calls(const RunConfig& cfg) const {
        if (!match_calls_from.empty()) return matched_call_count(load_json_file(match_calls_from));
        return cfg.n_calls;
    }
};

struct ClientBundle {
    std::unique_ptr<ChatClient> base;
    std::unique_ptr<RecordingChatClient> recorder;
    std::string record_path;

    ChatClient& active() { return recorder ? static_cast<ChatClient&>(*recorder) : *base; }

    void flush() const {
        if (recorder) recorder->write(record_path);
    }
};

inline ClientBundle make_client(const RunConfig& cfg) {
    ClientBundle bundle;
    if (!cfg.replay_path.empty()) {
        auto scripted = std::make_unique<ScriptedChatClient>();
        scripted->load_file(cfg.replay_path);
        bundle.base = std::move(scripted);
    } else {
        bundle.base = std::make_unique<HttpChatClient>(
            HttpChatClient::from_env(cfg.endpoint, cfg.model, cfg.timeout_seconds));
    }
    if (!cfg.record_path.empty()) {
        bundle.recorder = std::make_unique<RecordingChatClient>(*bundle.base);
        bundle.record_path = cfg.record_path;
    }
    return bundle;
}

inline std::vector<std::string> split_values(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cell;
    for (char c : text) {
        if (c == sep) {
            if (!trim(cell).empty()) out.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    if (!trim(cell).empty()) out.push_back(trim(cell));
    return out;
}

inline ConditionTerm parse_condition_flag(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || trim(text.substr(0, eq)).empty())
        throw std::invalid_argument("conditions look like 'Variable=value' or 'Variable=v1|v2': " +
                                    text);
    ConditionTerm term{trim(text.substr(0, eq)), split_values(text.substr(eq + 1), '|')};
    if (term.values.empty())
        throw std::invalid_argument("condition on '" + term.variable + "' names no values");
    return term;
}

inline void write_or_print(const std::string& path, const std::string& payload, std::ostream& out) {
    if (path.empty())
        out << payload;
    else
        write_text_file(path, payload);
}

struct AnswerArgs {
    std::string question;
    std::string target_name;
    std::string values;
    std::vector<std::string> condition_flags;
    std::string target_file;
    bool baseline = false;
    bool omit_query_constraint = false;
    std::string out_path;
    std::string trace_path;
    CommonOpts common;
};

inline int cmd_answer(const AnswerArgs& args, bool record_mode, std::ostream& out) {
    RunConfig cfg = args.common.resolve();
    if (record_mode && cfg.record_path.empty())
        throw std::invalid_argument("the record command needs --record <path>");

    Variable target;
    Query query;
    if (!args.target_file.empty()) {
        std::vector<std::string> support;
        query = query_from_json(load_json_file(args.target_file), &support);
        target = Variable{query.target, support};
    }
    if (!args.target_name.empty()) target.name = args.target_name;
    if (!args.values.empty()) target.values = split_values(args.values, ';');
    if (!args.question.empty()) query.text = args.question;
    for (const auto& flag : args.condition_flags)
        query.conditions.push_back(parse_condition_flag(flag));
    query.target = target.name;
    if (target.name.empty() || target.values.empty())
        throw std::invalid_argument(
            "the target needs a name and values (--target/--values or --target-file)");
    if (trim(query.text).empty())
        throw std::invalid_argument("a natural-language question is required (--question)");

    PromptLibrary prompts = PromptLibrary::load(cfg.prompts_dir);
    ClientBundle bundle = make_client(cfg);
    PipelineOptions po = cfg.pipeline_options();
    po.omit_query_constraint = po.omit_query_constraint || args.omit_query_constraint;

    ojson answer_json;
    ojson trace_json;
    if (args.baseline) {
        PipelineTrace trace;
        Distribution d = direct_baseline(bundle.active(), prompts, query.text, target,
                                         args.common.resolve_n_calls(cfg), po, trace);
        answer_json = ojson{{"Query", query_to_json(query, target.values)},
                            {"Answer", answer_to_json(target.name, d)}};
        trace_json = trace.to_json();
    } else {
        SynthesisResult result = synthesize_model(bundle.active(), prompts, target, query, po);
        answer_json = ojson{{"Query", query_to_json(result.trace.query, target.values)},
                            {"Answer", answer_to_json(result.trace.query.target,
                                                      result.answer.distribution)},
                            {"BackedOff", result.answer.backed_off}};
        trace_json = result.trace.to_json();
    }
    bundle.flush();

    write_or_print(args.out_path, answer_json.dump(2) + "\n", out);
    if (!args.out_path.empty()) out << answer_json.dump(2) << "\n";
    std::string trace_path = args.trace_path;
    if (trace_path.empty() && !args.out_path.empty()) trace_path = args.out_path + ".trace.json";
    if (!trace_path.empty()) {
        write_text_file(trace_path, trace_json.dump(2) + "\n");
        out << "trace: " << trace_path << "\n";
    }
    return 0;
}

struct GenArgs {
    std::string table_path;
    std::string schema_path;
    std::string overrides_path;
    std::string out_path;
    int n_conditions = 1;
    int count = 6;
    double threshold = 0.05;
    CommonOpts common;
};

inline int cmd_gen_questions(const GenArgs& args, std::ostream& out) {
    RunConfig cfg = args.common.resolve();
    DatasetTable table = load_table(args.table_path, args.schema_path);
    TextOverrides overrides;
    QuestionGenOptions gen;
    gen.n_conditions = args.n_conditions;
    gen.count = args.count;
    gen.threshold = args.threshold;
    gen.seed = cfg.seed;
    if (!args.overrides_path.empty()) {
        overrides = TextOverrides::load(args.overrides_path);
        gen.overrides = &overrides;
    }
    PromptLibrary prompts = PromptLibrary::load(cfg.prompts_dir);
    ClientBundle bundle = make_client(cfg);
    PipelineTrace trace;
    auto questions =
        generate_questions(bundle.active(), prompts, table, gen, cfg.pipeline_options(), trace);
    bundle.flush();
    write_or_print(args.out_path, questions_to_json(questions).dump(2) + "\n", out);
    if (!args.out_path.empty())
        out << "wrote " << questions.size() << " questions to " << args.out_path << "\n";
    return 0;
}

struct EvalArgs {
    std::string questions_path;
    std::string table_path;
    std::string schema_path;
    std::string answerer = "pipeline";
    std::string intervene;
    int k = 0;
    int j = 0;
    double weight = 0.0;
    std::string out_path;
    std::string csv_path;
    CommonOpts common;
};

inline int cmd_evaluate(const EvalArgs& args, std::ostream& out) {
    RunConfig cfg = args.common.resolve();
    auto questions = questions_from_json(load_json_file(args.questions_path));

    std::optional<DatasetTable> table;
    if (!args.table_path.empty()) {
        if (args.schema_path.empty())
            throw std::invalid_argument("--table needs --schema for the value lists");
        table = load_table(args.table_path, args.schema_path);
    }

    EvalOptions eo;
    eo.answerer = args.answerer;
    eo.repeats = cfg.repeats;
    eo.seed = cfg.seed;
    eo.n_calls = args.common.resolve_n_calls(cfg);
    eo.intervention = args.intervene == "substitute-noise" ? "interpolate-noise" : args.intervene;
    eo.k = args.k;
    eo.j = args.j;
    eo.weight = args.weight;
    eo.pipeline = cfg.pipeline_options();

    PromptLibrary prompts = PromptLibrary::load(cfg.prompts_dir);
    ClientBundle bundle = make_client(cfg);
    EvalReport report = evaluate_run(bundle.active(), prompts, questions,
                                     table ? &*table : nullptr, eo);
    bundle.flush();

    write_or_print(args.out_path, report.to_json().dump(2) + "\n", out);
    if (!args.csv_path.empty()) write_text_file(args.csv_path, report.to_csv());
    if (!args.out_path.empty())
        out << "overall mean TVD " << report.overall << " over " << report.rows.size()
            << " questions (" << report.failure_count << " failed repeats); report: "
            << args.out_path << "\n";
    return 0;
}

} // namespace cli_detail

// In-process CLI entry point. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"ad hoc probabilistic models for guesstimation questions"};
    app.require_subcommand(1);

    cli_detail::AnswerArgs answer_args;
    CLI::App* answer = app.add_subcommand("answer", "synthesize a model and answer one question");
    answer->add_option("--question", answer_args.question, "natural-language question text");
    answer->add_option("--target", answer_args.target_name, "target variable name");
    answer->add_option("--values", answer_args.values,
                       "semicolon-separated target values, e.g. \"a; b; c\"");
    answer->add_option("--condition", answer_args.condition_flags,
                       "condition as Variable=value (| separates value sets); repeatable");
    answer->add_option("--target-file", answer_args.target_file,
                       "JSON file with Target/Condition/Text instead of flags");
    answer->add_flag("--baseline", answer_args.baseline,
                     "direct chain-of-thought estimate instead of the model pipeline");
    answer->add_flag("--omit-query-constraint", answer_args.omit_query_constraint,
                     "skip the query's own moment constraint");
    answer->add_option("--out", answer_args.out_path, "answer JSON path (default: stdout)");
    answer->add_option("--trace", answer_args.trace_path, "trace JSON path");
    answer_args.common.attach(answer, true);

    cli_detail::AnswerArgs record_args;
    CLI::App* record = app.add_subcommand("record",
                                          "answer against the live endpoint while recording a "
                                          "replayable transcript");
    record->add_option("--question", record_args.question, "natural-language question text");
    record->add_option("--target", record_args.target_name, "target variable name");
    record->add_option("--values", record_args.values, "semicolon-separated target values");
    record->add_option("--condition", record_args.condition_flags,
                       "condition as Variable=value; repeatable");
    record->add_option("--target-file", record_args.target_file,
                       "JSON file with Target/Condition/Text instead of flags");
    record->add_flag("--baseline", record_args.baseline, "record the direct baseline instead");
    record->add_flag("--omit-query-constraint", record_args.omit_query_constraint,
                     "skip the query's own moment constraint");
    record->add_option("--out", record_args.out_path, "answer JSON path (default: stdout)");
    record->add_option("--trace", record_args.trace_path, "trace JSON path");
    record_args.common.attach(record, true);

    cli_detail::GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-questions",
                                       "generate evaluation questions from a reference table");
    gen->add_option("--table", gen_args.table_path, "reference CSV table")->required();
    gen->add_option("--schema", gen_args.schema_path, "schema JSON for the table")->required();
    gen->add_option("--n-conditions", gen_args.n_conditions, "conditions per question (0, 1 or 2)");
    gen->add_option("--count", gen_args.count, "questions to sample");
    gen->add_option("--threshold", gen_args.threshold, "minimum per-condition TVD shift");
    gen->add_option("--overrides", gen_args.overrides_path, "hand-corrected question texts");
    gen->add_option("--out", gen_args.out_path, "question set JSON path (default: stdout)");
    gen_args.common.attach(gen, false);

    cli_detail::EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("evaluate", "score an answerer against reference answers");
    eval->add_option("--questions", eval_args.questions_path, "question set JSON")->required();
    eval->add_option("--table", eval_args.table_path, "reference CSV (oracle interpolation)");
    eval->add_option("--schema", eval_args.schema_path, "schema JSON for the table");
    eval->add_option("--answerer", eval_args.answerer, "pipeline or direct");
    eval->add_option("--intervene", eval_args.intervene,
                     "substitute-variable, reverse-edge, interpolate-oracle or interpolate-noise");
    eval->add_option("--k", eval_args.k, "latent variables to substitute");
    eval->add_option("--j", eval_args.j, "edges to reverse");
    eval->add_option("--weight", eval_args.weight, "interpolation weight in [0, 1]");
    eval->add_option("--out", eval_args.out_path, "report JSON path (default: stdout)");
    eval->add_option("--csv", eval_args.csv_path, "also export per-question rows as CSV");
    eval_args.common.attach(eval, true);

    std::vector<const char*> argv;
    argv.push_back("adhoc");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (answer->parsed()) return cli_detail::cmd_answer(answer_args, false, out);
        if (record->parsed()) return cli_detail::cmd_answer(record_args, true, out);
        if (gen->parsed()) return cli_detail::cmd_gen_questions(gen_args, out);
        if (eval->parsed()) return cli_detail::cmd_evaluate(eval_args, out);
        err << "usage error: no command given\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        err << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "pipeline error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace adhoc
