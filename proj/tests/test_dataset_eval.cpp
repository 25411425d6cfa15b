#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <functional>

#include "adhoc/evaluation.hpp"
#include "adhoc/prompts.hpp"
#include "support/fake_llm.hpp"

using namespace adhoc;

namespace {

struct InlineClient : ChatClient {
    std::function<std::string(const ChatRequest&)> fn;
    explicit InlineClient(std::function<std::string(const ChatRequest&)> f) : fn(std::move(f)) {}
    std::string send(const ChatRequest& req) override { return fn(req); }
};

const PromptLibrary& prompts() {
    static PromptLibrary lib = PromptLibrary::load(std::string(ADHOC_SOURCE_DIR) + "/assets/prompts");
    return lib;
}

std::string placeholder(const ChatRequest& r, const std::string& key) {
    for (const auto& [k, v] : r.placeholders)
        if (k == key) return v;
    return "";
}

std::string temp_file(const std::string& name, const std::string& content) {
    std::string path = "/tmp/adhoc_ds_" + name;
    write_text_file(path, content);
    return path;
}

// 40 rows over A, B, C where B tracks A and ignores C:
// p(B) = [.5, .5], p(B | A='a0') = [.9, .1], p(B | C=*) = [.5, .5].
DatasetTable toy_table() {
    DatasetTable t;
    t.schema = build_schema({Variable{"A", {"a0", "a1"}}, Variable{"B", {"b0", "b1"}},
                             Variable{"C", {"c0", "c1"}}},
                            "a toy world", "B");
    auto add = [&](std::size_t a, std::size_t b, std::size_t c, int n) {
        for (int i = 0; i < n; ++i) t.rows.push_back({a, b, c});
    };
    add(0, 0, 0, 9);
    add(0, 0, 1, 9);
    add(0, 1, 0, 1);
    add(0, 1, 1, 1);
    add(1, 0, 0, 1);
    add(1, 0, 1, 1);
    add(1, 1, 0, 9);
    add(1, 1, 1, 9);
    return t;
}

} // namespace

TEST_CASE("csv parsing handles quoting, CRLF, and blank records") {
    auto rows = csv::parse("a,b\r\n\"x, y\",\"say \"\"hi\"\"\"\n\n\"multi\nline\",z\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"a", "b"});
    CHECK(rows[1] == std::vector<std::string>{"x, y", "say \"hi\""});
    CHECK(rows[2] == std::vector<std::string>{"multi\nline", "z"});

    CHECK(csv::parse("no trailing newline").size() == 1);
    CHECK(csv::parse("").empty());
    CHECK_THROWS_AS(csv::parse("\"open quote"), IoError);
}

TEST_CASE("tables load against their schema and drop rows that do not fit") {
    std::string schema_path = temp_file(
        "schema.json",
        R"({"Variables": [{"Name": "A", "Value": ["a0", "a1"]},
                          {"Name": "B", "Value": ["b0", "b1"]}],
            "DOMAIN": "toys", "Target": "B", "Split": "train"})");

    SECTION("good rows are indexed, bad ones counted") {
        std::string csv_path = temp_file("table.csv",
                                         "B,A\n"        // column order differs from the schema
                                         "b0,a1\n"
                                         "b1,a0\n"
                                         "b0,mystery\n" // unknown cell value
                                         "b0\n");       // short row
        DatasetTable t = load_table(csv_path, schema_path);
        CHECK(t.split_label == "train");
        CHECK(t.excluded_rows == 2);
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[0] == std::vector<std::size_t>{1, 0}); // schema order: A, B
        CHECK(t.rows[1] == std::vector<std::size_t>{0, 1});
    }

    SECTION("header problems are hard errors") {
        CHECK_THROWS_AS(load_table(temp_file("t1.csv", "A,B,Extra\na0,b0,x\n"), schema_path),
                        IoError);
        CHECK_THROWS_AS(load_table(temp_file("t2.csv", "A\na0\n"), schema_path), IoError);
        CHECK_THROWS_AS(load_table(temp_file("t3.csv", "A,B,A\na0,b0,a1\n"), schema_path), IoError);
        CHECK_THROWS_AS(load_table(temp_file("t4.csv", "A,B\nbad,b0\n"), schema_path), IoError);
        CHECK_THROWS_AS(load_table("/nonexistent/table.csv", schema_path), IoError);
    }
}

TEST_CASE("reference distributions are exact row-count ratios") {
    DatasetTable t = toy_table();

    Distribution marginal = reference_distribution(t, Query{"B", {}, ""});
    CHECK(marginal.probs == std::vector<double>{0.5, 0.5});

    Distribution cond = reference_distribution(t, Query{"B", {ConditionTerm{"A", {"a0"}}}, ""});
    CHECK(cond.support == std::vector<std::string>{"b0", "b1"});
    CHECK(cond.probs == std::vector<double>{18.0 / 20.0, 2.0 / 20.0});

    SECTION("a multi-value condition keeps every matching row") {
        Distribution both =
            reference_distribution(t, Query{"B", {ConditionTerm{"A", {"a0", "a1"}}}, ""});
        CHECK(both.probs == marginal.probs);
    }

    SECTION("two conditions intersect") {
        Distribution d = reference_distribution(
            t, Query{"B", {ConditionTerm{"A", {"a0"}}, ConditionTerm{"C", {"c1"}}}, ""});
        CHECK(d.probs == std::vector<double>{9.0 / 10.0, 1.0 / 10.0});
    }

    SECTION("unmatchable conditions and unknown names fail loudly") {
        DatasetTable small = t;
        small.rows = {{0, 0, 0}};
        CHECK_THROWS_AS(
            reference_distribution(small, Query{"B", {ConditionTerm{"A", {"a1"}}}, ""}),
            UnanswerableQueryError);
        CHECK_THROWS_AS(reference_distribution(t, Query{"Nope", {}, ""}), std::invalid_argument);
        CHECK_THROWS_AS(
            reference_distribution(t, Query{"B", {ConditionTerm{"A", {"a9"}}}, ""}),
            std::invalid_argument);
    }
}

TEST_CASE("question sets round-trip through JSON") {
    GeneratedQuestion q;
    q.query = Query{"B", {ConditionTerm{"A", {"a0"}}}, "What about B?"};
    q.text = "What about B?";
    q.reference = Distribution{{"b0", "b1"}, {0.9, 0.1}};
    q.n_conditions = 1;
    q.split_label = "train";

    ojson j = questions_to_json({q});
    auto back = questions_from_json(nlohmann::json::parse(j.dump()));
    REQUIRE(back.size() == 1);
    CHECK(back[0].query.target == "B");
    REQUIRE(back[0].query.conditions.size() == 1);
    CHECK(back[0].query.conditions[0].values == std::vector<std::string>{"a0"});
    CHECK(back[0].text == "What about B?");
    CHECK(back[0].reference.probs == std::vector<double>{0.9, 0.1});
    CHECK(back[0].split_label == "train");
    CHECK(back[0].n_conditions == 1);

    SECTION("a broken entry is reported with its position") {
        ojson bad = j;
        bad["Questions"].push_back(ojson{{"Target", ojson{{"Name", "B"}}}}); // no Reference
        try {
            questions_from_json(nlohmann::json::parse(bad.dump()));
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("question entry 1") != std::string::npos);
        }
    }
}

TEST_CASE("text overrides replace generated phrasings for matching queries") {
    std::string path = temp_file("overrides.json", R"({"Overrides": [
        {"Target": {"Name": "b"}, "Conditions": [{"Name": "a", "Value": ["A0"]}],
         "Text": "hand-tuned wording"}]})");
    TextOverrides overrides = TextOverrides::load(path);

    // matching is case-insensitive on labels
    Query hit{"B", {ConditionTerm{"A", {"a0"}}}, ""};
    REQUIRE(overrides.lookup(hit).has_value());
    CHECK(*overrides.lookup(hit) == "hand-tuned wording");

    CHECK_FALSE(overrides.lookup(Query{"B", {ConditionTerm{"A", {"a1"}}}, ""}).has_value());
    CHECK_FALSE(overrides.lookup(Query{"B", {}, ""}).has_value());
    CHECK_FALSE(
        overrides.lookup(Query{"B", {ConditionTerm{"A", {"a0"}}, ConditionTerm{"C", {"c0"}}}, ""})
            .has_value());
}

TEST_CASE("question generation keeps conditions that move the target") {
    DatasetTable t = toy_table();
    t.split_label = "train";
    std::vector<std::string> asked_domains;
    InlineClient client([&](const ChatRequest& r) {
        if (r.template_id != "question_generation")
            throw std::runtime_error("unexpected template " + r.template_id);
        asked_domains.push_back(placeholder(r, "domain"));
        return "Given " + placeholder(r, "condition_block") + ", how is B distributed?";
    });

    QuestionGenOptions gen;
    gen.n_conditions = 1;
    gen.count = 2;
    gen.seed = 7;

    PipelineTrace trace;
    auto questions = generate_questions(client, prompts(), t, gen, {}, trace);
    REQUIRE(questions.size() == 2);
    for (const auto& q : questions) {
        REQUIRE(q.query.conditions.size() == 1);
        CHECK(q.query.conditions[0].variable == "A"); // C never shifts p(B)
        CHECK(q.n_conditions == 1);
        CHECK(q.split_label == "train");
        CHECK(q.query.text == q.text);
        CHECK(q.text.find("A ∈ ['a") != std::string::npos);
    }
    // both surviving pool entries got sampled, in some order
    CHECK(questions[0].query.conditions[0].values != questions[1].query.conditions[0].values);
    bool has_a0 = false;
    for (const auto& q : questions)
        if (q.query.conditions[0].values == std::vector<std::string>{"a0"}) {
            has_a0 = true;
            CHECK(q.reference.probs == std::vector<double>{0.9, 0.1});
        }
    CHECK(has_a0);
    // the split label rides along on the domain shown to the model
    REQUIRE_FALSE(asked_domains.empty());
    CHECK(asked_domains[0] == "a toy world (train)");

    SECTION("the same seed reproduces the same set") {
        PipelineTrace t2;
        auto again = generate_questions(client, prompts(), t, gen, {}, t2);
        REQUIRE(again.size() == questions.size());
        for (std::size_t i = 0; i < again.size(); ++i) {
            CHECK(question_to_json(again[i]).dump() == question_to_json(questions[i]).dump());
        }
    }

    SECTION("asking for more questions than the pool holds names the pool size") {
        QuestionGenOptions big = gen;
        big.count = 6;
        PipelineTrace t3;
        try {
            generate_questions(client, prompts(), t, big, {}, t3);
            FAIL("expected PipelineError");
        } catch (const PipelineError& e) {
            CHECK(std::string(e.what()).find("only 2 entries") != std::string::npos);
        }
    }

    SECTION("unconditional questions skip the shift filter") {
        QuestionGenOptions zero = gen;
        zero.n_conditions = 0;
        zero.count = 1;
        PipelineTrace t4;
        auto qs = generate_questions(client, prompts(), t, zero, {}, t4);
        REQUIRE(qs.size() == 1);
        CHECK(qs[0].query.conditions.empty());
        CHECK(qs[0].reference.probs == std::vector<double>{0.5, 0.5});
    }

    SECTION("pairs need only one of the two conditions to shift") {
        QuestionGenOptions pair_gen = gen;
        pair_gen.n_conditions = 2;
        pair_gen.count = 4;
        PipelineTrace t5;
        auto qs = generate_questions(client, prompts(), t, pair_gen, {}, t5);
        REQUIRE(qs.size() == 4); // all four (A, C) combos survive via A's shift
        for (const auto& q : qs) {
            REQUIRE(q.query.conditions.size() == 2);
            CHECK(q.query.conditions[0].variable == "A");
            CHECK(q.query.conditions[1].variable == "C");
        }
    }

    SECTION("overrides win over generation") {
        std::string path = temp_file("gen_overrides.json", R"({"Overrides": [
            {"Target": {"Name": "B"}, "Conditions": [{"Name": "A", "Value": ["a0"]}],
             "Text": "fixed text"},
            {"Target": {"Name": "B"}, "Conditions": [{"Name": "A", "Value": ["a1"]}],
             "Text": "fixed text too"}]})");
        TextOverrides overrides = TextOverrides::load(path);
        QuestionGenOptions with = gen;
        with.overrides = &overrides;
        PipelineTrace t6;
        auto qs = generate_questions(client, prompts(), t, with, {}, t6);
        for (const auto& q : qs) CHECK(q.text.find("fixed text") == 0);
        CHECK(t6.calls.empty()); // no chat traffic needed
    }
}

TEST_CASE("variable substitution rewires latents from the pool") {
    auto make_model = [] {
        Schema s = build_schema({Variable{"T", {"t0", "t1"}}, Variable{"Obs", {"o0", "o1"}},
                                 Variable{"L1", {"x", "y"}}, Variable{"L2", {"x", "y"}}},
                                "d", "T");
        s.condition_names = {"Obs"};
        std::vector<Edge> e{{"T", "L1"}, {"L1", "L2"}};
        return std::pair(s, e);
    };
    Schema pool = build_schema({Variable{"L1", {"x", "y"}}, Variable{"P1", {"p", "q"}},
                                Variable{"P2", {"p", "q", "r"}}, Variable{"tiny", {"only"}}},
                               "d", "");

    SECTION("k = 0 changes nothing") {
        auto [s, e] = make_model();
        auto [s0, e0] = make_model();
        intervene_substitute_variables(s, e, 0, pool, Rng(1));
        CHECK(schema_to_json(s).dump() == schema_to_json(s0).dump());
        CHECK(edges_to_json(e).dump() == edges_to_json(e0).dump());
    }

    SECTION("k = 1 replaces exactly one latent and renames its edges") {
        auto [s, e] = make_model();
        std::vector<std::string> notes;
        intervene_substitute_variables(s, e, 1, pool, Rng(1), &notes);
        REQUIRE(s.variables.size() == 4);
        CHECK(s.variables[0].name == "T");
        CHECK(s.variables[1].name == "Obs");
        int replaced = 0;
        for (const auto& v : s.variables)
            if (v.name == "P1" || v.name == "P2") ++replaced;
        CHECK(replaced == 1); // "L1" is already present, "tiny" is single-valued
        for (const auto& edge : e) {
            CHECK(s.index_of(edge.target).has_value());
            CHECK(s.index_of(edge.condition).has_value());
        }
        REQUIRE(notes.size() == 1);
        CHECK(notes[0].find("substituted latent variable") != std::string::npos);

        // same seed, same outcome
        auto [s2, e2] = make_model();
        intervene_substitute_variables(s2, e2, 1, pool, Rng(1));
        CHECK(schema_to_json(s2).dump() == schema_to_json(s).dump());
        CHECK(edges_to_json(e2).dump() == edges_to_json(e).dump());
    }

    SECTION("asking for more than the model or pool can give fails") {
        auto [s, e] = make_model();
        CHECK_THROWS_AS(intervene_substitute_variables(s, e, 3, pool, Rng(1)), PipelineError);
        auto [s2, e2] = make_model();
        Schema empty_pool = build_schema({Variable{"L1", {"x", "y"}}}, "d", "");
        CHECK_THROWS_AS(intervene_substitute_variables(s2, e2, 1, empty_pool, Rng(1)),
                        PipelineError);
        auto [s3, e3] = make_model();
        CHECK_THROWS_AS(intervene_substitute_variables(s3, e3, -1, pool, Rng(1)),
                        std::invalid_argument);
    }
}

TEST_CASE("edge reversal swaps seed-chosen pairs") {
    std::vector<Edge> edges{{"A", "B"}, {"C", "D"}, {"E", "F"}};

    SECTION("j = 0 changes nothing") {
        auto copy = edges;
        intervene_reverse_edges(copy, 0, Rng(5));
        CHECK(edges_to_json(copy).dump() == edges_to_json(edges).dump());
    }

    SECTION("j = all flips every edge") {
        auto copy = edges;
        std::vector<std::string> notes;
        intervene_reverse_edges(copy, 3, Rng(5), &notes);
        CHECK(copy[0].target == "B");
        CHECK(copy[0].condition == "A");
        CHECK(copy[2].target == "F");
        CHECK(notes.size() == 3);
    }

    SECTION("partial reversals are deterministic per seed") {
        auto one = edges, two = edges;
        intervene_reverse_edges(one, 1, Rng(5));
        intervene_reverse_edges(two, 1, Rng(5));
        CHECK(edges_to_json(one).dump() == edges_to_json(two).dump());
        int flipped = 0;
        for (std::size_t i = 0; i < edges.size(); ++i)
            if (one[i].target != edges[i].target) ++flipped;
        CHECK(flipped == 1);
    }

    SECTION("reversing more edges than exist fails") {
        auto copy = edges;
        CHECK_THROWS_AS(intervene_reverse_edges(copy, 4, Rng(5)), PipelineError);
    }
}

TEST_CASE("constraint interpolation blends toward the table or noise") {
    DatasetTable t = toy_table();
    auto make_cs = [] {
        ConstraintSet cs;
        MomentConstraint c;
        c.target = "B";
        c.target_probs = {0.3, 0.7};
        c.weight = 10.0;
        c.origin = ConstraintOrigin::ElicitedUnary;
        cs.constraints.push_back(c);
        return cs;
    };

    SECTION("w = 0 is the bit-exact identity") {
        ConstraintSet cs = make_cs();
        intervene_interpolate(cs, &t, 0.0, true, Rng(9));
        CHECK(cs.constraints[0].target_probs == std::vector<double>{0.3, 0.7});
        CHECK(cs.constraints[0].origin == ConstraintOrigin::ElicitedUnary);
    }

    SECTION("oracle w = 1 lands exactly on the table's value") {
        ConstraintSet cs = make_cs();
        std::vector<std::string> notes;
        intervene_interpolate(cs, &t, 1.0, true, Rng(9), &notes);
        CHECK(cs.constraints[0].target_probs == std::vector<double>{0.5, 0.5});
        CHECK(cs.constraints[0].origin == ConstraintOrigin::Interpolated);
        REQUIRE(notes.size() == 1);
        CHECK(notes[0].find("table values") != std::string::npos);
    }

    SECTION("oracle w = 1/2 is the midpoint, term by term") {
        ConstraintSet cs = make_cs();
        intervene_interpolate(cs, &t, 0.5, true, Rng(9));
        CHECK(cs.constraints[0].target_probs[0] == (1.0 - 0.5) * 0.3 + 0.5 * 0.5); // 0.4
        CHECK(cs.constraints[0].target_probs[1] == (1.0 - 0.5) * 0.7 + 0.5 * 0.5); // 0.6
    }

    SECTION("oracle conditional constraints look up the matching rows") {
        ConstraintSet cs = make_cs();
        cs.constraints[0].conditions = {ConditionTerm{"A", {"a0"}}};
        intervene_interpolate(cs, &t, 1.0, true, Rng(9));
        CHECK(cs.constraints[0].target_probs == std::vector<double>{0.9, 0.1});
    }

    SECTION("noise draws a simplex point, deterministically") {
        ConstraintSet one = make_cs(), two = make_cs();
        intervene_interpolate(one, nullptr, 1.0, false, Rng(9));
        intervene_interpolate(two, nullptr, 1.0, false, Rng(9));
        const auto& p = one.constraints[0].target_probs;
        CHECK(p == two.constraints[0].target_probs);
        CHECK(p.size() == 2);
        for (double x : p) {
            CHECK(x >= 0.0);
            CHECK(std::isfinite(x));
        }
        CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-12);
        CHECK(one.constraints[0].origin == ConstraintOrigin::Noise);
        ConstraintSet other = make_cs();
        intervene_interpolate(other, nullptr, 1.0, false, Rng(10));
        CHECK(other.constraints[0].target_probs != p);
    }

    SECTION("bad weights are rejected") {
        ConstraintSet cs = make_cs();
        CHECK_THROWS_AS(intervene_interpolate(cs, &t, -0.1, true, Rng(9)), std::invalid_argument);
        CHECK_THROWS_AS(intervene_interpolate(cs, &t, 1.5, true, Rng(9)), std::invalid_argument);
        CHECK_THROWS_AS(intervene_interpolate(cs, nullptr, 0.5, true, Rng(9)),
                        std::invalid_argument);
    }
}

TEST_CASE("evaluation scores answers against the reference distributions") {
    DatasetTable t = toy_table();
    t.split_label = "train";

    std::vector<GeneratedQuestion> questions;
    for (const char* value : {"a0", "a1"}) {
        GeneratedQuestion q;
        q.query = Query{"B", {ConditionTerm{"A", {value}}}, std::string("About B given ") + value};
        q.text = q.query.text;
        q.reference = reference_distribution(t, q.query);
        q.n_conditions = 1;
        q.split_label = "train";
        questions.push_back(q);
    }

    // a direct answerer that echoes each question's reference exactly
    InlineClient echo([&](const ChatRequest& r) -> std::string {
        if (r.template_id == "direct_estimation") return placeholder(r, "question");
        if (r.template_id == "direct_translation") {
            const std::string& msg = placeholder(r, "message");
            for (const auto& q : questions)
                if (q.text == msg) {
                    ojson j{{"Probability",
                             {100.0 * q.reference.probs[0], 100.0 * q.reference.probs[1]}}};
                    return j.dump();
                }
            throw std::runtime_error("unknown question: " + msg);
        }
        throw std::runtime_error("unexpected template " + r.template_id);
    });

    EvalOptions opts;
    opts.answerer = "direct";
    opts.repeats = 2;
    opts.n_calls = 1;

    EvalReport report = evaluate_run(echo, prompts(), questions, &t, opts);
    REQUIRE(report.rows.size() == 2);
    for (const auto& row : report.rows) {
        REQUIRE(row.tvd_per_repeat.size() == 2);
        for (double x : row.tvd_per_repeat) CHECK(x == 0.0);
        CHECK(row.failures.empty());
    }
    CHECK(report.overall == 0.0);
    CHECK(report.failure_count == 0);
    CHECK(report.by_split.at("train") == 0.0);
    CHECK(report.by_n_conditions.at(1) == 0.0);

    SECTION("the report serializes with its metadata") {
        ojson j = report.to_json();
        CHECK(j["Metadata"]["Answerer"] == "direct");
        CHECK(j["Metadata"]["Repeats"] == 2);
        CHECK(j["Rows"].size() == 2);
        CHECK(j["Aggregates"]["Overall"] == 0.0);
        std::string csv = report.to_csv();
        CHECK(csv.find("index,split,n_conditions") == 0);
        CHECK(csv.find("\"train\"") != std::string::npos);
    }

    SECTION("a question that keeps failing is excluded from the aggregates") {
        auto broken = questions;
        broken[1].text = broken[1].query.text = "unanswerable";
        InlineClient flaky([&](const ChatRequest& r) -> std::string {
            if (placeholder(r, "question") == "unanswerable" ||
                placeholder(r, "message") == "unanswerable")
                return "useless reply";
            return echo.fn(r);
        });
        EvalReport rep = evaluate_run(flaky, prompts(), broken, &t, opts);
        REQUIRE(rep.rows.size() == 2);
        CHECK(rep.rows[0].failures.empty());
        CHECK(rep.rows[1].tvd_per_repeat.empty());
        CHECK(rep.rows[1].failures.size() == 2);
        CHECK(rep.failure_count == 2);
        CHECK(rep.overall == 0.0); // mean over the one answered question
    }

    SECTION("a replay mismatch aborts instead of scoring") {
        ScriptedChatClient empty;
        CHECK_THROWS_AS(evaluate_run(empty, prompts(), questions, &t, opts),
                        ReplayMismatchError);
    }

    SECTION("unknown answerers are rejected per repeat") {
        EvalOptions bad = opts;
        bad.answerer = "psychic";
        EvalReport rep = evaluate_run(echo, prompts(), questions, &t, bad);
        CHECK(rep.failure_count == 4);
    }
}

TEST_CASE("matched baseline call counts round the pipeline's mean up") {
    CHECK(matched_call_count(nlohmann::json{{"MeanEstimationCalls", 22.4}}) == 23);
    CHECK(matched_call_count(nlohmann::json{{"MeanEstimationCalls", 23.0}}) == 23);
    CHECK(matched_call_count(nlohmann::json{{"MeanEstimationCalls", 1}}) == 1);
    CHECK_THROWS_AS(matched_call_count(nlohmann::json{{"Other", 1}}), IoError);
    CHECK_THROWS_AS(matched_call_count(nlohmann::json{{"MeanEstimationCalls", 0.0}}), IoError);
}
