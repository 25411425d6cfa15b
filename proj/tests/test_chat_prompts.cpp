#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "adhoc/chat.hpp"
#include "adhoc/http_chat.hpp"
#include "adhoc/io.hpp"
#include "adhoc/prompts.hpp"
#include "support/fake_llm.hpp"

using namespace adhoc;

static ChatRequest make_request(std::string id,
                                std::vector<std::pair<std::string, std::string>> kv) {
    ChatRequest r;
    r.template_id = std::move(id);
    r.placeholders = std::move(kv);
    r.messages = {{"system", "s"}, {"user", "u"}};
    return r;
}

TEST_CASE("request fingerprints identify template and placeholder values") {
    const auto a = request_fingerprint(make_request("t", {{"x", "1"}, {"y", "2"}}));
    CHECK(a.size() == 16);
    for (char c : a) CHECK(std::string("0123456789abcdef").find(c) != std::string::npos);

    SECTION("placeholder order does not matter") {
        const auto b = request_fingerprint(make_request("t", {{"y", "2"}, {"x", "1"}}));
        CHECK(a == b);
    }
    SECTION("values, keys, and template id all matter") {
        CHECK(a != request_fingerprint(make_request("t", {{"x", "1"}, {"y", "3"}})));
        CHECK(a != request_fingerprint(make_request("t", {{"x", "1"}, {"z", "2"}})));
        CHECK(a != request_fingerprint(make_request("u", {{"x", "1"}, {"y", "2"}})));
    }
    SECTION("length framing prevents concatenation aliases") {
        const auto c = request_fingerprint(make_request("t", {{"x", "1y"}, {"", "2"}}));
        CHECK(a != c);
        CHECK(request_fingerprint(make_request("ab", {})) !=
              request_fingerprint(make_request("a", {{"b", ""}})));
    }
    SECTION("messages do not enter the fingerprint") {
        auto r = make_request("t", {{"x", "1"}, {"y", "2"}});
        r.messages.push_back({"user", "more"});
        CHECK(request_fingerprint(r) == a);
    }
}

TEST_CASE("scripted client replays by fingerprint and cycles response lists") {
    const auto req1 = make_request("est", {{"q", "alpha"}});
    const auto req2 = make_request("est", {{"q", "beta"}});
    ScriptedChatClient client;
    client.add_response(request_fingerprint(req1), "first");
    client.add_response(request_fingerprint(req1), "second");
    client.add_response(request_fingerprint(req2), "other");

    CHECK(client.send(req1) == "first");
    CHECK(client.send(req1) == "second");
    CHECK(client.send(req1) == "first"); // cycles
    CHECK(client.send(req2) == "other");
    CHECK(client.send(req2) == "other");

    const auto unknown = make_request("est", {{"q", "gamma"}});
    CHECK_THROWS_AS(client.send(unknown), ReplayMismatchError);
}

TEST_CASE("recording client produces a fixture the scripted client accepts") {
    struct Upper : ChatClient {
        std::string send(const ChatRequest& r) override {
            return "reply to " + r.placeholders.at(0).second;
        }
    } inner;
    RecordingChatClient rec(inner);

    const auto req_a = make_request("t", {{"q", "a"}});
    const auto req_b = make_request("t", {{"q", "b"}});
    CHECK(rec.send(req_a) == "reply to a");
    CHECK(rec.send(req_b) == "reply to b");
    CHECK(rec.send(req_a) == "reply to a"); // same fingerprint, appended

    auto doc = rec.fixture();
    REQUIRE(doc.is_object());
    CHECK(doc.size() == 2);
    const std::string fp_a = request_fingerprint(req_a);
    REQUIRE(doc.contains(fp_a));
    CHECK(doc[fp_a]["template_id"] == "t");
    CHECK(doc[fp_a]["responses"].size() == 2);
    CHECK(doc.begin().key() == fp_a); // first-use order

    const std::string path = "/tmp/adhoc_fixture_roundtrip.json";
    rec.write(path);
    ScriptedChatClient replay;
    replay.load_file(path);
    CHECK(replay.send(req_a) == "reply to a");
    CHECK(replay.send(req_b) == "reply to b");
    std::remove(path.c_str());
}

TEST_CASE("prompt library loads template files and fills placeholders") {
    const auto prompts = PromptLibrary::load(std::string(ADHOC_SOURCE_DIR) + "/assets/prompts");
    CHECK(prompts.has("variable_proposal_system"));
    CHECK(prompts.has("estimation_system"));
    CHECK(prompts.raw("estimation_user") == "{{question}}\n\n{{values}}");

    SECTION("fill replaces every occurrence") {
        PromptLibrary lib;
        lib.set("t", "{{a}} and {{a}} then {{b}}");
        CHECK(lib.fill("t", {{"a", "x"}, {"b", "y"}}) == "x and x then y");
    }
    SECTION("unfilled placeholders are an error") {
        PromptLibrary lib;
        lib.set("t", "{{a}} {{missing}}");
        CHECK_THROWS_AS(lib.fill("t", {{"a", "x"}}), std::invalid_argument);
    }
    SECTION("literal JSON braces survive") {
        PromptLibrary lib;
        lib.set("t", "emit {\"Probability\": [0.3]} for {{a}}");
        CHECK(lib.fill("t", {{"a", "x"}}) == "emit {\"Probability\": [0.3]} for x");
    }
    SECTION("unknown template and empty directory fail loudly") {
        CHECK_THROWS_AS(prompts.raw("no_such_template"), std::invalid_argument);
        CHECK_THROWS_AS(PromptLibrary::load("/no/such/dir"), IoError);
    }
}

TEST_CASE("json extraction recovers payloads from chat responses") {
    SECTION("direct") {
        auto j = extract_json(R"({"Probability": [1, 2]})");
        REQUIRE(j);
        CHECK((*j)["Probability"][0] == 1);
    }
    SECTION("embedded in prose") {
        auto j = extract_json("Sure! Here you go: {\"a\": 1} Hope that helps.");
        REQUIRE(j);
        CHECK((*j)["a"] == 1);
    }
    SECTION("fenced code block") {
        auto j = extract_json("```json\n{\"a\": 2}\n```");
        REQUIRE(j);
        CHECK((*j)["a"] == 2);
    }
    SECTION("python-style single quotes") {
        auto j = extract_json(testing::read_fixture("transcripts/airbnb_numeric_translation.txt"));
        REQUIRE(j);
        CHECK((*j)["Probability"][0] == 30);
        CHECK((*j)["Target"]["Name"] == "Maximum Occupancy");
    }
    SECTION("no JSON at all") { CHECK_FALSE(extract_json("there is nothing here")); }
}

TEST_CASE("live client speaks the chat-completions wire format") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(R"({"choices": [{"message": {"content": "pong"}}]})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread runner([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpChatClient client("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions",
                          "test-model", "sk-test", 5);
    auto req = make_request("t", {{"q", "x"}});
    req.temperature = 0.2;
    req.max_tokens = 77;
    CHECK(client.send(req) == "pong");
    CHECK(hits == 1);
    CHECK(seen_auth == "Bearer sk-test");
    auto body = nlohmann::json::parse(seen_body);
    CHECK(body["model"] == "test-model");
    CHECK(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["temperature"] == 0.2);
    CHECK(body["max_tokens"] == 77);

    SECTION("http errors become pipeline errors") {
        HttpChatClient bad("http://127.0.0.1:" + std::to_string(port) + "/nowhere", "m", "k", 5);
        CHECK_THROWS_AS(bad.send(req), PipelineError);
    }

    server.stop();
    runner.join();
}

TEST_CASE("endpoint parsing and key sourcing") {
    HttpChatClient a("https://api.example.com", "m", "k");
    CHECK(a.base() == "https://api.example.com");
    CHECK(a.path() == "/v1/chat/completions");
    HttpChatClient b("http://localhost:8080/custom/path", "m", "k");
    CHECK(b.base() == "http://localhost:8080");
    CHECK(b.path() == "/custom/path");
    CHECK_THROWS_AS(HttpChatClient("no-scheme.example.com", "m", "k"), std::invalid_argument);

    SECTION("missing environment key is a clear error") {
        unsetenv(kApiKeyEnvVar);
        CHECK_THROWS_WITH(HttpChatClient::from_env("https://api.example.com", "m"),
                          Catch::Matchers::ContainsSubstring("ADHOC_LLM_API_KEY"));
    }
    SECTION("key is read from the environment") {
        setenv(kApiKeyEnvVar, "sk-env-test", 1);
        CHECK_NOTHROW(HttpChatClient::from_env("https://api.example.com", "m"));
        unsetenv(kApiKeyEnvVar);
    }
}
