#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "adhoc/chat.hpp"
#include "adhoc/errors.hpp"

namespace adhoc {

// Key is read from the environment only; it must never travel through
// flags, config files or logs.
inline const char* kApiKeyEnvVar = "ADHOC_LLM_API_KEY";

// Live client for an OpenAI-compatible chat-completions endpoint.
class HttpChatClient : public ChatClient {
public:
    HttpChatClient(std::string endpoint, std::string model, std::string api_key,
                   int timeout_seconds = 120)
        : model_(std::move(model)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
        split_endpoint(endpoint);
    }

    static HttpChatClient from_env(std::string endpoint, std::string model,
                                   int timeout_seconds = 120) {
        const char* key = std::getenv(kApiKeyEnvVar);
        if (!key || !*key)
            throw PipelineError(std::string(kApiKeyEnvVar) +
                                " is not set; live mode needs an API key in the environment");
        return HttpChatClient(std::move(endpoint), std::move(model), key, timeout_seconds);
    }

    std::string send(const ChatRequest& request) override {
        nlohmann::ordered_json body;
        body["model"] = model_;
        auto messages = nlohmann::ordered_json::array();
        for (const auto& m : request.messages)
            messages.push_back({{"role", m.role}, {"content", m.content}});
        body["messages"] = messages;
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;

        httplib::Client client(base_.c_str());
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw PipelineError("chat endpoint '" + base_ + "' unreachable: " +
                                httplib::to_string(res.error()));
        if (res->status != 200)
            throw PipelineError("chat endpoint returned HTTP " + std::to_string(res->status) +
                                ": " + res->body.substr(0, 500));
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw PipelineError(std::string("chat endpoint returned malformed JSON: ") + e.what());
        }
        try {
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw PipelineError("chat response carries no choices[0].message.content");
        }
    }

    [[nodiscard]] const std::string& base() const { return base_; }
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    void split_endpoint(const std::string& endpoint) {
        const auto scheme = endpoint.find("://");
        if (scheme == std::string::npos)
            throw std::invalid_argument("endpoint '" + endpoint + "' needs a scheme, e.g. http://");
        const auto slash = endpoint.find('/', scheme + 3);
        if (slash == std::string::npos) {
            base_ = endpoint;
            path_ = "/v1/chat/completions";
        } else {
            base_ = endpoint.substr(0, slash);
            path_ = endpoint.substr(slash);
        }
    }

    std::string base_;
    std::string path_;
    std::string model_;
    std::string api_key_;
    int timeout_seconds_;
};

} // namespace adhoc
