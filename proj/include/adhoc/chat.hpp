#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adhoc/errors.hpp"

namespace adhoc {

struct ChatMessage {
    std::string role; // "system", "user" or "assistant"
    std::string content;
};

// One chat-completion call. `template_id` plus the filled placeholder
// values identify the call for transcript purposes; `messages` is what
// actually goes on the wire.
struct ChatRequest {
    std::string template_id;
    std::vector<std::pair<std::string, std::string>> placeholders;
    std::vector<ChatMessage> messages;
    double temperature = 0.2;
    int max_tokens = 4096;
};

// Stable 64-bit fingerprint of (template id, placeholder values). Keys are
// sorted so assembly order cannot change the identity; lengths are framed
// so concatenation cannot alias.
[[nodiscard]] inline std::string request_fingerprint(const ChatRequest& r) {
    auto kv = r.placeholders;
    std::sort(kv.begin(), kv.end());
    std::uint64_t h = 14695981039346656037ull;
    auto feed = [&h](std::string_view s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
    };
    auto frame = [&](std::string_view s) {
        feed(std::to_string(s.size()));
        feed("|");
        feed(s);
    };
    frame(r.template_id);
    for (const auto& [k, v] : kv) {
        frame(k);
        frame(v);
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string send(const ChatRequest& request) = 0;
};

// Replays recorded responses. Each fingerprint owns an ordered response
// list; repeated identical requests walk the list and cycle at the end, so
// a rerun of the same program sees the same sequence. Requests with no
// recording fail loudly.
class ScriptedChatClient : public ChatClient {
public:
    ScriptedChatClient() = default;

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open transcript fixture '" + path + "'");
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("transcript fixture '" + path + "' is not valid JSON: " + e.what());
        }
        if (!doc.is_object()) throw IoError("transcript fixture '" + path + "' must be a JSON object");
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            std::vector<std::string> responses;
            const auto& val = it.value();
            if (val.is_string()) {
                responses.push_back(val.get<std::string>());
            } else if (val.is_array()) {
                for (const auto& x : val) responses.push_back(x.get<std::string>());
            } else if (val.is_object() && val.contains("responses")) {
                for (const auto& x : val.at("responses")) responses.push_back(x.get<std::string>());
            } else {
                throw IoError("fixture entry '" + it.key() + "' has no responses");
            }
            if (responses.empty()) throw IoError("fixture entry '" + it.key() + "' has no responses");
            entries_[it.key()] = Entry{std::move(responses), 0};
        }
    }

    void add_response(const std::string& fingerprint, std::string response) {
        entries_[fingerprint].responses.push_back(std::move(response));
    }

    std::string send(const ChatRequest& request) override {
        const std::string fp = request_fingerprint(request);
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(fp);
        if (it == entries_.end())
            throw ReplayMismatchError("no scripted response for fingerprint " + fp +
                                      " (template '" + request.template_id + "')");
        Entry& e = it->second;
        const std::string& out = e.responses[e.cursor % e.responses.size()];
        ++e.cursor;
        return out;
    }

private:
    struct Entry {
        std::vector<std::string> responses;
        std::size_t cursor = 0;
    };
    std::map<std::string, Entry> entries_;
    std::mutex mu_;
};

// Wraps any client and accumulates a replayable fixture of everything that
// passes through.
class RecordingChatClient : public ChatClient {
public:
    explicit RecordingChatClient(ChatClient& inner) : inner_(&inner) {}

    std::string send(const ChatRequest& request) override {
        std::string out = inner_->send(request);
        const std::string fp = request_fingerprint(request);
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(fp);
        if (it == entries_.end()) {
            order_.push_back(fp);
            Entry e;
            e.template_id = request.template_id;
            e.placeholders = request.placeholders;
            e.responses.push_back(out);
            entries_.emplace(fp, std::move(e));
        } else {
            it->second.responses.push_back(out);
        }
        return out;
    }

    [[nodiscard]] nlohmann::ordered_json fixture() const {
        std::lock_guard<std::mutex> lock(mu_);
        nlohmann::ordered_json doc = nlohmann::ordered_json::object();
        for (const auto& fp : order_) {
            const Entry& e = entries_.at(fp);
            nlohmann::ordered_json entry;
            entry["template_id"] = e.template_id;
            nlohmann::ordered_json ph = nlohmann::ordered_json::object();
            for (const auto& [k, v] : e.placeholders) ph[k] = v;
            entry["placeholders"] = ph;
            entry["responses"] = e.responses;
            doc[fp] = entry;
        }
        return doc;
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write transcript fixture '" + path + "'");
        out << fixture().dump(2) << "\n";
    }

private:
    struct Entry {
        std::string template_id;
        std::vector<std::pair<std::string, std::string>> placeholders;
        std::vector<std::string> responses;
    };
    ChatClient* inner_;
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;
};

} // namespace adhoc
