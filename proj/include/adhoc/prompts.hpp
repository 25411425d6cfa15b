#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adhoc/errors.hpp"

namespace adhoc {

// Prompt templates loaded from a directory of .txt files (key = file stem).
// Placeholders look like {{name}}; every slot must be filled before a
// template leaves the library.
class PromptLibrary {
public:
    static PromptLibrary load(const std::string& dir) {
        PromptLibrary lib;
        std::error_code ec;
        std::filesystem::directory_iterator it(dir, ec);
        if (ec) throw IoError("cannot open prompt directory '" + dir + "': " + ec.message());
        for (const auto& entry : it) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path());
            if (!in) throw IoError("cannot read prompt template '" + entry.path().string() + "'");
            std::ostringstream buf;
            buf << in.rdbuf();
            std::string text = buf.str();
            // files end with one newline that is not part of the template
            if (!text.empty() && text.back() == '\n') text.pop_back();
            if (!text.empty() && text.back() == '\r') text.pop_back();
            lib.templates_[entry.path().stem().string()] = std::move(text);
        }
        if (lib.templates_.empty()) throw IoError("prompt directory '" + dir + "' holds no .txt templates");
        return lib;
    }

    void set(std::string name, std::string text) { templates_[std::move(name)] = std::move(text); }

    [[nodiscard]] bool has(const std::string& name) const { return templates_.count(name) != 0; }

    [[nodiscard]] const std::string& raw(const std::string& name) const {
        auto it = templates_.find(name);
        if (it == templates_.end()) throw std::invalid_argument("unknown prompt template '" + name + "'");
        return it->second;
    }

    [[nodiscard]] std::string fill(const std::string& name,
                                   const std::vector<std::pair<std::string, std::string>>& values) const {
        std::string text = raw(name);
        for (const auto& [key, value] : values) {
            const std::string slot = "{{" + key + "}}";
            std::size_t pos = 0;
            while ((pos = text.find(slot, pos)) != std::string::npos) {
                text.replace(pos, slot.size(), value);
                pos += value.size();
            }
        }
        // catch slots left behind ({{word}}); stray braces in JSON examples
        // never follow this shape
        std::size_t pos = 0;
        while ((pos = text.find("{{", pos)) != std::string::npos) {
            std::size_t end = pos + 2;
            while (end < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[end])) || text[end] == '_'))
                ++end;
            if (end + 1 < text.size() && end > pos + 2 && text[end] == '}' && text[end + 1] == '}')
                throw std::invalid_argument("template '" + name + "' placeholder '" +
                                            text.substr(pos + 2, end - pos - 2) + "' left unfilled");
            pos += 2;
        }
        return text;
    }

private:
    std::map<std::string, std::string> templates_;
};

} // namespace adhoc
