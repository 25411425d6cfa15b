#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace adhoc {

[[nodiscard]] inline std::string trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

[[nodiscard]] inline std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Canonical label comparison used everywhere labels meet: trim whitespace,
// then case-insensitive exact match. No stemming, no punctuation stripping.
[[nodiscard]] inline bool label_eq(std::string_view a, std::string_view b) {
    return lower(trim(a)) == lower(trim(b));
}

[[nodiscard]] inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Renders value labels the way prompts list them: 'a'; 'b'; 'c'
[[nodiscard]] inline std::string quoted_list(const std::vector<std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += "; ";
        out += "'" + values[i] + "'";
    }
    return out;
}

[[nodiscard]] inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

} // namespace adhoc
