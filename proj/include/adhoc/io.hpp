#pragma once

#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adhoc/constraints.hpp"
#include "adhoc/errors.hpp"
#include "adhoc/inference.hpp"
#include "adhoc/model.hpp"
#include "adhoc/text.hpp"

namespace adhoc {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Canonical wire shapes. Field names here are load-bearing: fixtures, traces
// and downstream consumers key on them exactly.

inline ojson variable_to_json(const Variable& v) {
    ojson out;
    out["Name"] = v.name;
    out["Value"] = v.values;
    return out;
}

inline ojson schema_to_json(const Schema& s) {
    ojson out;
    auto vars = ojson::array();
    for (const auto& v : s.variables) vars.push_back(variable_to_json(v));
    out["Variables"] = vars;
    out["DOMAIN"] = s.domain;
    if (!s.target_name.empty()) out["Target"] = s.target_name;
    if (!s.condition_names.empty()) out["Conditions"] = s.condition_names;
    return out;
}

inline ojson edges_to_json(const std::vector<Edge>& edges) {
    ojson out;
    auto arr = ojson::array();
    for (const auto& e : edges) {
        ojson f;
        f["Target"] = ojson{{"Name", e.target}};
        f["Condition"] = ojson{{"Name", e.condition}};
        arr.push_back(f);
    }
    out["Features"] = arr;
    return out;
}

// Constraint wire shape: Target carries the schema's value labels so the
// probabilities are self-describing; unary constraints omit Condition; a
// single condition term is an object, several terms an array.
inline ojson constraint_to_json(const Schema& schema, const MomentConstraint& c) {
    const Variable* target = schema.find(c.target);
    if (!target) throw std::invalid_argument("constraint target '" + c.target + "' names no variable");
    ojson out;
    out["Target"] = ojson{{"Name", target->name}, {"Value", target->values}};
    auto term_json = [](const ConditionTerm& t) {
        return ojson{{"Name", t.variable}, {"Value", t.values}};
    };
    if (c.conditions.size() == 1) {
        out["Condition"] = term_json(c.conditions[0]);
    } else if (c.conditions.size() > 1) {
        auto arr = ojson::array();
        for (const auto& t : c.conditions) arr.push_back(term_json(t));
        out["Condition"] = arr;
    }
    out["Probability"] = c.target_probs;
    return out;
}

inline ojson answer_to_json(std::string_view target_name, const Distribution& d) {
    ojson out;
    out["Target"] = ojson{{"Name", std::string(target_name)}, {"Value", d.support}};
    out["Probability"] = d.probs;
    return out;
}

inline ojson query_to_json(const Query& q, const std::vector<std::string>& target_values = {}) {
    ojson out;
    ojson target{{"Name", q.target}};
    if (!target_values.empty()) target["Value"] = target_values;
    out["Target"] = target;
    auto arr = ojson::array();
    for (const auto& t : q.conditions) arr.push_back(ojson{{"Name", t.variable}, {"Value", t.values}});
    out["Conditions"] = arr;
    if (!q.text.empty()) out["Text"] = q.text;
    return out;
}

// ---------------------------------------------------------------------------
// Tolerant readers. Hand-written and model-written JSON drifts in casing and
// nesting; these accept the documented shape plus the common variations.

namespace jsonio {

inline const nlohmann::json* find_key(const nlohmann::json& j, std::initializer_list<const char*> names) {
    if (!j.is_object()) return nullptr;
    for (const char* n : names) {
        auto it = j.find(n);
        if (it != j.end()) return &*it;
    }
    return nullptr;
}

inline std::string scalar_to_string(const nlohmann::json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    if (j.is_number() || j.is_boolean()) return j.dump();
    throw std::invalid_argument("expected a scalar, got " + j.dump().substr(0, 80));
}

inline std::vector<std::string> string_list(const nlohmann::json& j) {
    std::vector<std::string> out;
    if (j.is_array()) {
        for (const auto& x : j) out.push_back(scalar_to_string(x));
    } else {
        out.push_back(scalar_to_string(j));
    }
    return out;
}

} // namespace jsonio

inline Variable variable_from_json(const nlohmann::json& j) {
    const auto* name = jsonio::find_key(j, {"Name", "name"});
    const auto* values = jsonio::find_key(j, {"Value", "Values", "value", "values"});
    if (!name || !values)
        throw std::invalid_argument("variable entry needs Name and Value: " + j.dump().substr(0, 120));
    return Variable{jsonio::scalar_to_string(*name), jsonio::string_list(*values)};
}

// Accepts the canonical {"Variables": [...], "DOMAIN": "..."} object or a
// bare array of variables. Target/Conditions are read when present.
inline Schema schema_from_json(const nlohmann::json& j) {
    Schema s;
    const nlohmann::json* vars = j.is_array() ? &j : jsonio::find_key(j, {"Variables", "variables"});
    if (!vars || !vars->is_array())
        throw std::invalid_argument("schema JSON needs a Variables array");
    for (const auto& v : *vars) s.variables.push_back(variable_from_json(v));
    if (const auto* d = jsonio::find_key(j, {"DOMAIN", "Domain", "domain"}))
        s.domain = jsonio::scalar_to_string(*d);
    if (const auto* t = jsonio::find_key(j, {"Target", "target"})) {
        if (t->is_string()) s.target_name = t->get<std::string>();
        else if (const auto* n = jsonio::find_key(*t, {"Name", "name"}))
            s.target_name = jsonio::scalar_to_string(*n);
    }
    if (const auto* c = jsonio::find_key(j, {"Conditions", "conditions"}))
        s.condition_names = jsonio::string_list(*c);
    validate_schema(s);
    return s;
}

inline std::vector<Edge> edges_from_json(const nlohmann::json& j) {
    const nlohmann::json* feats = j.is_array() ? &j : jsonio::find_key(j, {"Features", "features"});
    if (!feats || !feats->is_array())
        throw std::invalid_argument("edge JSON needs a Features array");
    std::vector<Edge> out;
    for (const auto& f : *feats) {
        const auto* t = jsonio::find_key(f, {"Target", "target"});
        const auto* c = jsonio::find_key(f, {"Condition", "condition"});
        if (!t || !c)
            throw std::invalid_argument("feature entry needs Target and Condition: " +
                                        f.dump().substr(0, 120));
        auto name_of = [](const nlohmann::json& x) {
            if (x.is_string()) return x.get<std::string>();
            if (const auto* n = jsonio::find_key(x, {"Name", "name"})) return jsonio::scalar_to_string(*n);
            throw std::invalid_argument("feature endpoint needs a Name: " + x.dump().substr(0, 120));
        };
        out.push_back(Edge{name_of(*t), name_of(*c)});
    }
    return out;
}

inline Query query_from_json(const nlohmann::json& j, std::vector<std::string>* target_values = nullptr) {
    Query q;
    const auto* t = jsonio::find_key(j, {"Target", "target"});
    if (!t) throw std::invalid_argument("query JSON needs a Target");
    if (t->is_string()) {
        q.target = t->get<std::string>();
    } else {
        const auto* n = jsonio::find_key(*t, {"Name", "name"});
        if (!n) throw std::invalid_argument("query Target needs a Name");
        q.target = jsonio::scalar_to_string(*n);
        if (target_values) {
            if (const auto* v = jsonio::find_key(*t, {"Value", "Values", "value", "values"}))
                *target_values = jsonio::string_list(*v);
        }
    }
    if (const auto* conds = jsonio::find_key(j, {"Conditions", "Condition", "conditions", "condition"})) {
        auto read_term = [](const nlohmann::json& x) {
            const auto* n = jsonio::find_key(x, {"Name", "name"});
            const auto* v = jsonio::find_key(x, {"Value", "Values", "value", "values"});
            if (!n || !v)
                throw std::invalid_argument("condition term needs Name and Value: " +
                                            x.dump().substr(0, 120));
            return ConditionTerm{jsonio::scalar_to_string(*n), jsonio::string_list(*v)};
        };
        if (conds->is_array())
            for (const auto& x : *conds) q.conditions.push_back(read_term(x));
        else
            q.conditions.push_back(read_term(*conds));
    }
    if (const auto* txt = jsonio::find_key(j, {"Text", "text"}))
        q.text = jsonio::scalar_to_string(*txt);
    return q;
}

// ---------------------------------------------------------------------------
// Extraction of JSON payloads from free-form model responses.

namespace jsonio {

// Cuts the body out of a fenced code block if one is present.
inline std::string strip_code_fences(const std::string& text) {
    const auto open = text.find("```");
    if (open == std::string::npos) return text;
    auto body_start = text.find('\n', open);
    if (body_start == std::string::npos) return text;
    ++body_start;
    const auto close = text.find("```", body_start);
    if (close == std::string::npos) return text;
    return text.substr(body_start, close - body_start);
}

} // namespace jsonio

// Best-effort JSON recovery from a chat response: direct parse, then the
// outermost {...} span, then the same span with single quotes swapped for
// double quotes (models regularly emit Python-style dicts).
inline std::optional<nlohmann::json> extract_json(const std::string& response) {
    const std::string text = jsonio::strip_code_fences(response);
    auto try_parse = [](const std::string& s) -> std::optional<nlohmann::json> {
        auto parsed = nlohmann::json::parse(s, nullptr, false);
        if (parsed.is_discarded()) return std::nullopt;
        return parsed;
    };
    if (auto direct = try_parse(text)) return direct;
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close <= open) return std::nullopt;
    const std::string span = text.substr(open, close - open + 1);
    if (auto spanned = try_parse(span)) return spanned;
    if (span.find('\'') != std::string::npos) {
        std::string swapped = span;
        for (char& c : swapped)
            if (c == '\'') c = '"';
        if (auto repaired = try_parse(swapped)) return repaired;
    }
    return std::nullopt;
}

struct VariablesPayload {
    std::vector<Variable> variables;
    std::string domain;
};

inline VariablesPayload parse_variables_payload(const nlohmann::json& j) {
    VariablesPayload out;
    const auto* vars = jsonio::find_key(j, {"Variables", "variables"});
    if (!vars || !vars->is_array() || vars->empty())
        throw std::invalid_argument("payload needs a non-empty Variables array");
    for (const auto& v : *vars) out.variables.push_back(variable_from_json(v));
    if (const auto* d = jsonio::find_key(j, {"DOMAIN", "Domain", "domain"}))
        out.domain = jsonio::scalar_to_string(*d);
    return out;
}

inline std::vector<Edge> parse_features_payload(const nlohmann::json& j) { return edges_from_json(j); }

namespace jsonio {

inline double number_from(const nlohmann::json& x) {
    if (x.is_number()) return x.get<double>();
    if (x.is_string()) {
        std::string s = trim(x.get<std::string>());
        if (!s.empty() && s.back() == '%') s.pop_back();
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used == trim(s).size()) return v;
        } catch (const std::exception&) {
        }
    }
    throw std::invalid_argument("expected a number, got " + x.dump().substr(0, 80));
}

} // namespace jsonio

// Pulls the Probability vector out of a numeric-translation payload. When
// the payload restates the target's value labels, probabilities are
// reordered to `expected_values`; label sets that cannot be matched up are
// an error (the model answered about something else).
inline std::vector<double> parse_probability_payload(const nlohmann::json& j,
                                                     const std::vector<std::string>& expected_values) {
    const auto* probs = jsonio::find_key(j, {"Probability", "Probabilities", "probability"});
    if (!probs || !probs->is_array())
        throw std::invalid_argument("payload needs a Probability array");
    std::vector<double> raw;
    for (const auto& x : *probs) raw.push_back(jsonio::number_from(x));
    if (raw.size() != expected_values.size())
        throw std::invalid_argument("expected " + std::to_string(expected_values.size()) +
                                    " probabilities, got " + std::to_string(raw.size()));

    const auto* target = jsonio::find_key(j, {"Target", "target"});
    const nlohmann::json* labels =
        target ? jsonio::find_key(*target, {"Value", "Values", "value", "values"}) : nullptr;
    if (!labels || !labels->is_array() || labels->size() != raw.size()) return raw;
    for (const auto& x : *labels)
        if (!x.is_string()) return raw;

    std::vector<double> ordered(raw.size());
    std::vector<char> used(raw.size(), 0);
    for (std::size_t i = 0; i < expected_values.size(); ++i) {
        bool found = false;
        for (std::size_t k = 0; k < labels->size(); ++k) {
            if (used[k] || !label_eq((*labels)[k].get<std::string>(), expected_values[i])) continue;
            ordered[i] = raw[k];
            used[k] = 1;
            found = true;
            break;
        }
        if (!found)
            throw std::invalid_argument("payload labels do not cover value '" + expected_values[i] + "'");
    }
    return ordered;
}

// ---------------------------------------------------------------------------
// File helpers.

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

} // namespace adhoc
