#pragma once

#include <cstddef>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "adhoc/errors.hpp"
#include "adhoc/inference.hpp"
#include "adhoc/io.hpp"
#include "adhoc/model.hpp"
#include "adhoc/text.hpp"

namespace adhoc {

// A discretized reference table: every cell is one of its column's value
// labels. Rows are stored as value indices into the schema's lists.
struct DatasetTable {
    Schema schema;
    std::vector<std::vector<std::size_t>> rows;
    std::string split_label;
    std::size_t excluded_rows = 0;
};

namespace csv {

// RFC 4180 style: quoted fields may contain commas, newlines, and doubled
// quotes. Returns one vector of cells per record.
inline std::vector<std::vector<std::string>> parse(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string cell;
    bool quoted = false;
    bool cell_started = false;
    auto end_cell = [&]() {
        record.push_back(cell);
        cell.clear();
        cell_started = false;
    };
    auto end_record = [&]() {
        end_cell();
        bool blank = record.size() == 1 && trim(record[0]).empty();
        if (!blank) records.push_back(record);
        record.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += ch;
            }
            continue;
        }
        switch (ch) {
        case '"':
            if (!cell_started && trim(cell).empty()) {
                cell.clear();
                quoted = true;
                cell_started = true;
            } else {
                cell += ch;
            }
            break;
        case ',': end_cell(); break;
        case '\r': break;
        case '\n': end_record(); break;
        default:
            cell += ch;
            cell_started = true;
            break;
        }
    }
    if (quoted) throw IoError("CSV ends inside a quoted field");
    if (cell_started || !cell.empty() || !record.empty()) end_record();
    return records;
}

} // namespace csv

// Schema files are JSON: either a bare list of {Name, Value} or an object
// with Variables plus optional DOMAIN / Target / Split labels.
inline Schema load_schema_file(const std::string& path, std::string* split_label = nullptr) {
    nlohmann::json j = load_json_file(path);
    Schema schema = schema_from_json(j);
    if (split_label) {
        *split_label = "";
        if (const auto* s = jsonio::find_key(j, {"Split", "split"}))
            *split_label = jsonio::scalar_to_string(*s);
    }
    return schema;
}

inline DatasetTable load_table(const std::string& csv_path, const std::string& schema_path) {
    DatasetTable table;
    table.schema = load_schema_file(schema_path, &table.split_label);

    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot open table: " + csv_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto records = csv::parse(text);
    if (records.empty()) throw IoError("table is empty: " + csv_path);

    // header row: every schema variable must appear exactly once
    const auto& header = records[0];
    std::vector<std::size_t> column_of(table.schema.variables.size(),
                                       std::numeric_limits<std::size_t>::max());
    for (std::size_t col = 0; col < header.size(); ++col) {
        auto idx = table.schema.index_of(header[col]);
        if (!idx) throw IoError("table column '" + trim(header[col]) + "' is not in the schema");
        if (column_of[*idx] != std::numeric_limits<std::size_t>::max())
            throw IoError("table column '" + trim(header[col]) + "' appears twice");
        column_of[*idx] = col;
    }
    for (std::size_t v = 0; v < table.schema.variables.size(); ++v)
        if (column_of[v] == std::numeric_limits<std::size_t>::max())
            throw IoError("table is missing a column for '" + table.schema.variables[v].name + "'");

    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        std::vector<std::size_t> row(table.schema.variables.size());
        bool ok = rec.size() == header.size();
        for (std::size_t v = 0; ok && v < table.schema.variables.size(); ++v) {
            auto idx = table.schema.variables[v].value_index(rec[column_of[v]]);
            if (!idx)
                ok = false;
            else
                row[v] = *idx;
        }
        if (ok)
            table.rows.push_back(std::move(row));
        else
            ++table.excluded_rows;
    }
    if (table.rows.empty()) throw IoError("table has no valid rows: " + csv_path);
    return table;
}

// Empirical conditional frequency of the query target among rows matching
// every condition. Exact rational arithmetic (count / total) keeps results
// bit-reproducible.
inline Distribution reference_distribution(const DatasetTable& table, const Query& query) {
    const auto t_idx = table.schema.index_of(query.target);
    if (!t_idx) throw std::invalid_argument("unknown target variable: " + query.target);
    const Variable& target = table.schema.variables[*t_idx];

    struct Mask {
        std::size_t var;
        std::vector<char> allowed;
    };
    std::vector<Mask> masks;
    for (const auto& term : query.conditions) {
        const auto v_idx = table.schema.index_of(term.variable);
        if (!v_idx) throw std::invalid_argument("unknown condition variable: " + term.variable);
        const Variable& var = table.schema.variables[*v_idx];
        Mask m{*v_idx, std::vector<char>(var.values.size(), 0)};
        for (const auto& value : term.values) {
            auto k = var.value_index(value);
            if (!k)
                throw std::invalid_argument("condition value '" + value +
                                            "' does not match any value of '" + var.name + "'");
            m.allowed[*k] = 1;
        }
        masks.push_back(std::move(m));
    }

    std::vector<std::size_t> counts(target.values.size(), 0);
    std::size_t total = 0;
    for (const auto& row : table.rows) {
        bool match = true;
        for (const auto& m : masks) match = match && m.allowed[row[m.var]];
        if (!match) continue;
        ++counts[row[*t_idx]];
        ++total;
    }
    if (total == 0)
        throw UnanswerableQueryError("no table rows match the conditions of p(" + query.target + " | ...)");

    Distribution d;
    d.support = target.values;
    d.probs.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        d.probs[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    return d;
}

} // namespace adhoc
