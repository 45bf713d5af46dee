#pragma once

// Minimal RFC-4180 tables: mandatory header row, fields quoted only when they
// contain a comma, quote or line break, reals printed with 17 significant digits.

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neufe/field_io.hpp"

namespace neufe::driver {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) { rows.push_back(std::move(row)); }

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw std::out_of_range("csv: no column '" + name + "'");
    }

    bool operator==(const CsvTable&) const = default;
};

inline std::string csv_cell(double v) { return format_real(v); }
inline std::string csv_cell(long v) { return std::to_string(v); }
inline std::string csv_cell(int v) { return std::to_string(v); }
inline std::string csv_cell(std::size_t v) { return std::to_string(v); }
inline std::string csv_cell(const std::string& v) { return v; }
inline std::string csv_cell(const char* v) { return v; }

template <typename... Ts>
std::vector<std::string> csv_row(const Ts&... v) {
    return {csv_cell(v)...};
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        os << csv_escape(row[i]);
    }
    os << "\r\n";
}

inline void write_csv(std::ostream& os, const CsvTable& t) {
    write_csv_row(os, t.header);
    for (const auto& r : t.rows) write_csv_row(os, r);
}

inline CsvTable read_csv(std::istream& is) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool in_quotes = false, any = false;
    char ch;
    auto end_record = [&] {
        rec.push_back(field);
        records.push_back(rec);
        rec.clear();
        field.clear();
        any = false;
    };
    while (is.get(ch)) {
        if (in_quotes) {
            if (ch == '"') {
                if (is.peek() == '"') {
                    is.get(ch);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
            continue;
        }
        any = true;
        if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            rec.push_back(field);
            field.clear();
        } else if (ch == '\r') {
            if (is.peek() == '\n') is.get(ch);
            end_record();
        } else if (ch == '\n') {
            end_record();
        } else {
            field += ch;
        }
    }
    if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
    if (any) end_record();
    if (records.empty()) throw std::runtime_error("csv: missing header row");
    CsvTable t;
    t.header = records.front();
    t.rows.assign(records.begin() + 1, records.end());
    return t;
}

inline void save_csv(const std::string& path, const CsvTable& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_csv(os, t);
}

inline CsvTable load_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_csv(is);
}

}  // namespace neufe::driver
