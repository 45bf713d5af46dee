#pragma once

// NEUFE1 text dumps of nodal fields and the shared real-number formatting.
//
//   NEUFE1 <ndim> <n0> <n1> [<n2>]
//   <value>            one per line, row-major, x fastest

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "neufe/grid.hpp"

namespace neufe {

/// Shortest-safe round-trip formatting used for every real written to disk.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_real(const std::string& s) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw std::invalid_argument("not a number: '" + s + "'");
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    if (*end != '\0') throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

inline void write_field(std::ostream& os, const NodalField& field) {
    const Grid& g = field.grid();
    os << "NEUFE1 " << g.ndim();
    for (int d = 0; d < g.ndim(); ++d) os << ' ' << g.nodes_per_axis();
    os << '\n';
    for (double v : field.values()) os << format_real(v) << '\n';
}

inline NodalField read_field(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("NEUFE1: empty input");
    std::istringstream hs(header);
    std::string magic;
    int ndim = 0;
    hs >> magic >> ndim;
    if (magic != "NEUFE1") throw std::runtime_error("NEUFE1: bad magic '" + magic + "'");
    if (ndim != 2 && ndim != 3) throw std::runtime_error("NEUFE1: bad ndim");
    int n0 = 0;
    for (int d = 0; d < ndim; ++d) {
        int n = 0;
        if (!(hs >> n)) throw std::runtime_error("NEUFE1: truncated header");
        if (d == 0) n0 = n;
        if (n != n0) throw std::runtime_error("NEUFE1: only equal node counts per axis are supported");
    }
    const Grid grid = make_grid(ndim, n0 - 1);
    NodalField field(grid);
    std::string line;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("NEUFE1: truncated data");
        field[i] = parse_real(line);
    }
    return field;
}

inline void save_field(const std::string& path, const NodalField& field) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_field(os, field);
}

inline NodalField load_field(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_field(is);
}

}  // namespace neufe
