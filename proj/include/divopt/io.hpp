#pragma once

// Artifact writers and readers: value/policy CSVs, region-map plot data,
// summary JSON.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "divopt/error.hpp"
#include "divopt/solver1d.hpp"
#include "divopt/solver2d.hpp"

namespace divopt {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write '" + path.string() + "'");
    return f;
}

// Shortest round-trip representation.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Columns: n,m,x1,x2,v.
inline void write_value_csv(const std::filesystem::path& path, const ValueField& v) {
    auto f = detail::open_out(path);
    const auto& g = v.grid();
    f << "n,m,x1,x2,v\n";
    for (int n = 0; n <= g.n_max; ++n)
        for (int m = 0; m <= g.m_max; ++m)
            f << n << ',' << m << ',' << detail::fmt(g.x1(n)) << ',' << detail::fmt(g.x2(m)) << ','
              << detail::fmt(v(n, m)) << '\n';
}

/// Reads a value CSV written for grid `g`; every grid point must appear once.
inline ValueField read_value_csv(const std::filesystem::path& path, const GridSpec& g) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("missing artifact '" + path.string() + "'");
    std::string line;
    if (!std::getline(f, line) || line != "n,m,x1,x2,v") throw InvalidInput("'" + path.string() + "' is not a value CSV");
    ValueField v(g, 0.0);
    std::vector<char> seen(g.size(), 0);
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        int n = -1, m = -1;
        double x1 = 0, x2 = 0, val = 0;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &n, &m, &x1, &x2, &val) != 5)
            throw InvalidInput("'" + path.string() + "': malformed row '" + line + "'");
        if (n < 0 || m < 0 || n > g.n_max || m > g.m_max)
            throw InvalidInput("'" + path.string() + "': point outside the configured grid");
        const std::size_t k = static_cast<std::size_t>(n) * g.cols() + m;
        if (seen[k]) throw InvalidInput("'" + path.string() + "': repeated grid point");
        seen[k] = 1;
        v(n, m) = val;
        ++rows;
    }
    if (rows != g.size()) throw InvalidInput("'" + path.string() + "' does not cover the configured grid");
    return v;
}

/// Columns: n,m,label,argmax.
inline void write_policy_csv(const std::filesystem::path& path, const PolicyField& pol, const RegionMap& regions) {
    auto f = detail::open_out(path);
    const auto& g = pol.grid();
    f << "n,m,label,argmax\n";
    for (int n = 0; n <= g.n_max; ++n)
        for (int m = 0; m <= g.m_max; ++m)
            f << n << ',' << m << ',' << to_string(regions(n, m)) << ',' << pol(n, m).str() << '\n';
}

inline int region_code(Region r) { return static_cast<int>(r); }

/// gnuplot matrix-style data: one "x1 x2 code" line per point, a blank line
/// after each x1 row.
inline void write_region_map(const std::filesystem::path& path, const RegionMap& regions) {
    auto f = detail::open_out(path);
    const auto& g = regions.grid();
    f << "# x1 x2 code;";
    for (Region r : kAllRegions) f << ' ' << region_code(r) << '=' << to_string(r);
    f << '\n';
    for (int n = 0; n <= g.n_max; ++n) {
        for (int m = 0; m <= g.m_max; ++m)
            f << detail::fmt(g.x1(n)) << ' ' << detail::fmt(g.x2(m)) << ' ' << region_code(regions(n, m)) << '\n';
        f << '\n';
    }
}

inline void write_plot_recipe(const std::filesystem::path& path, const std::string& data_file, const ModelParams& p) {
    auto f = detail::open_out(path);
    f << "# gnuplot " << path.filename().string() << "\n"
      << "set terminal pngcairo size 900,800\n"
      << "set output 'regions.png'\n"
      << "set xlabel 'x1'\nset ylabel 'x2'\n"
      << "set cbrange [-0.5:6.5]\n"
      << "set palette maxcolors 7 defined (0 'white', 1 '#1f77b4', 2 '#9ecae1', 3 '#fdae6b', 4 'black', 5 '#d62728', 6 '#2ca02c')\n"
      << "set cbtics ('C' 0, 'B0' 1, 'B1' 2, 'B2' 3, 'A0' 4, 'A1' 5, 'A2' 6)\n"
      << "set view map\n"
      << "plot '" << data_file << "' using 1:2:3 with image notitle, \\\n"
      << "     " << detail::fmt(p.b2 / p.b1) << "*x with lines lc 'gray' title 'M'\n";
}

/// Columns: x,value,label.
inline void write_1d_csv(const std::filesystem::path& path, const OneDimSolution& s) {
    auto f = detail::open_out(path);
    f << "x,value,label\n";
    for (int j = 0; j <= s.j_max(); ++j)
        f << detail::fmt(s.x(j)) << ',' << detail::fmt(s.value[static_cast<std::size_t>(j)]) << ','
          << to_string(s.labels[static_cast<std::size_t>(j)]) << '\n';
}

// Wall time is left out so that numeric artifacts are reproducible; the
// manifest records timings.
inline nlohmann::json report_json(const SolveReport& r) {
    return {{"iterations", r.iterations}, {"final_increment", r.final_increment}, {"tolerance", r.tolerance},
            {"residual", r.residual},     {"worst_decrease", r.worst_decrease},   {"mode", r.mode}};
}

inline nlohmann::json band_json(const BandStructure& b) {
    nlohmann::json iv = nlohmann::json::array();
    for (const auto& i : b.intervals) iv.push_back({{"label", to_string(i.label)}, {"lo", i.lo}, {"hi", i.hi}});
    return {{"breakpoints", b.breakpoints}, {"a_points", b.a_points}, {"intervals", iv}};
}

/// Region summary of a 2D solve. `bands` are the W-bar bands along M.
inline nlohmann::json region_summary(const Solution2D& sol, const RegionMap& regions, const BandStructure& bands) {
    nlohmann::json a0 = nlohmann::json::array();
    for (const auto& c : regions.components(Region::A0))
        a0.push_back({{"x1", c.centroid.x1}, {"x2", c.centroid.x2}, {"cells", c.cells.size()}});
    nlohmann::json counts = nlohmann::json::object();
    nlohmann::json comps = nlohmann::json::object();
    for (Region r : kAllRegions) {
        counts[to_string(r)] = regions.count(r);
        comps[to_string(r)] = regions.components(r).size();
    }
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : regions.a1_segments()) {
        segs.push_back({{"start", {s.start.x1, s.start.x2}},
                        {"end", {s.end.x1, s.end.x2}},
                        {"cells", s.cells},
                        {"slope", s.slope()},
                        {"horizontal_extent", s.horizontal_extent()}});
    }
    const auto& g = sol.value.grid();
    return {{"a0_points", a0},
            {"b0_components", comps["B0"]},
            {"residual_max", sol.report.residual},
            {"iterations", sol.report.iterations},
            {"breakpoints", bands.breakpoints},
            {"region_counts", counts},
            {"region_components", comps},
            {"a1_segments", segs},
            {"grid", {{"delta", g.delta}, {"dx1", g.dx1}, {"dx2", g.dx2}, {"n_max", g.n_max}, {"m_max", g.m_max}}},
            {"report", report_json(sol.report)}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto f = detail::open_out(path);
    f << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("missing artifact '" + path.string() + "'");
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("'" + path.string() + "': " + e.what());
    }
}

}  // namespace divopt
