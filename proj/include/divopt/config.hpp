#pragma once

// Flat key=value run configuration. Lines are `key = value`; `#` starts a
// comment. Unknown or repeated keys are errors so that typos never fall back
// to defaults silently.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "divopt/error.hpp"
#include "divopt/hjb2d.hpp"
#include "divopt/model.hpp"

namespace divopt {

struct RunConfig {
    std::string text;  // file contents, echoed verbatim into manifests
    std::map<std::string, std::string> entries;

    ModelParams params;
    ClaimLaw law = Exponential{1.0};
    double delta = 0.0;
    double x1_max = 0.0;
    double x2_max = 0.0;
    double tol = 1e-8;  // relative stop tolerance of value iteration
    double eps_tie = kTieTolerance;
    long paths = 100000;
    std::uint64_t seed = 1;
    double merger_cost = 0.0;
    std::optional<double> delta_1d;  // 1D solves default to `delta`
    std::optional<double> x_max_1d;
    std::string out;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_plain_number(std::string_view s, const std::string& key) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw InvalidInput("config: key '" + key + "' expects a number, got '" + std::string(s) + "'");
    return v;
}

// Accepts decimals and simple fractions such as 29/12.
inline double parse_number(std::string_view s, const std::string& key) {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos) return parse_plain_number(s, key);
    const double num = parse_plain_number(trim(s.substr(0, slash)), key);
    const double den = parse_plain_number(trim(s.substr(slash + 1)), key);
    if (den == 0.0) throw InvalidInput("config: key '" + key + "' divides by zero");
    return num / den;
}

inline long parse_count(std::string_view s, const std::string& key) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 1)
        throw InvalidInput("config: key '" + key + "' expects a positive integer, got '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_seed(std::string_view s, const std::string& key) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw InvalidInput("config: key '" + key + "' expects an unsigned integer, got '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "c1",       "c2",     "b1",      "b2",          "lambda",        "q",
        "claim.kind", "claim.rate", "claim.atom", "delta", "x1_max",    "x2_max",
        "tol",      "eps_tie", "paths",  "seed",        "merger.cost",   "solve1d.delta",
        "solve1d.x_max", "out"};
    return keys;
}

/// Parses configuration text. Throws InvalidInput on any malformed, missing,
/// unknown or repeated key, and on parameters validate_params rejects.
inline RunConfig parse_config(std::string text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key(detail::trim(s.substr(0, eq)));
        const std::string value(detail::trim(s.substr(eq + 1)));
        if (!config_keys().count(key)) throw InvalidInput("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (value.empty()) throw InvalidInput("config line " + std::to_string(lineno) + ": empty value for '" + key + "'");
        if (!cfg.entries.emplace(key, value).second)
            throw InvalidInput("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    }

    const auto& e = cfg.entries;
    auto has = [&](const char* k) { return e.count(k) != 0; };
    auto num = [&](const char* k) {
        if (!has(k)) throw InvalidInput(std::string("config: missing key '") + k + "'");
        return detail::parse_number(e.at(k), k);
    };

    cfg.params = {num("c1"), num("c2"), num("b1"), num("b2"), num("lambda"), num("q")};
    validate_params(cfg.params);

    if (!has("claim.kind")) throw InvalidInput("config: missing key 'claim.kind'");
    const std::string& kind = e.at("claim.kind");
    if (kind == "exponential" || kind == "erlang2") {
        if (has("claim.atom")) throw InvalidInput("config: claim.atom is only valid for deterministic claims");
        const double rate = num("claim.rate");
        if (!(rate > 0.0)) throw InvalidInput("config: claim.rate must be positive");
        cfg.law = kind == "exponential" ? ClaimLaw(Exponential{rate}) : ClaimLaw(Erlang2{rate});
    } else if (kind == "deterministic") {
        if (has("claim.rate")) throw InvalidInput("config: claim.rate is not valid for deterministic claims");
        const double atom = num("claim.atom");
        if (!(atom > 0.0)) throw InvalidInput("config: claim.atom must be positive");
        cfg.law = Deterministic{atom};
    } else {
        throw InvalidInput("config: claim.kind must be exponential, erlang2 or deterministic, got '" + kind + "'");
    }

    cfg.delta = num("delta");
    cfg.x1_max = num("x1_max");
    cfg.x2_max = num("x2_max");
    if (!(cfg.delta > 0.0)) throw InvalidInput("config: delta must be positive");
    if (!(cfg.x1_max > 0.0) || !(cfg.x2_max > 0.0)) throw InvalidInput("config: x1_max and x2_max must be positive");
    // Builds the grid once so that a window below two steps is reported here.
    make_grid_for_window(cfg.params, cfg.delta, cfg.x1_max, cfg.x2_max);

    if (has("tol")) cfg.tol = num("tol");
    if (!(cfg.tol > 0.0)) throw InvalidInput("config: tol must be positive");
    if (has("eps_tie")) cfg.eps_tie = num("eps_tie");
    if (!(cfg.eps_tie >= 0.0)) throw InvalidInput("config: eps_tie must be nonnegative");
    if (has("paths")) cfg.paths = detail::parse_count(e.at("paths"), "paths");
    if (has("seed")) cfg.seed = detail::parse_seed(e.at("seed"), "seed");
    if (has("merger.cost")) cfg.merger_cost = num("merger.cost");
    if (!(cfg.merger_cost >= 0.0)) throw InvalidInput("config: merger.cost must be nonnegative");
    if (has("solve1d.delta")) {
        cfg.delta_1d = num("solve1d.delta");
        if (!(*cfg.delta_1d > 0.0)) throw InvalidInput("config: solve1d.delta must be positive");
    }
    if (has("solve1d.x_max")) {
        cfg.x_max_1d = num("solve1d.x_max");
        if (!(*cfg.x_max_1d > 0.0)) throw InvalidInput("config: solve1d.x_max must be positive");
    }
    if (has("out")) cfg.out = e.at("out");
    cfg.text = std::move(text);
    return cfg;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot read '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

/// Grid of the 2D solve described by the config.
inline GridSpec config_grid(const RunConfig& cfg) {
    return make_grid_for_window(cfg.params, cfg.delta, cfg.x1_max, cfg.x2_max);
}

}  // namespace divopt
