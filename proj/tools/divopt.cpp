// Command-line driver: solve2d, solve1d, simulate, validate, merger-compare.
//
// Exit codes: 0 success, 1 validation failure, 2 bad config or missing
// artifacts, 3 value iteration did not converge.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "divopt/config.hpp"
#include "divopt/io.hpp"
#include "divopt/simulate.hpp"
#include "divopt/solver1d.hpp"
#include "divopt/solver2d.hpp"
#include "divopt/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace divopt;

namespace {

struct Common {
    std::string config;
    std::string out;
    int threads = 1;
    std::string mode = "inplace";
    std::optional<std::uint64_t> seed;
};

// A run loaded from a config file or from a previous run's manifest.
struct Run {
    RunConfig cfg;
    std::string config_path;
    json replay = json::object();  // options recorded by a manifest
    fs::path out;
    SweepMode mode = SweepMode::inplace;
    int threads = 1;
};

// Explicit flags win over manifest options, which win over defaults.
template <class T>
T pick(const CLI::Option* flag, const T& flag_value, const json& replay, const char* key, const T& fallback) {
    if (flag && flag->count() > 0) return flag_value;
    if (replay.contains(key)) return replay.at(key).get<T>();
    return fallback;
}

Run load_run(const Common& c, const CLI::App& sub) {
    Run run;
    run.config_path = c.config;
    std::string text = read_text_file(c.config);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json man;
        try {
            man = json::parse(text);
        } catch (const json::exception& e) {
            throw InvalidInput("'" + c.config + "' is neither a config nor a manifest: " + e.what());
        }
        if (!man.contains("config") || !man["config"].is_string()) throw InvalidInput("manifest has no config text");
        text = man["config"].get<std::string>();
        run.replay = man.value("options", json::object());
    }
    run.cfg = parse_config(std::move(text));
    const std::string mode = pick<std::string>(sub.get_option("--mode"), c.mode, run.replay, "mode", "inplace");
    if (mode != "inplace" && mode != "jacobi") throw InvalidInput("--mode must be jacobi or inplace");
    run.mode = mode == "jacobi" ? SweepMode::jacobi : SweepMode::inplace;
    run.threads = std::max(1, c.threads);
    if (c.seed) {
        run.cfg.seed = *c.seed;
    } else if (run.replay.contains("seed")) {
        run.cfg.seed = run.replay["seed"].get<std::uint64_t>();
    }
    run.out = !c.out.empty() ? fs::path(c.out) : !run.cfg.out.empty() ? fs::path(run.cfg.out) : fs::path("out");
    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec || !fs::is_directory(run.out)) throw InvalidInput("cannot create output directory '" + run.out.string() + "'");
    return run;
}

SolveOptions solve_options(const Run& run) {
    SolveOptions so;
    so.rel_tol = run.cfg.tol;
    so.mode = run.mode;
    so.threads = run.threads;
    so.eps_tie = run.cfg.eps_tie;
    return so;
}

void write_manifest(const Run& run, const std::string& command, json options, const json& timings,
                    const std::vector<std::string>& artifacts) {
    options["mode"] = run.mode == SweepMode::jacobi ? "jacobi" : "inplace";
    options["seed"] = run.cfg.seed;
    json man{{"command", command},
             {"version", kVersion},
             {"config_path", run.config_path},
             {"config", run.cfg.text},
             {"options", options},
             {"threads", run.threads},
             {"rng", kRngName},
             {"timings", timings},
             {"artifacts", artifacts}};
    write_json(run.out / ("manifest_" + command + ".json"), man);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

OneDimSolution solve_aux(const RunConfig& cfg, AuxKind kind) {
    const OneDimProblem pr = make_auxiliary_problem(cfg.params, cfg.law, kind);
    const double delta = cfg.delta_1d.value_or(cfg.delta);
    const double x_max = cfg.x_max_1d.value_or(kind == AuxKind::wbar ? cfg.x2_max : cfg.x1_max + cfg.x2_max);
    return solve_1d(pr, delta, x_max);
}

int cmd_solve2d(const Common& c, const CLI::App& sub) {
    const auto t0 = std::chrono::steady_clock::now();
    const Run run = load_run(c, sub);
    const GridSpec g = config_grid(run.cfg);
    const DiscreteHjb hjb(run.cfg.params, run.cfg.law, g);
    const Solution2D sol = solve(hjb, solve_options(run));
    const RegionMap regions = extract_regions(sol.policy);
    const OneDimSolution wbar = solve_aux(run.cfg, AuxKind::wbar);

    write_value_csv(run.out / "value.csv", sol.value);
    write_policy_csv(run.out / "policy.csv", sol.policy, regions);
    write_region_map(run.out / "regions.dat", regions);
    write_plot_recipe(run.out / "regions.gp", "regions.dat", run.cfg.params);
    const json summary = region_summary(sol, regions, wbar.bands);
    write_json(run.out / "summary.json", summary);
    write_manifest(run, "solve2d", json::object(), {{"solve_seconds", sol.report.wall_seconds}, {"total_seconds", seconds_since(t0)}},
                   {"value.csv", "policy.csv", "regions.dat", "regions.gp", "summary.json"});

    std::printf("solve2d: %d sweeps, residual %.3e, %zu A0 point(s), %zu B0 component(s)\n", sol.report.iterations,
                sol.report.residual, summary["a0_points"].size(), summary["b0_components"].get<std::size_t>());
    for (const auto& a : summary["a0_points"])
        std::printf("  A0 (%.3f, %.3f)\n", a["x1"].get<double>(), a["x2"].get<double>());
    return 0;
}

int cmd_solve1d(const Common& c, const CLI::App& sub, const std::string& kind_flag) {
    const auto t0 = std::chrono::steady_clock::now();
    const Run run = load_run(c, sub);
    const std::string kind = pick<std::string>(sub.get_option("--kind"), kind_flag, run.replay, "kind", "wbar");
    if (kind != "wbar" && kind != "merger") throw InvalidInput("--kind must be wbar or merger");
    const OneDimSolution s = solve_aux(run.cfg, kind == "wbar" ? AuxKind::wbar : AuxKind::merger);
    write_1d_csv(run.out / ("value1d_" + kind + ".csv"), s);
    json bands = band_json(s.bands);
    bands["kind"] = kind;
    bands["labels"] = json::array();
    for (auto l : s.labels) bands["labels"].push_back(to_string(l));
    bands["delta"] = s.delta;
    bands["dx"] = s.dx;
    bands["problem"] = {{"c", s.problem.c}, {"b", s.problem.b}, {"kappa", s.problem.kappa}, {"rho", s.problem.rho}};
    bands["report"] = report_json(s.report);
    write_json(run.out / ("bands_" + kind + ".json"), bands);
    write_manifest(run, "solve1d_" + kind, {{"kind", kind}}, {{"total_seconds", seconds_since(t0)}},
                   {"value1d_" + kind + ".csv", "bands_" + kind + ".json"});
    std::printf("solve1d %s: %d sweeps, breakpoints", kind.c_str(), s.report.iterations);
    for (double b : s.bands.breakpoints) std::printf(" %.4f", b);
    std::printf("\n");
    return 0;
}

std::vector<SurplusPoint> parse_points(const std::vector<std::string>& raw) {
    std::vector<SurplusPoint> pts;
    for (const auto& s : raw) {
        const auto comma = s.find(',');
        if (comma == std::string::npos) throw InvalidInput("--point expects x1,x2");
        pts.push_back({detail::parse_number(detail::trim(std::string_view(s).substr(0, comma)), "--point"),
                       detail::parse_number(detail::trim(std::string_view(s).substr(comma + 1)), "--point")});
        require_surplus(pts.back(), "--point");
    }
    return pts;
}

int cmd_simulate(const Common& c, const CLI::App& sub, const std::string& strategy_flag,
                 const std::vector<std::string>& point_flags, long trace_paths) {
    const auto t0 = std::chrono::steady_clock::now();
    const Run run = load_run(c, sub);
    const RunConfig& cfg = run.cfg;
    const std::string strategy = pick<std::string>(sub.get_option("--strategy"), strategy_flag, run.replay, "strategy", "policy");
    const auto raw_points = pick<std::vector<std::string>>(sub.get_option("--point"), point_flags, run.replay, "points", {});
    const GridSpec g = config_grid(cfg);
    const std::vector<SurplusPoint> points = raw_points.empty() ? validation_points(g) : parse_points(raw_points);

    std::optional<Solution2D> sol;
    std::optional<OneDimSolution> wbar;
    StrategySpec strat = TakeAndRun{};
    if (strategy == "policy") {
        sol = solve(DiscreteHjb(cfg.params, cfg.law, g), solve_options(run));
        strat = make_policy_table(*sol);
    } else if (strategy == "m-reflection") {
        wbar = solve_aux(cfg, AuxKind::wbar);
        strat = MReflection{&*wbar};
    } else if (strategy != "take-and-run") {
        throw InvalidInput("--strategy must be policy, take-and-run or m-reflection");
    }
    auto reference = [&](const SurplusPoint& x) {
        if (sol) return extend_value(sol->value, x);
        if (wbar) return tilde_V_eval(*wbar, cfg.params, x);
        return x.x1 + x.x2 + (cfg.params.c1 + cfg.params.c2) / (cfg.params.q + cfg.params.lambda);
    };

    SimOptions so;
    so.threads = run.threads;
    json results = json::array();
    std::uint64_t k = 0;
    for (const auto& x : points) {
        const std::uint64_t seed = cfg.seed + 101 * k++;
        const SimResult r = simulate_policy(cfg.params, cfg.law, strat, x, cfg.paths, seed, so);
        const double ref = reference(x);
        const double z = estimate_gap(r, ref);
        results.push_back({{"x1", x.x1}, {"x2", x.x2}, {"mean", r.mean}, {"stderr", r.stderr_}, {"paths", r.paths},
                           {"horizon", r.horizon}, {"seed", r.seed}, {"reference", ref}, {"z", z}});
        std::printf("simulate %s (%.3f, %.3f): mean %.5f se %.5f reference %.5f z %.2f\n", strategy.c_str(), x.x1, x.x2,
                    r.mean, r.stderr_, ref, z);
    }
    std::vector<std::string> artifacts{"simulate.json"};
    if (trace_paths > 0) {
        if (!sol) throw InvalidInput("--trace is available for the policy strategy only");
        auto f = detail::open_out(run.out / "trace.csv");
        f << "path,event,t,x1,x2,paid\n";
        static const char* names[] = {"initial", "lump1", "lump2", "step", "claim", "ruin", "horizon"};
        const PolicyTable table = make_policy_table(*sol);
        const double horizon = results[0]["horizon"].get<double>();
        for (long i = 0; i < trace_paths; ++i) {
            simulate_path(cfg.params, cfg.law, table, points[0], horizon, cfg.seed, static_cast<std::uint64_t>(i),
                          [&](const PathEvent& e) {
                              f << i << ',' << names[static_cast<int>(e.kind)] << ',' << detail::fmt(e.t) << ','
                                << detail::fmt(e.x1) << ',' << detail::fmt(e.x2) << ',' << detail::fmt(e.paid) << '\n';
                          });
        }
        artifacts.push_back("trace.csv");
    }
    write_json(run.out / "simulate.json", {{"strategy", describe(strat)}, {"rng", kRngName}, {"results", results}});
    write_manifest(run, "simulate", {{"strategy", strategy}, {"points", raw_points}}, {{"total_seconds", seconds_since(t0)}},
                   artifacts);
    return 0;
}

int cmd_validate(const Common& c, const CLI::App& sub) {
    const auto t0 = std::chrono::steady_clock::now();
    const Run run = load_run(c, sub);
    const GridSpec g = config_grid(run.cfg);
    const json summary = read_json(run.out / "summary.json");
    const ValueField v = read_value_csv(run.out / "value.csv", g);
    ValidationOptions vo;
    vo.mode = run.mode;
    vo.threads = run.threads;
    vo.recorded_worst_decrease = summary.at("report").at("worst_decrease").get<double>();
    const auto lines = validate_solution(run.cfg, v, vo);
    json report = json::array();
    for (const auto& l : lines) {
        std::printf("%s %s: %s\n", l.pass ? "PASS" : "FAIL", l.name.c_str(), l.detail.c_str());
        report.push_back({{"check", l.name}, {"pass", l.pass}, {"detail", l.detail}});
    }
    const bool ok = all_pass(lines);
    write_json(run.out / "validation.json", {{"pass", ok}, {"checks", report}});
    write_manifest(run, "validate", json::object(), {{"total_seconds", seconds_since(t0)}}, {"validation.json"});
    return ok ? 0 : 1;
}

int cmd_merger(const Common& c, const CLI::App& sub, double cost_flag) {
    const auto t0 = std::chrono::steady_clock::now();
    const Run run = load_run(c, sub);
    const double cost = pick<double>(sub.get_option("--cost"), cost_flag, run.replay, "cost", run.cfg.merger_cost);
    if (!(cost >= 0.0)) throw InvalidInput("--cost must be nonnegative");
    const GridSpec g = config_grid(run.cfg);
    const Solution2D sol = solve(DiscreteHjb(run.cfg.params, run.cfg.law, g), solve_options(run));
    const OneDimSolution merged = solve_aux(run.cfg, AuxKind::merger);

    std::vector<SurplusPoint> pts;
    for (int n = 0; n <= g.n_max; ++n)
        for (int m = 0; m <= g.m_max; ++m) pts.push_back({g.x1(n), g.x2(m)});
    const auto rows = merger_compare(merged, cost, pts, sol.value);
    auto f = detail::open_out(run.out / "merger.csv");
    f << "x1,x2,v2d,merger,diff\n";
    long positive = 0, negative = 0, undefined = 0;
    double min_diff = kInf, max_diff = -kInf;
    for (const auto& r : rows) {
        f << detail::fmt(r.x.x1) << ',' << detail::fmt(r.x.x2) << ',' << detail::fmt(r.v2d) << ',';
        if (!r.merger) {
            ++undefined;
            f << ",\n";
            continue;
        }
        const double d = *r.merger - r.v2d;
        (d > 0.0 ? positive : negative) += 1;
        min_diff = std::min(min_diff, d);
        max_diff = std::max(max_diff, d);
        f << detail::fmt(*r.merger) << ',' << detail::fmt(d) << '\n';
    }
    write_json(run.out / "merger.json", {{"cost", cost},
                                         {"positive", positive},
                                         {"nonpositive", negative},
                                         {"undefined", undefined},
                                         {"min_diff", min_diff},
                                         {"max_diff", max_diff},
                                         {"tolerance", sol.report.tolerance}});
    write_manifest(run, "merger-compare", {{"cost", cost}}, {{"total_seconds", seconds_since(t0)}}, {"merger.csv", "merger.json"});
    std::printf("merger-compare cost %.3f: V_M - v in [%.4f, %.4f], %ld positive, %ld not, %ld undefined\n", cost, min_diff,
                max_diff, positive, negative, undefined);
    return 0;
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "config file or a previous run's manifest")->required();
    sub->add_option("--out", c.out, "output directory (default: config key 'out', else ./out)");
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--mode", c.mode, "sweep mode: jacobi | inplace")->check(CLI::IsMember({"jacobi", "inplace"}));
    sub->add_option("--seed", c.seed, "overrides the config seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-branch dividend optimisation: lattice solver, band solver, simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Common c;
    std::string kind = "wbar", strategy = "policy";
    std::vector<std::string> points;
    long trace = 0;
    double cost = 0.0;

    auto* s2 = app.add_subcommand("solve2d", "solve the lattice HJB and write value, policy and region artifacts");
    add_common(s2, c);
    auto* s1 = app.add_subcommand("solve1d", "solve a 1D band problem (wbar or merger)");
    add_common(s1, c);
    s1->add_option("--kind", kind, "wbar | merger")->check(CLI::IsMember({"wbar", "merger"}));
    auto* sim = app.add_subcommand("simulate", "Monte Carlo value of a strategy at sample points");
    add_common(sim, c);
    sim->add_option("--strategy", strategy, "policy | take-and-run | m-reflection")
        ->check(CLI::IsMember({"policy", "take-and-run", "m-reflection"}));
    sim->add_option("--point", points, "x1,x2 (repeatable; default: five window fractions)");
    sim->add_option("--trace", trace, "write per-event CSV for this many paths at the first point");
    auto* val = app.add_subcommand("validate", "check solve2d artifacts in --out against the config");
    add_common(val, c);
    auto* mc = app.add_subcommand("merger-compare", "tabulate V_M(x1 + x2 - cost) - v over the grid");
    add_common(mc, c);
    mc->add_option("--cost", cost, "merger cost (default: config key merger.cost)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (s2->parsed()) return cmd_solve2d(c, *s2);
        if (s1->parsed()) return cmd_solve1d(c, *s1, kind);
        if (sim->parsed()) return cmd_simulate(c, *sim, strategy, points, trace);
        if (val->parsed()) return cmd_validate(c, *val);
        if (mc->parsed()) return cmd_merger(c, *mc, cost);
    } catch (const NonConvergence& e) {
        std::fprintf(stderr, "error: %s (last increment %.3e)\n", e.what(), e.last_increment());
        return 3;
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const TruncationTooSmall& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
