#include "rtkgssm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "rtkgssm/dd_engine.hpp"
#include "rtkgssm/errors.hpp"
#include "rtkgssm/metrics.hpp"
#include "rtkgssm/session_io.hpp"

namespace rtkgssm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    }
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

bool overlaps(const AmbiguityArc& arc, const std::vector<std::pair<int, int>>& windows) {
    return std::any_of(windows.begin(), windows.end(),
                       [&](const auto& w) { return arc.start <= w.second && arc.end >= w.first; });
}

}  // namespace

std::vector<std::string> resolve_methods(std::span<const std::string> requested) {
    if (requested.empty()) throw ValidationError("at least one method must be selected");
    bool want[4] = {false, false, false, false};
    for (const auto& m : requested) {
        auto it = std::find(kMethods.begin(), kMethods.end(), m);
        if (it == kMethods.end()) throw ValidationError("unknown method '" + m + "'");
        want[it - kMethods.begin()] = true;
    }
    if (want[2]) want[1] = true;                       // fbkf needs bwd
    if (want[1] || want[2] || want[3]) want[0] = true;  // everything starts from fwd
    std::vector<std::string> out;
    for (std::size_t i = 0; i < kMethods.size(); ++i) {
        if (want[i]) out.emplace_back(kMethods[i]);
    }
    return out;
}

std::vector<DdSystem> layout_systems(const Session& session) {
    std::vector<DdSystem> out;
    out.reserve(session.epochs.size());
    for (const auto& e : session.epochs) {
        out.push_back(try_build_dd_system(e, session.config.rover_initial_guess, session.config));
    }
    return out;
}

std::vector<AmbiguityArc> resolve_arcs(const Session&, const FilterTrajectory& fwd,
                                       std::span<const AmbiguityArc> tracked, const PipelineOptions& options) {
    std::vector<AmbiguityArc> arcs(tracked.begin(), tracked.end());
    apply_arc_estimates(fwd, arcs);
    for (auto& arc : arcs) {
        if (overlaps(arc, options.no_fix_windows)) continue;
        arc = try_fix(arc, options.fix);
    }
    return arcs;
}

PipelineResult run_pipeline(const Session& session, const PipelineOptions& options) {
    PipelineResult res;
    res.methods = resolve_methods(options.methods);
    const auto has = [&](std::string_view m) {
        return std::find(res.methods.begin(), res.methods.end(), m) != res.methods.end();
    };

    const std::vector<AmbiguityArc> tracked = track_arcs(session.epochs, layout_systems(session));
    res.fwd = run_forward(session, tracked);
    res.solutions["fwd"] = res.fwd->to_solution("fwd");

    if (has("bwd")) {
        res.bwd = run_backward(session, tracked);
        res.solutions["bwd"] = res.bwd->to_solution("bwd");
    }
    if (has("fbkf")) res.solutions["fbkf"] = combine_weighted(*res.fwd, *res.bwd);

    res.arcs = resolve_arcs(session, *res.fwd, tracked, options);
    if (has("gssm")) {
        res.system = build_gssm(session, *res.fwd, res.arcs, options.gssm);
        res.gssm = solve_gssm(session, *res.system, options.gssm.max_iters, options.gssm.tol_m);
        res.solutions["gssm"] = res.gssm->solution;
    }
    return res;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig cfg) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        try {
            if (key == "input") cfg.input = value;
            else if (key == "truth") cfg.truth = std::filesystem::path(value);
            else if (key == "methods") cfg.methods = split_list(value);
            else if (key == "out") cfg.out = value;
            else if (key == "gssm_iters") cfg.gssm_iters = std::stoi(value);
            else if (key == "gssm_tol") cfg.gssm_tol = std::stod(value);
            else if (key == "fix_ratio") cfg.fix_ratio = std::stod(value);
            else if (key == "dump_arcs") cfg.dump_arcs = parse_bool(value, key);
            else if (key == "dump_system") cfg.dump_system = parse_bool(value, key);
            else throw ParseError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    return cfg;
}

int run(const RunConfig& config, std::ostream& log) {
    if (!std::filesystem::is_regular_file(config.input)) {
        log << "error: input file not found: " << config.input.string() << "\n";
        return 2;
    }
    if (config.truth && !std::filesystem::is_regular_file(*config.truth)) {
        log << "error: truth file not found: " << config.truth->string() << "\n";
        return 2;
    }
    if (config.out.empty()) {
        log << "error: no output directory given\n";
        return 2;
    }

    try {
        const Session session = parse_session(config.input);
        std::vector<TruthPoint> truth;
        if (config.truth) truth = read_truth(*config.truth);

        PipelineOptions opt;
        opt.methods = config.methods;
        opt.fix.ratio_threshold = config.fix_ratio;
        opt.gssm.max_iters = config.gssm_iters.value_or(session.config.gssm_max_iters);
        opt.gssm.tol_m = config.gssm_tol.value_or(session.config.gssm_tol_m);
        if (opt.gssm.max_iters < 1) throw ValidationError("gssm iterations must be at least 1");
        if (!(opt.gssm.tol_m > 0.0)) throw ValidationError("gssm tolerance must be positive");
        const auto methods = resolve_methods(opt.methods);

        std::filesystem::create_directories(config.out);
        const double dt = session.config.sampling_interval_s;
        auto emit = [&](const Solution& s) {
            write_solution(config.out / (s.method + ".csv"), std::span(&s, 1), truth, dt);
        };

        // Stages run one by one so that a failing stage keeps earlier outputs.
        const std::vector<AmbiguityArc> tracked = track_arcs(session.epochs, layout_systems(session));
        const FilterTrajectory fwd = run_forward(session, tracked);
        std::map<std::string, Solution> solutions;
        solutions["fwd"] = fwd.to_solution("fwd");
        emit(solutions["fwd"]);

        const auto has = [&](std::string_view m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
        if (has("bwd")) {
            const FilterTrajectory bwd = run_backward(session, tracked);
            solutions["bwd"] = bwd.to_solution("bwd");
            emit(solutions["bwd"]);
            if (has("fbkf")) {
                solutions["fbkf"] = combine_weighted(fwd, bwd);
                emit(solutions["fbkf"]);
            }
        }

        const std::vector<AmbiguityArc> arcs = resolve_arcs(session, fwd, tracked, opt);
        if (config.dump_arcs) write_arcs_csv(config.out / "arcs.csv", arcs);
        if (has("gssm")) {
            const GssmSystem sys = build_gssm(session, fwd, arcs, opt.gssm);
            if (config.dump_system) write_system_dump(config.out / "gssm_A.mtx", config.out / "gssm_b.mtx", sys);
            const GssmResult g = solve_gssm(session, sys, opt.gssm.max_iters, opt.gssm.tol_m);
            if (!g.converged) log << "warning: gssm stopped after " << g.iterations << " iterations without converging\n";
            solutions["gssm"] = g.solution;
            emit(solutions["gssm"]);
        }

        if (!truth.empty()) {
            std::map<std::string, MethodMetrics> metrics;
            for (const auto& [name, sol] : solutions) metrics[name] = compute_metrics(sol, truth, dt);
            std::ofstream(config.out / "metrics.json", std::ios::binary) << metrics_json(metrics);
        }
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace rtkgssm
