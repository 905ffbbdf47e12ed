#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtkgssm/errors.hpp"
#include "rtkgssm/pipeline.hpp"
#include "rtkgssm/session_io.hpp"
#include "rtkgssm/sim.hpp"
#include "rtkgssm/solution.hpp"

namespace {

std::vector<std::string> split_methods(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch RTK post-processing: Kalman filtering and graph-based smoothing"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Process a session with the selected estimators");
    std::string input, truth, methods = "fwd,fbkf,gssm", out, config_path;
    int gssm_iters = 5;
    double gssm_tol = 1e-4, fix_ratio = 3.0;
    bool dump_arcs = false, dump_system = false;
    auto* o_input = run->add_option("--input", input, "Session JSON");
    auto* o_truth = run->add_option("--truth", truth, "Truth CSV (t,x,y,z) for metrics");
    auto* o_methods = run->add_option("--methods", methods, "Comma separated subset of fwd,bwd,fbkf,gssm");
    auto* o_out = run->add_option("--out", out, "Output directory");
    auto* o_iters = run->add_option("--gssm-iters", gssm_iters, "Gauss-Newton iteration cap");
    auto* o_tol = run->add_option("--gssm-tol", gssm_tol, "Gauss-Newton position tolerance, m");
    auto* o_ratio = run->add_option("--fix-ratio", fix_ratio, "Ratio-test threshold for integer fixing");
    auto* o_arcs = run->add_flag("--dump-arcs", dump_arcs, "Write arcs.csv");
    auto* o_sys = run->add_flag("--dump-system", dump_system, "Write the whitened GSSM system (Matrix Market)");
    run->add_option("--config", config_path, "key = value file; command line flags take precedence");

    // sim
    auto* sim = app.add_subcommand("sim", "Generate a synthetic session");
    std::uint64_t seed = 1;
    int epochs = 300, satellites = 8;
    std::string sim_out, sim_truth;
    double noise_scale = 1.0;
    bool canyon = false;
    sim->add_option("--seed", seed, "Random seed");
    sim->add_option("--epochs", epochs, "Number of epochs")->check(CLI::PositiveNumber);
    sim->add_option("--out", sim_out, "Session JSON to write")->required();
    sim->add_option("--truth", sim_truth, "Truth CSV to write");
    sim->add_option("--satellites", satellites, "Satellite count")->check(CLI::Range(4, 32));
    sim->add_option("--noise-scale", noise_scale, "Multiplier on simulated noise")->check(CLI::NonNegativeNumber);
    sim->add_flag("--canyon", canyon, "Add two urban-canyon stretches");

    CLI11_PARSE(app, argc, argv);

    if (*run) {
        rtkgssm::RunConfig cfg;
        try {
            if (!config_path.empty()) {
                if (!std::filesystem::is_regular_file(config_path)) {
                    std::cerr << "error: config file not found: " << config_path << "\n";
                    return 2;
                }
                cfg = rtkgssm::load_run_config(config_path, cfg);
            }
        } catch (const rtkgssm::Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        if (*o_input) cfg.input = input;
        if (*o_truth) cfg.truth = std::filesystem::path(truth);
        if (*o_methods) cfg.methods = split_methods(methods);
        if (*o_out) cfg.out = out;
        if (*o_iters) cfg.gssm_iters = gssm_iters;
        if (*o_tol) cfg.gssm_tol = gssm_tol;
        if (*o_ratio) cfg.fix_ratio = fix_ratio;
        if (*o_arcs) cfg.dump_arcs = dump_arcs;
        if (*o_sys) cfg.dump_system = dump_system;
        if (cfg.input.empty()) {
            std::cerr << "error: --input is required\n";
            return 2;
        }
        return rtkgssm::run(cfg, std::cerr);
    }

    try {
        rtkgssm::Scenario sc = canyon ? rtkgssm::urban_canyon_scenario(seed, epochs) : rtkgssm::Scenario{};
        sc.seed = seed;
        sc.epochs = epochs;
        sc.satellites = satellites;
        sc.noise_scale = noise_scale;
        const rtkgssm::Simulation s = rtkgssm::generate(sc);
        rtkgssm::write_session(sim_out, s.session);
        if (!sim_truth.empty()) rtkgssm::write_truth(sim_truth, s.truth);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
