#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "gembml/runner.hpp"

namespace {

using namespace gembml;

struct GlobalArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    int64_t seed = -1;
    std::string out_dir;
    int jobs = 0;
};

Config assemble(const GlobalArgs& g) {
    Config c = g.config_path.empty() ? Config{} : Config::from_file(g.config_path);
    for (const auto& o : g.overrides) c.apply_override(o);
    if (g.seed >= 0) c.set("seed", std::to_string(g.seed));
    if (!g.out_dir.empty()) c.set("out", g.out_dir);
    if (g.jobs > 0) c.set("jobs", std::to_string(g.jobs));
    return c;
}

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "Config file (key = value lines)");
    cmd->add_option("--set", g.overrides, "Override a config key (key=value, repeatable)");
    cmd->add_option("--seed", g.seed, "Run seed (required here or in the config)");
    cmd->add_option("--out", g.out_dir, "Output directory");
    cmd->add_option("--jobs", g.jobs, "Worker threads");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-EM Bayesian meta-learning experiments"};
    app.require_subcommand(1);

    GlobalArgs g;
    std::string theory_study;

    CLI::App* c_gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    CLI::App* c_graderr =
        app.add_subcommand("grad-error-study", "GEM vs backprop-through-VI estimation error");
    CLI::App* c_sine = app.add_subcommand("sine", "Sinusoid meta-train + meta-test");
    CLI::App* c_theory = app.add_subcommand("theory", "Exact-model theory studies");
    c_theory->add_option("study", theory_study,
                         "variance_ratio | pinsker | l2_check | predictive_optimality");
    CLI::App* c_neigh =
        app.add_subcommand("neighborhood", "Meta-test from convex combinations of adapted means");
    for (CLI::App* cmd : {c_gradcheck, c_graderr, c_sine, c_theory, c_neigh})
        add_global_flags(cmd, g);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : runner::kUsage;
    }

    try {
        Config c = assemble(g);
        if (!theory_study.empty()) c.set("theory.study", theory_study);
        const RunConfig cfg = run_config_from(c);
        if (c_gradcheck->parsed()) return runner::run_gradcheck(cfg);
        if (c_graderr->parsed()) return runner::run_grad_error_study(cfg);
        if (c_sine->parsed()) return runner::run_sine(cfg);
        if (c_theory->parsed()) return runner::run_theory(cfg);
        if (c_neigh->parsed()) return runner::run_neighborhood(cfg);
        return runner::kUsage;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return runner::kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return runner::kUsage;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return runner::kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return runner::kNumeric;
    }
}
