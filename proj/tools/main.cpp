#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "gbandit/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

gbandit::json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw gbandit::ConfigError("/", "cannot open config file: " + path);
    return gbandit::json::parse(is);
}

int cmd_simulate(const std::string& config_path, const std::string& output_dir) {
    gbandit::ExperimentConfig cfg = gbandit::parse_experiment_config(load_json(config_path));
    if (!output_dir.empty()) cfg.output.dir = output_dir;
    const gbandit::ExperimentResult res = gbandit::run_experiment(cfg);
    std::cout << "seeds: " << res.per_seed.size() << "\n";
    std::cout << "mean final cumulative regret: "
              << res.summary["aggregate"]["final_cum_regret"]["mean"].get<double>() << "\n";
    if (res.summary["aggregate"].contains("slope"))
        std::cout << "slope: " << res.summary["aggregate"]["slope"]["value"].get<double>()
                  << " (stderr " << res.summary["aggregate"]["slope"]["stderr"].get<double>()
                  << ")\n";
    std::cout << "summary: " << res.summary_path << "\n";
    return kExitOk;
}

int cmd_verify_conditions(const std::string& config_path) {
    const gbandit::ConditionsConfig cfg =
        gbandit::parse_conditions_config(load_json(config_path));
    const std::vector<gbandit::ConditionOutcome> outcomes = gbandit::run_conditions(cfg);

    gbandit::json report = gbandit::json::array();
    bool any_below = false;
    for (const gbandit::ConditionOutcome& o : outcomes) {
        report.push_back(gbandit::condition_outcome_to_json(o));
        const bool margin = o.report.kind == gbandit::ConditionReport::Kind::margin;
        std::cout << (margin ? "margin   " : "diversity");
        std::cout << "  " << o.params["kind"].get<std::string>() << "  sigma="
                  << o.params["sigma"].get<double>() << "  r=" << o.params["r"].get<double>();
        if (margin) {
            std::cout << "  gamma_hat=" << o.report.gamma_hat << " +-" << o.report.ci99
                      << "  ref=" << o.reference
                      << (o.below_reference ? "  BELOW-REFERENCE" : "");
            if (o.report.extreme) std::cout << "  EXTREME";
            any_below = any_below || o.below_reference;
        } else {
            std::cout << "  lambda_hat=" << o.report.lambda_hat << " +-" << o.report.ci99;
        }
        std::cout << "\n";
    }
    if (!cfg.output.empty()) {
        std::ofstream os(cfg.output, std::ios::binary);
        if (!os)
            throw gbandit::Error(gbandit::Error::Kind::invalid_input,
                                 "cannot open output file: " + cfg.output);
        os << report.dump(2) << "\n";
        std::cout << "report: " << cfg.output << "\n";
    } else {
        std::cout << report.dump(2) << "\n";
    }
    if (any_below) std::cout << "warning: grid points below their reference constant\n";
    return kExitOk;
}

int cmd_lower_bound(const std::string& which, std::int64_t n, std::int64_t rho,
                    std::size_t seeds, std::uint64_t seed0, std::int64_t warm_n, double eps,
                    double sigma, const std::string& output) {
    gbandit::LowerBoundRun run;
    if (which == "warm-start-sigma") {
        run = gbandit::run_lower_bound_warm_start_sigma(n, rho, seeds, seed0, warm_n);
    } else {
        if (warm_n < 0) warm_n = static_cast<std::int64_t>(1.0 / (2.0 * eps));
        run = gbandit::run_lower_bound_beta_norm(eps, sigma, warm_n, rho, seeds, seed0);
    }
    std::cout << "instance: " << run.instance.dump() << "\n";
    std::cout << "high-regret threshold: " << run.threshold << "\n";
    std::cout << "fraction of seeds over threshold: " << run.fraction_over << "\n";
    if (!output.empty()) {
        std::ofstream os(output, std::ios::binary);
        if (!os)
            throw gbandit::Error(gbandit::Error::Kind::invalid_input,
                                 "cannot open output file: " + output);
        os << gbandit::lower_bound_run_to_json(run).dump(2) << "\n";
        std::cout << "report: " << output << "\n";
    }
    return kExitOk;
}

int cmd_sweep(const std::string& config_path) {
    const gbandit::SweepResult res = gbandit::run_sweep(load_json(config_path));
    std::cout << "points: " << res.points.size() << "\n";
    for (const gbandit::SweepPointResult& pr : res.points)
        std::cout << pr.point.dump() << "  mean final regret "
                  << pr.aggregate["final_cum_regret"]["mean"].get<double>() << "\n";
    std::cout << "summary: " << res.summary_path << "\n";
    std::cout << "rows: " << res.csv_path << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"greedy linear contextual bandit simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    CLI::App* sim = app.add_subcommand("simulate", "run an experiment config across its seeds");
    sim->add_option("config", config_path, "experiment config (JSON)")->required();
    sim->add_option("--output-dir", output_dir, "override the configured output directory");

    std::string cond_config;
    CLI::App* cond = app.add_subcommand(
        "verify-conditions", "estimate diversity / margin constants over a declared grid");
    cond->add_option("config", cond_config, "conditions config (JSON)")->required();

    std::string which;
    std::int64_t lb_n = 64;
    std::int64_t lb_rho = 10000;
    std::size_t lb_seeds = 200;
    std::uint64_t lb_seed0 = 1;
    std::int64_t lb_warm_n = -1;
    double lb_eps = 0.05;
    double lb_sigma = 0.15;
    std::string lb_output;
    CLI::App* lb = app.add_subcommand("lower-bound", "run a hard-instance battery");
    lb->add_option("which", which, "warm-start-sigma | beta-norm")
        ->required()
        ->check(CLI::IsMember({"warm-start-sigma", "beta-norm"}));
    lb->add_option("--n", lb_n, "warm-start-sigma: instance n; beta-norm: warm-start rounds");
    lb->add_option("--rho", lb_rho, "horizon");
    lb->add_option("--seeds", lb_seeds, "number of seeds (seed0, seed0+1, ...)");
    lb->add_option("--seed0", lb_seed0, "first seed");
    lb->add_option("--warm-n", lb_warm_n,
                   "warm-start-sigma only: override executed warm-start rounds");
    lb->add_option("--eps", lb_eps, "beta-norm only: coefficient scale");
    lb->add_option("--sigma", lb_sigma, "beta-norm only: perturbation scale");
    lb->add_option("--output", lb_output, "write the full report JSON here");

    std::string sweep_config;
    CLI::App* sw = app.add_subcommand("sweep", "run the Cartesian product of config axes");
    sw->add_option("config", sweep_config, "experiment config with a sweep block (JSON)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    try {
        if (sim->parsed()) return cmd_simulate(config_path, output_dir);
        if (cond->parsed()) return cmd_verify_conditions(cond_config);
        if (lb->parsed()) {
            std::int64_t n = lb_n;
            std::int64_t warm_n = lb_warm_n;
            if (which == "beta-norm" && lb->count("--n") > 0) warm_n = lb_n;
            return cmd_lower_bound(which, n, lb_rho, lb_seeds, lb_seed0, warm_n, lb_eps,
                                   lb_sigma, lb_output);
        }
        if (sw->parsed()) return cmd_sweep(sweep_config);
    } catch (const gbandit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const gbandit::json::parse_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailure;
    }
    return kExitOk;
}
