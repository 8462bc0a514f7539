#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gbandit/conditions.hpp"
#include "gbandit/config.hpp"

namespace gbandit {

// Worker count: GBANDIT_THREADS wins, otherwise the hardware concurrency.
inline int num_threads() {
    if (const char* env = std::getenv("GBANDIT_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace detail {

// Index-parallel loop with deterministic work units: f(i) must depend only on
// i. The first exception wins and is rethrown on the calling thread.
template <typename F>
void parallel_for_index(std::size_t n, F&& f) {
    const int nt = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Quantile with linear interpolation between order statistics (R-7).
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw Error(Error::Kind::invalid_input, "quantile: empty sample");
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double h = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

} // namespace detail

// Fixed trace schema:
// round,chosen_arm,optimal_arm,inst_regret,cum_regret,lambda_min,beta_err_1..k
// (arms 1-based, LF line endings, %.17g doubles so replays are byte-identical
// and aggregates recompute exactly).
inline void write_trace_csv(std::ostream& os, const RegretTrace& trace) {
    os << "round,chosen_arm,optimal_arm,inst_regret,cum_regret,lambda_min";
    for (std::size_t i = 1; i <= trace.k; ++i) os << ",beta_err_" << i;
    os << "\n";
    char buf[128];
    for (std::size_t t = 0; t < trace.rounds(); ++t) {
        os << (t + 1) << ',' << (trace.chosen[t] + 1) << ',' << (trace.optimal[t] + 1);
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g", trace.inst_regret[t],
                      trace.cum_regret[t], trace.lambda_min[t]);
        os << buf;
        for (std::size_t i = 0; i < trace.k; ++i) {
            std::snprintf(buf, sizeof(buf), ",%.17g", trace.beta_err[t * trace.k + i]);
            os << buf;
        }
        os << "\n";
    }
}

inline std::vector<double> cum_regret_at(const RegretTrace& trace,
                                         const std::vector<std::int64_t>& checkpoints) {
    std::vector<double> out;
    out.reserve(checkpoints.size());
    for (std::int64_t t : checkpoints) {
        if (t < 1 || static_cast<std::size_t>(t) > trace.rounds())
            throw Error(Error::Kind::invalid_input, "cum_regret_at: checkpoint out of range");
        out.push_back(trace.cum_regret[static_cast<std::size_t>(t - 1)]);
    }
    return out;
}

// Least-squares slope of log(cum regret) against log(t) over the checkpoints
// inside [t_lo, t_hi]; regret is floored at 1e-9 before the log.
struct SlopeFit {
    double slope = 0.0;
    double stderr_ = 0.0;
    double intercept = 0.0;
    int points = 0;
};

inline SlopeFit fit_regret_slope(const std::vector<std::int64_t>& checkpoints,
                                 const std::vector<double>& cum_regret, std::int64_t t_lo,
                                 std::int64_t t_hi) {
    if (checkpoints.size() != cum_regret.size())
        throw Error(Error::Kind::invalid_input, "fit_regret_slope: size mismatch");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (checkpoints[i] < t_lo || checkpoints[i] > t_hi) continue;
        xs.push_back(std::log(static_cast<double>(checkpoints[i])));
        ys.push_back(std::log(std::max(cum_regret[i], 1e-9)));
    }
    const std::size_t n = xs.size();
    if (n < 2)
        throw Error(Error::Kind::invalid_input,
                    "fit_regret_slope: fewer than 2 checkpoints in window");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0)
        throw Error(Error::Kind::invalid_input, "fit_regret_slope: degenerate abscissa");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.points = static_cast<int>(n);
    if (n > 2) {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
            ss_res += r * r;
        }
        fit.stderr_ = std::sqrt(ss_res / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

// ---- Experiment runner --------------------------------------------------------

struct SeedResult {
    std::uint64_t seed = 0;
    double final_cum_regret = 0.0;
    std::int64_t reward_draws = 0;
    std::vector<double> checkpoint_cum_regret;
    std::string csv_path;
};

struct ExperimentResult {
    std::vector<SeedResult> per_seed; // in config seed order
    std::vector<std::int64_t> checkpoints;
    std::vector<double> mean_checkpoint_cum_regret;
    json summary;
    std::string summary_path;
};

// Runs every seed (work-stealing across threads; each worker writes only its
// own per-seed CSV), then assembles the aggregate summary in seed order so the
// output is independent of scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files = true) {
    namespace fs = std::filesystem;
    ExperimentResult result;
    result.checkpoints = cfg.checkpoints;
    result.per_seed.resize(cfg.seeds.size());

    if (write_files) fs::create_directories(cfg.output.dir);

    detail::parallel_for_index(cfg.seeds.size(), [&](std::size_t idx) {
        const std::uint64_t seed = cfg.seeds[idx];
        const RegretTrace trace = run_episode(cfg.model, cfg.adversary, cfg.perturbation,
                                              cfg.warm_start, cfg.horizon, seed,
                                              cfg.episode_options());
        SeedResult sr;
        sr.seed = seed;
        sr.final_cum_regret = trace.final_cum_regret();
        sr.reward_draws = trace.reward_draws;
        sr.checkpoint_cum_regret = cum_regret_at(trace, cfg.checkpoints);
        if (write_files) {
            const fs::path path = fs::path(cfg.output.dir) /
                                  (cfg.output.name + "_seed" + std::to_string(seed) + ".csv");
            std::ofstream os(path, std::ios::binary);
            if (!os)
                throw Error(Error::Kind::invalid_input,
                            "run_experiment: cannot open " + path.string());
            write_trace_csv(os, trace);
            sr.csv_path = path.string();
        }
        result.per_seed[idx] = std::move(sr);
    });

    const std::size_t n_seeds = cfg.seeds.size();
    result.mean_checkpoint_cum_regret.assign(cfg.checkpoints.size(), 0.0);
    std::vector<double> finals;
    finals.reserve(n_seeds);
    for (const SeedResult& sr : result.per_seed) {
        finals.push_back(sr.final_cum_regret);
        for (std::size_t i = 0; i < cfg.checkpoints.size(); ++i)
            result.mean_checkpoint_cum_regret[i] += sr.checkpoint_cum_regret[i];
    }
    for (double& v : result.mean_checkpoint_cum_regret) v /= static_cast<double>(n_seeds);

    json agg;
    agg["seeds"] = n_seeds;
    double mean = 0.0;
    for (double v : finals) mean += v;
    mean /= static_cast<double>(n_seeds);
    agg["final_cum_regret"] = {{"mean", mean},
                               {"median", detail::quantile(finals, 0.5)},
                               {"q25", detail::quantile(finals, 0.25)},
                               {"q75", detail::quantile(finals, 0.75)},
                               {"min", *std::min_element(finals.begin(), finals.end())},
                               {"max", *std::max_element(finals.begin(), finals.end())}};
    agg["mean_checkpoint_cum_regret"] = result.mean_checkpoint_cum_regret;

    std::int64_t slope_lo = std::max<std::int64_t>(1, cfg.horizon / 50);
    std::int64_t slope_hi = cfg.horizon;
    if (cfg.slope_window) {
        slope_lo = cfg.slope_window->t_lo;
        slope_hi = cfg.slope_window->t_hi;
    }
    int in_window = 0;
    for (std::int64_t t : cfg.checkpoints)
        if (t >= slope_lo && t <= slope_hi) ++in_window;
    if (in_window >= 2) {
        const SlopeFit fit = fit_regret_slope(cfg.checkpoints, result.mean_checkpoint_cum_regret,
                                              slope_lo, slope_hi);
        agg["slope"] = {{"t_lo", slope_lo},
                        {"t_hi", slope_hi},
                        {"value", fit.slope},
                        {"stderr", fit.stderr_},
                        {"points", fit.points}};
    }

    json per_seed = json::array();
    for (const SeedResult& sr : result.per_seed) {
        json e;
        e["seed"] = sr.seed;
        e["final_cum_regret"] = sr.final_cum_regret;
        e["reward_draws"] = sr.reward_draws;
        e["checkpoint_cum_regret"] = sr.checkpoint_cum_regret;
        if (!sr.csv_path.empty()) e["csv"] = sr.csv_path;
        per_seed.push_back(std::move(e));
    }

    result.summary["checkpoints"] = cfg.checkpoints;
    result.summary["per_seed"] = per_seed;
    result.summary["aggregate"] = agg;

    if (write_files) {
        const fs::path path =
            fs::path(cfg.output.dir) / (cfg.output.name + "_summary.json");
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw Error(Error::Kind::invalid_input,
                        "run_experiment: cannot open " + path.string());
        os << result.summary.dump(2) << "\n";
        result.summary_path = path.string();
    }
    return result;
}

// ---- Condition-verification driver ---------------------------------------------

struct ConditionOutcome {
    json params;
    ConditionReport report;
    double reference = 0.0;    // margins only
    bool below_reference = false;
};

inline json condition_outcome_to_json(const ConditionOutcome& o) {
    json j;
    j["params"] = o.params;
    j["extreme"] = o.report.extreme;
    j["samples"] = o.report.samples;
    j["proposals"] = o.report.proposals;
    j["acceptance_rate"] = o.report.acceptance_rate;
    j["ci99"] = o.report.ci99;
    if (o.report.kind == ConditionReport::Kind::margin) {
        j["gamma_hat"] = o.report.gamma_hat;
        j["reference"] = o.reference;
        j["below_reference"] = o.below_reference;
    } else {
        j["lambda_hat"] = o.report.lambda_hat;
    }
    return j;
}

inline std::vector<ConditionOutcome> run_conditions(const ConditionsConfig& cfg) {
    std::vector<ConditionOutcome> out(cfg.margins.size() + cfg.diversities.size());

    detail::parallel_for_index(cfg.margins.size(), [&](std::size_t i) {
        const MarginGridPoint& pt = cfg.margins[i];
        ConditionOutcome& o = out[i];
        o.params = {{"type", "margin"},
                    {"kind", pt.perturbation.kind == PerturbationSpec::Kind::gaussian
                                 ? "gaussian"
                                 : "truncated-rotated"},
                    {"sigma", pt.perturbation.sigma},
                    {"r", pt.r},
                    {"alpha", pt.alpha},
                    {"b", pt.b},
                    {"beta", pt.beta}};
        if (pt.perturbation.kind == PerturbationSpec::Kind::truncated_rotated)
            o.params["rhat"] = pt.perturbation.rhat;
        o.report = estimate_margin(pt.perturbation, pt.beta, pt.b, pt.alpha, pt.samples,
                                   cfg.seed + i);
        o.reference = pt.reference;
        o.below_reference =
            !o.report.extreme && o.report.gamma_hat + o.report.ci99 < o.reference;
    });

    detail::parallel_for_index(cfg.diversities.size(), [&](std::size_t i) {
        const DiversityGridPoint& pt = cfg.diversities[i];
        ConditionOutcome& o = out[cfg.margins.size() + i];
        o.params = {{"type", "diversity"},
                    {"kind", pt.perturbation.kind == PerturbationSpec::Kind::gaussian
                                 ? "gaussian"
                                 : "truncated-rotated"},
                    {"sigma", pt.perturbation.sigma},
                    {"r", pt.r},
                    {"b", pt.b},
                    {"beta_hat", pt.beta_hat},
                    {"mu", pt.mu}};
        if (pt.perturbation.kind == PerturbationSpec::Kind::truncated_rotated)
            o.params["rhat"] = pt.perturbation.rhat;
        o.report = estimate_diversity(pt.perturbation, pt.beta_hat, pt.mu, pt.b, pt.samples,
                                      cfg.seed + 7919 * (i + 1));
    });

    return out;
}

// ---- Lower-bound drivers --------------------------------------------------------

struct LowerBoundRun {
    std::string which;
    json instance;
    double threshold = 0.0;
    std::vector<double> final_regrets; // per seed
    double fraction_over = 0.0;
    std::vector<std::int64_t> checkpoints;
    std::vector<double> mean_checkpoint_cum_regret;
};

namespace detail {
inline void finish_lower_bound(LowerBoundRun& run, const ExperimentResult& res) {
    std::int64_t over = 0;
    for (const SeedResult& sr : res.per_seed) {
        run.final_regrets.push_back(sr.final_cum_regret);
        if (sr.final_cum_regret >= run.threshold) ++over;
    }
    run.fraction_over =
        static_cast<double>(over) / static_cast<double>(res.per_seed.size());
    run.checkpoints = res.checkpoints;
    run.mean_checkpoint_cum_regret = res.mean_checkpoint_cum_regret;
}
} // namespace detail

// Two identical-coefficient arms whose mean gap 1/sqrt(n) sits at the
// resolution limit of an n-pull warm start; sigma is the boundary value
// matching horizon rho. Regret counts as "large" above coeff * rho / sqrt(n).
// `warm_n` overrides the executed warm start only; the instance (and the
// threshold) stay pinned to n.
inline LowerBoundRun run_lower_bound_warm_start_sigma(std::int64_t n, std::int64_t rho,
                                                      std::size_t n_seeds,
                                                      std::uint64_t seed0 = 1,
                                                      std::int64_t warm_n = -1,
                                                      double threshold_coeff = 0.02) {
    if (n < 1 || rho < 1 || n_seeds == 0)
        throw Error(Error::Kind::invalid_input, "lower bound run: bad arguments");
    const double sigma = LowerBound1Adversary::matching_sigma(n, rho);
    if (warm_n < 0) warm_n = n;

    ExperimentConfig cfg;
    cfg.model.mode = ModelSpec::Mode::multi;
    cfg.model.d = 1;
    cfg.model.k = 2;
    cfg.model.betas = {Vec{1.0}, Vec{1.0}};
    cfg.model.noise_s = 1.0;
    cfg.adversary = LowerBound1Adversary{n};
    cfg.perturbation = PerturbationSpec{PerturbationSpec::Kind::gaussian, sigma, 0.0};
    cfg.warm_start.n = warm_n;
    cfg.horizon = rho;
    for (std::size_t i = 0; i < n_seeds; ++i) cfg.seeds.push_back(seed0 + i);

    const ExperimentResult res = run_experiment(cfg, /*write_files=*/false);

    LowerBoundRun run;
    run.which = "warm-start-sigma";
    run.threshold =
        threshold_coeff * static_cast<double>(rho) / std::sqrt(static_cast<double>(n));
    run.instance = {{"n", n},
                    {"warm_start_n", warm_n},
                    {"rho", rho},
                    {"sigma", sigma},
                    {"mu2", LowerBound1Adversary{n}.mu2()},
                    {"threshold", run.threshold},
                    {"seeds", n_seeds}};
    detail::finish_lower_bound(run, res);
    return run;
}

// Two arms with identical means and coefficient norms ~eps: without enough
// perturbation or warm start the greedy choice can pin to the wrong arm for
// the whole horizon. Coefficients follow the source construction
// (10*eps, 8*eps). Regret counts as "large" above coeff * 2*eps * rho (the
// full-lock level).
inline LowerBoundRun run_lower_bound_beta_norm(double eps, double sigma, std::int64_t warm_n,
                                               std::int64_t rho, std::size_t n_seeds,
                                               std::uint64_t seed0 = 1,
                                               double threshold_coeff = 0.02) {
    if (!(eps > 0.0) || eps > 0.1 || sigma < 0.0 || warm_n < 0 || rho < 1 || n_seeds == 0)
        throw Error(Error::Kind::invalid_input, "lower bound run: bad arguments");

    ExperimentConfig cfg;
    cfg.model.mode = ModelSpec::Mode::multi;
    cfg.model.d = 1;
    cfg.model.k = 2;
    cfg.model.betas = {Vec{10.0 * eps}, Vec{8.0 * eps}};
    cfg.model.noise_s = 1.0;
    cfg.adversary = LowerBound2Adversary{};
    cfg.perturbation = sigma > 0.0
                           ? PerturbationSpec{PerturbationSpec::Kind::gaussian, sigma, 0.0}
                           : PerturbationSpec{PerturbationSpec::Kind::none, 0.0, 0.0};
    cfg.warm_start.n = warm_n;
    cfg.horizon = rho;
    for (std::size_t i = 0; i < n_seeds; ++i) cfg.seeds.push_back(seed0 + i);

    const ExperimentResult res = run_experiment(cfg, /*write_files=*/false);

    LowerBoundRun run;
    run.which = "beta-norm";
    run.threshold = threshold_coeff * 2.0 * eps * static_cast<double>(rho);
    run.instance = {{"eps", eps},          {"sigma", sigma}, {"warm_start_n", warm_n},
                    {"rho", rho},          {"betas", {10.0 * eps, 8.0 * eps}},
                    {"threshold", run.threshold}, {"seeds", n_seeds}};
    detail::finish_lower_bound(run, res);
    return run;
}

inline json lower_bound_run_to_json(const LowerBoundRun& run) {
    json j;
    j["which"] = run.which;
    j["instance"] = run.instance;
    j["threshold"] = run.threshold;
    j["fraction_over_threshold"] = run.fraction_over;
    j["final_cum_regret"] = run.final_regrets;
    j["checkpoints"] = run.checkpoints;
    j["mean_checkpoint_cum_regret"] = run.mean_checkpoint_cum_regret;
    return j;
}

// ---- Sweep ----------------------------------------------------------------------

struct SweepAxis {
    std::string path; // JSON pointer into the experiment config
    std::vector<json> values;
};

// Sweep = base experiment config + "sweep": {"axes": [{path, values}, ...]}.
// Every point in the Cartesian product is validated and run independently;
// rows come back in lexicographic axis order.
struct SweepPointResult {
    json point; // axis path -> value
    json aggregate;
    std::vector<double> final_regrets;
};

struct SweepResult {
    std::vector<SweepPointResult> points;
    json summary;
    std::string summary_path;
    std::string csv_path;
};

inline std::vector<SweepAxis> parse_sweep_axes(const json& root) {
    using namespace cfgdetail;
    if (!root.contains("sweep")) throw ConfigError("/sweep", "missing required field");
    const json& js = root["sweep"];
    const json& ja = require(js, "/sweep", "axes");
    if (!ja.is_array() || ja.empty())
        throw ConfigError("/sweep/axes", "expected a non-empty array");
    std::vector<SweepAxis> axes;
    for (std::size_t i = 0; i < ja.size(); ++i) {
        const std::string p = "/sweep/axes/" + std::to_string(i);
        SweepAxis ax;
        ax.path = as_string(require(ja[i], p, "path"), p + "/path");
        if (ax.path.empty() || ax.path[0] != '/')
            throw ConfigError(p + "/path", "expected a JSON pointer starting with '/'");
        const json& jv = require(ja[i], p, "values");
        if (!jv.is_array() || jv.empty())
            throw ConfigError(p + "/values", "expected a non-empty array");
        for (const json& v : jv) ax.values.push_back(v);
        axes.push_back(std::move(ax));
    }
    return axes;
}

inline SweepResult run_sweep(const json& root, bool write_files = true) {
    namespace fs = std::filesystem;
    const std::vector<SweepAxis> axes = parse_sweep_axes(root);

    json base = root;
    base.erase("sweep");

    std::size_t n_points = 1;
    for (const SweepAxis& ax : axes) n_points *= ax.values.size();

    // Materialize and validate every point config up front so a bad grid value
    // fails before any work is done.
    std::vector<json> point_jsons(n_points);
    std::vector<ExperimentConfig> point_cfgs(n_points);
    std::vector<json> point_labels(n_points);
    for (std::size_t p = 0; p < n_points; ++p) {
        json pj = base;
        json label;
        std::size_t rem = p;
        for (const SweepAxis& ax : axes) {
            const json& val = ax.values[rem % ax.values.size()];
            rem /= ax.values.size();
            pj[json::json_pointer(ax.path)] = val;
            label[ax.path] = val;
        }
        point_jsons[p] = pj;
        point_labels[p] = label;
        point_cfgs[p] = parse_experiment_config(pj);
    }

    SweepResult result;
    result.points.resize(n_points);
    detail::parallel_for_index(n_points, [&](std::size_t p) {
        const ExperimentResult res = run_experiment(point_cfgs[p], /*write_files=*/false);
        SweepPointResult pr;
        pr.point = point_labels[p];
        pr.aggregate = res.summary["aggregate"];
        for (const SeedResult& sr : res.per_seed) pr.final_regrets.push_back(sr.final_cum_regret);
        result.points[p] = std::move(pr);
    });

    json points = json::array();
    for (const SweepPointResult& pr : result.points)
        points.push_back({{"point", pr.point}, {"aggregate", pr.aggregate}});
    result.summary["points"] = points;

    if (write_files) {
        const ExperimentConfig& c0 = point_cfgs[0];
        fs::create_directories(c0.output.dir);
        const fs::path csv_path = fs::path(c0.output.dir) / (c0.output.name + "_sweep.csv");
        std::ofstream os(csv_path, std::ios::binary);
        if (!os)
            throw Error(Error::Kind::invalid_input, "run_sweep: cannot open " + csv_path.string());
        os << "point";
        for (const SweepAxis& ax : axes) os << ',' << ax.path;
        os << ",seed,final_cum_regret\n";
        for (std::size_t p = 0; p < n_points; ++p) {
            const ExperimentConfig& pc = point_cfgs[p];
            for (std::size_t si = 0; si < pc.seeds.size(); ++si) {
                os << p;
                std::size_t rem = p;
                for (const SweepAxis& ax : axes) {
                    os << ',' << ax.values[rem % ax.values.size()].dump();
                    rem /= ax.values.size();
                }
                os << ',' << pc.seeds[si] << ','
                   << detail::format_double(result.points[p].final_regrets[si]) << "\n";
            }
        }
        result.csv_path = csv_path.string();

        const fs::path sum_path = fs::path(c0.output.dir) / (c0.output.name + "_sweep.json");
        std::ofstream js(sum_path, std::ios::binary);
        js << result.summary.dump(2) << "\n";
        result.summary_path = sum_path.string();
    }
    return result;
}

} // namespace gbandit
