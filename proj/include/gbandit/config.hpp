#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gbandit/bandit.hpp"
#include "gbandit/distributions.hpp"
#include "gbandit/environment.hpp"
#include "gbandit/errors.hpp"

namespace gbandit {

using nlohmann::json;

// Configuration rejection carrying the JSON-pointer path of the offending
// field, e.g. "/model/betas/0".
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& msg)
        : Error(Kind::invalid_input, path + ": " + msg), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct OutputSpec {
    std::string dir = "out";
    std::string name = "run";
};

struct SlopeWindow {
    std::int64_t t_lo = 1;
    std::int64_t t_hi = 1;
};

struct ExperimentConfig {
    ModelSpec model;
    AdversarySpec adversary = FixedMeansAdversary{};
    PerturbationSpec perturbation;
    WarmStartSpec warm_start;
    std::int64_t horizon = 1;
    std::vector<std::uint64_t> seeds;
    std::vector<std::int64_t> checkpoints; // sorted, unique, within [1, horizon]
    OutputSpec output;
    std::int64_t lambda_refresh_every = 1;
    bool store_details = false;
    std::optional<SlopeWindow> slope_window;

    EpisodeOptions episode_options() const {
        return EpisodeOptions{lambda_refresh_every, store_details};
    }
};

namespace cfgdetail {

inline const json& require(const json& obj, const std::string& parent, const char* key) {
    if (!obj.is_object()) throw ConfigError(parent.empty() ? "/" : parent, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(parent + "/" + key, "missing required field");
    return *it;
}

inline double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<double>();
}

inline std::int64_t as_integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
    return j.get<std::int64_t>();
}

inline bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
    return j.get<bool>();
}

inline std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
}

inline Vec as_vector(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array");
    Vec v;
    v.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(path + "/" + std::to_string(i), "expected a number");
        v.push_back(j[i].get<double>());
    }
    return v;
}

inline std::vector<Vec> as_mean_list(const json& j, const std::string& path, std::size_t k,
                                     std::size_t d, double max_norm) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of vectors");
    if (j.size() != k)
        throw ConfigError(path, "expected exactly " + std::to_string(k) + " vectors");
    std::vector<Vec> out;
    out.reserve(k);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = path + "/" + std::to_string(i);
        Vec v = as_vector(j[i], p);
        if (v.size() != d) throw ConfigError(p, "expected dimension " + std::to_string(d));
        if (!all_finite(v)) throw ConfigError(p, "non-finite entry");
        if (norm(v) > max_norm + kMeanNormSlack)
            throw ConfigError(p, "norm exceeds " + std::to_string(max_norm));
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace cfgdetail

inline ExperimentConfig parse_experiment_config(const json& root) {
    using namespace cfgdetail;
    ExperimentConfig cfg;

    // -- model
    const json& jm = require(root, "", "model");
    const std::string mode = as_string(require(jm, "/model", "mode"), "/model/mode");
    if (mode == "single")
        cfg.model.mode = ModelSpec::Mode::single;
    else if (mode == "multi")
        cfg.model.mode = ModelSpec::Mode::multi;
    else
        throw ConfigError("/model/mode", "expected \"single\" or \"multi\"");
    const std::int64_t d = as_integer(require(jm, "/model", "d"), "/model/d");
    const std::int64_t k = as_integer(require(jm, "/model", "k"), "/model/k");
    if (d < 1) throw ConfigError("/model/d", "must be >= 1");
    if (k < 1) throw ConfigError("/model/k", "must be >= 1");
    cfg.model.d = static_cast<std::size_t>(d);
    cfg.model.k = static_cast<std::size_t>(k);
    const std::size_t expect_betas = cfg.model.mode == ModelSpec::Mode::single ? 1 : cfg.model.k;
    cfg.model.betas = as_mean_list(require(jm, "/model", "betas"), "/model/betas", expect_betas,
                                   cfg.model.d, 1.0);
    if (jm.contains("noise_s")) {
        cfg.model.noise_s = as_number(jm["noise_s"], "/model/noise_s");
        if (cfg.model.noise_s < 0.0) throw ConfigError("/model/noise_s", "must be >= 0");
    }

    // -- adversary
    const json& ja = require(root, "", "adversary");
    const std::string kind = as_string(require(ja, "/adversary", "kind"), "/adversary/kind");
    if (kind == "fixed-means") {
        FixedMeansAdversary adv;
        adv.means = as_mean_list(require(ja, "/adversary", "means"), "/adversary/means",
                                 cfg.model.k, cfg.model.d, 1.0);
        cfg.adversary = adv;
    } else if (kind == "lower-bound-1") {
        if (cfg.model.d != 1 || cfg.model.k != 2)
            throw ConfigError("/adversary/kind", "lower-bound-1 requires d = 1 and k = 2");
        LowerBound1Adversary adv;
        adv.n = as_integer(require(ja, "/adversary", "n"), "/adversary/n");
        if (adv.n < 1) throw ConfigError("/adversary/n", "must be >= 1");
        cfg.adversary = adv;
    } else if (kind == "lower-bound-2") {
        if (cfg.model.d != 1 || cfg.model.k != 2)
            throw ConfigError("/adversary/kind", "lower-bound-2 requires d = 1 and k = 2");
        cfg.adversary = LowerBound2Adversary{};
    } else if (kind == "scripted-adaptive") {
        ScriptedAdaptiveAdversary adv;
        adv.period = as_integer(require(ja, "/adversary", "period"), "/adversary/period");
        if (adv.period < 1) throw ConfigError("/adversary/period", "must be >= 1");
        adv.default_means = as_mean_list(require(ja, "/adversary", "default_means"),
                                         "/adversary/default_means", cfg.model.k, cfg.model.d, 1.0);
        if (ja.contains("entries")) {
            const json& je = ja["entries"];
            if (!je.is_array()) throw ConfigError("/adversary/entries", "expected an array");
            for (std::size_t i = 0; i < je.size(); ++i) {
                const std::string p = "/adversary/entries/" + std::to_string(i);
                ScriptedEntry entry;
                entry.round_mod = as_integer(require(je[i], p, "round_mod"), p + "/round_mod");
                if (entry.round_mod < 0 || entry.round_mod >= adv.period)
                    throw ConfigError(p + "/round_mod", "must lie in [0, period)");
                if (je[i].contains("last_arm")) {
                    const std::int64_t la = as_integer(je[i]["last_arm"], p + "/last_arm");
                    if (la < -1 || la > static_cast<std::int64_t>(cfg.model.k))
                        throw ConfigError(p + "/last_arm", "must lie in [-1, k]");
                    entry.last_arm = static_cast<int>(la);
                }
                entry.means = as_mean_list(require(je[i], p, "means"), p + "/means", cfg.model.k,
                                           cfg.model.d, 1.0);
                adv.entries.push_back(std::move(entry));
            }
        }
        cfg.adversary = adv;
    } else {
        throw ConfigError("/adversary/kind", "unknown adversary kind \"" + kind + "\"");
    }

    // -- perturbation
    const json& jp = require(root, "", "perturbation");
    const std::string pkind = as_string(require(jp, "/perturbation", "kind"), "/perturbation/kind");
    if (pkind == "none") {
        cfg.perturbation.kind = PerturbationSpec::Kind::none;
    } else if (pkind == "gaussian") {
        cfg.perturbation.kind = PerturbationSpec::Kind::gaussian;
        cfg.perturbation.sigma =
            as_number(require(jp, "/perturbation", "sigma"), "/perturbation/sigma");
        if (cfg.perturbation.sigma < 0.0) throw ConfigError("/perturbation/sigma", "must be >= 0");
    } else if (pkind == "truncated-rotated") {
        cfg.perturbation.kind = PerturbationSpec::Kind::truncated_rotated;
        cfg.perturbation.sigma =
            as_number(require(jp, "/perturbation", "sigma"), "/perturbation/sigma");
        if (cfg.perturbation.sigma <= 0.0) throw ConfigError("/perturbation/sigma", "must be > 0");
        cfg.perturbation.rhat = as_number(require(jp, "/perturbation", "rhat"), "/perturbation/rhat");
        if (cfg.perturbation.rhat < cfg.perturbation.sigma)
            throw ConfigError("/perturbation/rhat", "must be >= sigma");
    } else {
        throw ConfigError("/perturbation/kind", "unknown perturbation kind \"" + pkind + "\"");
    }

    // -- warm start (optional)
    if (root.contains("warm_start")) {
        const json& jw = root["warm_start"];
        if (!jw.is_object()) throw ConfigError("/warm_start", "expected an object");
        if (jw.contains("n")) {
            cfg.warm_start.n = as_integer(jw["n"], "/warm_start/n");
            if (cfg.warm_start.n < 0) throw ConfigError("/warm_start/n", "must be >= 0");
        }
        if (jw.contains("source")) {
            const std::string src = as_string(jw["source"], "/warm_start/source");
            if (src == "perturbed-adversary")
                cfg.warm_start.source = WarmStartSpec::Source::perturbed_adversary;
            else if (src == "explicit-data")
                cfg.warm_start.source = WarmStartSpec::Source::explicit_data;
            else
                throw ConfigError("/warm_start/source",
                                  "expected \"perturbed-adversary\" or \"explicit-data\"");
        }
        if (cfg.warm_start.source == WarmStartSpec::Source::explicit_data) {
            const json& jr = require(jw, "/warm_start", "rows");
            if (!jr.is_array()) throw ConfigError("/warm_start/rows", "expected an array");
            for (std::size_t i = 0; i < jr.size(); ++i) {
                const std::string p = "/warm_start/rows/" + std::to_string(i);
                WarmStartSpec::Row row;
                const std::int64_t arm = as_integer(require(jr[i], p, "arm"), p + "/arm");
                if (arm < 1 || arm > static_cast<std::int64_t>(cfg.model.k))
                    throw ConfigError(p + "/arm", "must lie in [1, k]");
                row.arm = static_cast<int>(arm - 1);
                row.x = as_vector(require(jr[i], p, "x"), p + "/x");
                if (row.x.size() != cfg.model.d)
                    throw ConfigError(p + "/x", "expected dimension " + std::to_string(cfg.model.d));
                row.reward = as_number(require(jr[i], p, "reward"), p + "/reward");
                cfg.warm_start.rows.push_back(std::move(row));
            }
        }
    }

    // -- horizon / seeds / checkpoints
    cfg.horizon = as_integer(require(root, "", "horizon"), "/horizon");
    if (cfg.horizon < 1) throw ConfigError("/horizon", "must be >= 1");

    const json& js = require(root, "", "seeds");
    if (!js.is_array() || js.empty()) throw ConfigError("/seeds", "expected a non-empty array");
    for (std::size_t i = 0; i < js.size(); ++i) {
        const std::string p = "/seeds/" + std::to_string(i);
        if (!js[i].is_number_integer()) throw ConfigError(p, "expected an integer");
        const std::int64_t s = js[i].get<std::int64_t>();
        if (s < 0) throw ConfigError(p, "must be >= 0");
        cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }

    if (root.contains("checkpoints")) {
        const json& jc = root["checkpoints"];
        if (!jc.is_array() || jc.empty())
            throw ConfigError("/checkpoints", "expected a non-empty array");
        for (std::size_t i = 0; i < jc.size(); ++i) {
            const std::string p = "/checkpoints/" + std::to_string(i);
            const std::int64_t t = as_integer(jc[i], p);
            if (t < 1 || t > cfg.horizon) throw ConfigError(p, "must lie in [1, horizon]");
            cfg.checkpoints.push_back(t);
        }
        std::sort(cfg.checkpoints.begin(), cfg.checkpoints.end());
        cfg.checkpoints.erase(std::unique(cfg.checkpoints.begin(), cfg.checkpoints.end()),
                              cfg.checkpoints.end());
    } else {
        // Default: ~40 geometrically spaced checkpoints.
        const double lt = std::log(static_cast<double>(cfg.horizon));
        std::int64_t prev = 0;
        for (int i = 0; i < 40; ++i) {
            const double f = static_cast<double>(i) / 39.0;
            std::int64_t t = static_cast<std::int64_t>(std::llround(std::exp(lt * f)));
            t = std::max<std::int64_t>(1, std::min(cfg.horizon, t));
            if (t > prev) {
                cfg.checkpoints.push_back(t);
                prev = t;
            }
        }
    }

    // -- output / knobs
    if (root.contains("output")) {
        const json& jo = root["output"];
        if (!jo.is_object()) throw ConfigError("/output", "expected an object");
        if (jo.contains("dir")) cfg.output.dir = as_string(jo["dir"], "/output/dir");
        if (jo.contains("name")) cfg.output.name = as_string(jo["name"], "/output/name");
    }
    if (root.contains("lambda_refresh_every")) {
        cfg.lambda_refresh_every =
            as_integer(root["lambda_refresh_every"], "/lambda_refresh_every");
        if (cfg.lambda_refresh_every < 1)
            throw ConfigError("/lambda_refresh_every", "must be >= 1");
    }
    if (root.contains("store_details"))
        cfg.store_details = as_bool(root["store_details"], "/store_details");
    if (root.contains("slope_window")) {
        const json& jsw = root["slope_window"];
        if (!jsw.is_array() || jsw.size() != 2)
            throw ConfigError("/slope_window", "expected [t_lo, t_hi]");
        SlopeWindow w;
        w.t_lo = as_integer(jsw[0], "/slope_window/0");
        w.t_hi = as_integer(jsw[1], "/slope_window/1");
        if (w.t_lo < 1 || w.t_lo >= w.t_hi || w.t_hi > cfg.horizon)
            throw ConfigError("/slope_window", "need 1 <= t_lo < t_hi <= horizon");
        cfg.slope_window = w;
    }

    return cfg;
}

// ---- Condition-verification configs ------------------------------------------

struct MarginGridPoint {
    PerturbationSpec perturbation;
    double r = 0.0;
    double alpha = 0.0;
    double b = 0.0;
    Vec beta;
    double reference = 0.0; // constant the CI is compared against
    std::int64_t samples = 0;
};

struct DiversityGridPoint {
    PerturbationSpec perturbation;
    double r = 0.0;
    double b = 0.0;
    Vec beta_hat;
    Vec mu;
    std::int64_t samples = 0;
};

struct ConditionsConfig {
    std::uint64_t seed = 1;
    std::int64_t samples = 100000;
    std::vector<MarginGridPoint> margins;
    std::vector<DiversityGridPoint> diversities;
    std::string output; // empty: stdout
};

inline constexpr double kGaussianMarginReference = 0.05;   // 1/20
inline constexpr double kTruncatedMarginReference = 0.0125; // 1/80

// Default per-coordinate bound under which the truncated family's margin
// constant is certified: 5r/4 + sigma sqrt(2 ln(8d)).
inline double certified_rhat(double r, double sigma, std::size_t d) {
    return 1.25 * r + sigma * std::sqrt(2.0 * std::log(8.0 * static_cast<double>(d)));
}

inline ConditionsConfig parse_conditions_config(const json& root) {
    using namespace cfgdetail;
    ConditionsConfig cfg;
    if (root.contains("seed")) {
        const std::int64_t s = as_integer(root["seed"], "/seed");
        if (s < 0) throw ConfigError("/seed", "must be >= 0");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (root.contains("samples")) {
        cfg.samples = as_integer(root["samples"], "/samples");
        if (cfg.samples < 2) throw ConfigError("/samples", "must be >= 2");
    }
    if (root.contains("output")) cfg.output = as_string(root["output"], "/output");

    auto parse_pkind = [](const json& j, const std::string& path) {
        const std::string s = as_string(j, path);
        if (s == "gaussian") return PerturbationSpec::Kind::gaussian;
        if (s == "truncated-rotated") return PerturbationSpec::Kind::truncated_rotated;
        throw ConfigError(path, "expected \"gaussian\" or \"truncated-rotated\"");
    };
    auto read_r = [](const json& j, const std::string& parent, double sigma) {
        if (j.contains("r")) return as_number(j["r"], parent + "/r");
        if (j.contains("r_over_sigma"))
            return sigma * as_number(j["r_over_sigma"], parent + "/r_over_sigma");
        throw ConfigError(parent + "/r", "missing required field (or r_over_sigma)");
    };

    if (root.contains("margins")) {
        const json& jm = root["margins"];
        if (!jm.is_array()) throw ConfigError("/margins", "expected an array");
        for (std::size_t i = 0; i < jm.size(); ++i) {
            const std::string p = "/margins/" + std::to_string(i);
            const json& e = jm[i];
            MarginGridPoint pt;
            pt.perturbation.kind = parse_pkind(require(e, p, "kind"), p + "/kind");
            pt.perturbation.sigma = as_number(require(e, p, "sigma"), p + "/sigma");
            if (pt.perturbation.sigma <= 0.0) throw ConfigError(p + "/sigma", "must be > 0");
            pt.r = read_r(e, p, pt.perturbation.sigma);
            if (pt.r <= 0.0) throw ConfigError(p + "/r", "must be > 0");
            pt.beta = as_vector(require(e, p, "beta"), p + "/beta");
            if (norm(pt.beta) <= 0.0) throw ConfigError(p + "/beta", "must be nonzero");
            pt.alpha = e.contains("alpha") ? as_number(e["alpha"], p + "/alpha")
                                           : pt.perturbation.sigma * pt.perturbation.sigma / pt.r;
            if (pt.alpha < 0.0) throw ConfigError(p + "/alpha", "must be >= 0");
            pt.b = e.contains("b") ? as_number(e["b"], p + "/b") : pt.r * norm(pt.beta);
            if (pt.perturbation.kind == PerturbationSpec::Kind::truncated_rotated) {
                pt.perturbation.rhat =
                    e.contains("rhat")
                        ? as_number(e["rhat"], p + "/rhat")
                        : certified_rhat(pt.r, pt.perturbation.sigma, pt.beta.size());
                if (pt.perturbation.rhat < pt.perturbation.sigma)
                    throw ConfigError(p + "/rhat", "must be >= sigma");
                pt.reference = kTruncatedMarginReference;
            } else {
                pt.reference = kGaussianMarginReference;
            }
            pt.samples = e.contains("samples") ? as_integer(e["samples"], p + "/samples")
                                               : cfg.samples;
            if (pt.samples < 2) throw ConfigError(p + "/samples", "must be >= 2");
            cfg.margins.push_back(std::move(pt));
        }
    }

    if (root.contains("diversity")) {
        const json& jd = root["diversity"];
        if (!jd.is_array()) throw ConfigError("/diversity", "expected an array");
        for (std::size_t i = 0; i < jd.size(); ++i) {
            const std::string p = "/diversity/" + std::to_string(i);
            const json& e = jd[i];
            DiversityGridPoint pt;
            pt.perturbation.kind = parse_pkind(require(e, p, "kind"), p + "/kind");
            pt.perturbation.sigma = as_number(require(e, p, "sigma"), p + "/sigma");
            if (pt.perturbation.sigma <= 0.0) throw ConfigError(p + "/sigma", "must be > 0");
            pt.r = read_r(e, p, pt.perturbation.sigma);
            if (pt.r <= 0.0) throw ConfigError(p + "/r", "must be > 0");
            pt.beta_hat = as_vector(require(e, p, "beta_hat"), p + "/beta_hat");
            if (e.contains("mu")) {
                pt.mu = as_vector(e["mu"], p + "/mu");
                if (pt.mu.size() != pt.beta_hat.size())
                    throw ConfigError(p + "/mu", "dimension mismatch with beta_hat");
                if (norm(pt.mu) > 1.0 + kMeanNormSlack)
                    throw ConfigError(p + "/mu", "norm exceeds 1");
            } else {
                pt.mu.assign(pt.beta_hat.size(), 0.0);
            }
            if (e.contains("b"))
                pt.b = as_number(e["b"], p + "/b");
            else if (e.contains("b_over_r"))
                pt.b = pt.r * as_number(e["b_over_r"], p + "/b_over_r") * norm(pt.beta_hat);
            else
                pt.b = pt.r * norm(pt.beta_hat);
            if (pt.perturbation.kind == PerturbationSpec::Kind::truncated_rotated) {
                pt.perturbation.rhat =
                    e.contains("rhat") ? as_number(e["rhat"], p + "/rhat") : 2.0 * pt.r;
                if (pt.perturbation.rhat < pt.perturbation.sigma)
                    throw ConfigError(p + "/rhat", "must be >= sigma");
            }
            pt.samples = e.contains("samples") ? as_integer(e["samples"], p + "/samples")
                                               : cfg.samples;
            if (pt.samples < 2) throw ConfigError(p + "/samples", "must be >= 2");
            cfg.diversities.push_back(std::move(pt));
        }
    }

    if (cfg.margins.empty() && cfg.diversities.empty())
        throw ConfigError("/", "config declares neither margins nor diversity grid points");
    return cfg;
}

} // namespace gbandit
