#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gbandit/distributions.hpp"
#include "gbandit/environment.hpp"
#include "gbandit/errors.hpp"
#include "gbandit/linalg.hpp"
#include "gbandit/rng.hpp"

namespace gbandit {

// The ground truth the simulator plays against. `single` shares one
// coefficient vector across arms; `multi` gives each arm its own. `noise_s`
// is the reward noise *variance* (0 allowed for noise-free runs).
struct ModelSpec {
    enum class Mode { single, multi };

    Mode mode = Mode::single;
    std::size_t d = 1;
    std::size_t k = 1;
    std::vector<Vec> betas; // 1 vector (single) or k vectors (multi)
    double noise_s = 1.0;

    const Vec& beta_for(std::size_t arm) const {
        return mode == Mode::single ? betas.front() : betas[arm];
    }

    void check() const {
        if (d == 0 || k == 0)
            throw Error(Error::Kind::invalid_input, "ModelSpec: d and k must be positive");
        const std::size_t want = mode == Mode::single ? 1 : k;
        if (betas.size() != want)
            throw Error(Error::Kind::invalid_input, "ModelSpec: wrong number of beta vectors");
        for (const Vec& b : betas) {
            if (b.size() != d)
                throw Error(Error::Kind::invalid_input, "ModelSpec: beta has wrong dimension");
            if (!all_finite(b))
                throw Error(Error::Kind::invalid_input, "ModelSpec: non-finite beta");
            if (norm(b) > 1.0 + kMeanNormSlack)
                throw Error(Error::Kind::invalid_input, "ModelSpec: beta leaves the unit ball");
        }
        if (!(noise_s >= 0.0))
            throw Error(Error::Kind::invalid_input, "ModelSpec: noise_s must be >= 0");
    }
};

namespace detail {
// In-place LL^T factorization attempt; returns false if a pivot is not safely
// positive, in which case the caller falls back to the eigendecomposition.
inline bool cholesky_solve(const SymMatrix& a, const Vec& rhs, Vec& out) {
    const std::size_t d = a.dim();
    std::vector<double> l(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t m = 0; m < j; ++m) s -= l[i * d + m] * l[j * d + m];
            if (i == j) {
                if (s <= 1e-12 * std::max(1.0, a(i, i))) return false;
                l[i * d + i] = std::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Vec y(d);
    for (std::size_t i = 0; i < d; ++i) {
        double s = rhs[i];
        for (std::size_t m = 0; m < i; ++m) s -= l[i * d + m] * y[m];
        y[i] = s / l[i * d + i];
    }
    out.assign(d, 0.0);
    for (std::size_t ii = d; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t m = ii + 1; m < d; ++m) s -= l[m * d + ii] * out[m];
        out[ii] = s / l[ii * d + ii];
    }
    return true;
}
} // namespace detail

// Running ordinary-least-squares estimator: Gram matrix Z = sum x x^T, moment
// vector sum r x, and the minimum-norm solution of Z beta = moment. A full
// refresh runs the eigendecomposition, which yields lambda_min(Z) as a
// byproduct; with refresh_every > 1 the rounds in between solve by Cholesky
// (identical solution on a positive-definite Z) and carry lambda_min stale.
class OlsState {
public:
    OlsState() = default;
    explicit OlsState(std::size_t d)
        : gram_(d), moment_(d, 0.0), beta_hat_(d, 0.0) {}

    void update(const Vec& x, double reward, std::int64_t refresh_every = 1) {
        if (x.size() != moment_.size())
            throw Error(Error::Kind::invalid_input, "OlsState::update: dimension mismatch");
        if (!std::isfinite(reward) || !all_finite(x))
            throw Error(Error::Kind::invalid_input, "OlsState::update: non-finite observation");
        gram_.add_outer(x);
        for (std::size_t i = 0; i < x.size(); ++i) moment_[i] += reward * x[i];
        ++count_;
        if (refresh_every <= 1 || count_ % refresh_every == 0 || !ever_refreshed_) {
            refresh();
        } else if (lambda_min_ <= 0.0 || !detail::cholesky_solve(gram_, moment_, beta_hat_)) {
            refresh();
        }
    }

    // Eigendecomposition path: recomputes both beta_hat and lambda_min.
    void refresh() {
        const EigenSystem es = eigen_decompose(gram_);
        double lam_min = es.values[0], lam_max = es.values[0];
        for (double v : es.values) {
            lam_min = std::min(lam_min, v);
            lam_max = std::max(lam_max, v);
        }
        lambda_min_ = lam_min;
        const std::size_t d = moment_.size();
        beta_hat_.assign(d, 0.0);
        if (lam_max > 0.0) {
            const double cutoff = 1e-10 * lam_max;
            for (std::size_t j = 0; j < d; ++j) {
                if (es.values[j] <= cutoff) continue;
                double vm = 0.0;
                for (std::size_t i = 0; i < d; ++i) vm += es.vectors(i, j) * moment_[i];
                const double coef = vm / es.values[j];
                for (std::size_t i = 0; i < d; ++i) beta_hat_[i] += coef * es.vectors(i, j);
            }
        }
        ever_refreshed_ = true;
    }

    const Vec& beta_hat() const { return beta_hat_; }
    double lambda_min() const { return lambda_min_; }
    std::int64_t count() const { return count_; }
    const SymMatrix& gram() const { return gram_; }
    const Vec& moment() const { return moment_; }

private:
    SymMatrix gram_;
    Vec moment_;
    Vec beta_hat_;
    double lambda_min_ = 0.0;
    std::int64_t count_ = 0;
    bool ever_refreshed_ = false;
};

// Forced exploration before the greedy phase: `n` pulls of every arm, either
// simulated against the (perturbed) adversary or supplied as explicit rows.
struct WarmStartSpec {
    enum class Source { perturbed_adversary, explicit_data };

    struct Row {
        int arm = 0; // 0-based
        Vec x;
        double reward = 0.0;
    };

    std::int64_t n = 0;
    Source source = Source::perturbed_adversary;
    std::vector<Row> rows; // explicit_data only

    void check(std::size_t d, std::size_t k) const {
        if (n < 0)
            throw Error(Error::Kind::invalid_input, "WarmStartSpec: n must be >= 0");
        if (source == Source::explicit_data) {
            for (const Row& r : rows) {
                if (r.arm < 0 || static_cast<std::size_t>(r.arm) >= k)
                    throw Error(Error::Kind::invalid_input, "WarmStartSpec: row arm out of range");
                if (r.x.size() != d || !all_finite(r.x) || !std::isfinite(r.reward))
                    throw Error(Error::Kind::invalid_input, "WarmStartSpec: malformed row");
            }
        }
    }
};

// Per-round log of an episode. Arms are 0-based here; the CSV layer shifts to
// 1-based. `beta_err` holds ||beta_i - beta_hat_i|| flattened row-major
// (T x k); single mode repeats the shared estimator's error across the k
// slots. When `has_details` is set, the per-round means and estimates are
// retained (row-major T x k x d) so condition audits can replay the round.
struct RegretTrace {
    std::size_t k = 0, d = 0;
    std::vector<int> chosen, optimal;
    std::vector<double> inst_regret, cum_regret, lambda_min;
    std::vector<double> beta_err;

    bool has_details = false;
    std::vector<double> means_flat;
    std::vector<double> beta_hats_flat;

    std::int64_t reward_draws = 0;

    std::size_t rounds() const { return chosen.size(); }
    double final_cum_regret() const { return cum_regret.empty() ? 0.0 : cum_regret.back(); }

    double mean_at(std::size_t t, std::size_t arm, std::size_t j) const {
        return means_flat[(t * k + arm) * d + j];
    }
    Vec mean_vec(std::size_t t, std::size_t arm) const {
        Vec v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = mean_at(t, arm, j);
        return v;
    }
    Vec beta_hat_vec(std::size_t t, std::size_t arm) const {
        Vec v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = beta_hats_flat[(t * k + arm) * d + j];
        return v;
    }
};

// Greedy arm choice: argmax_i estimates[i] . contexts[i], ties to the lowest
// index (strict comparison keeps the first maximizer).
inline int greedy_select(const std::vector<Vec>& estimates, const std::vector<Vec>& contexts) {
    if (estimates.empty() || estimates.size() != contexts.size())
        throw Error(Error::Kind::invalid_input, "greedy_select: size mismatch");
    int best = 0;
    double best_score = dot(estimates[0], contexts[0]);
    for (std::size_t i = 1; i < estimates.size(); ++i) {
        const double s = dot(estimates[i], contexts[i]);
        if (s > best_score) {
            best_score = s;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Observed reward for pulling `arm` on `context`: beta_arm . x + N(0, s).
inline double draw_reward(const ModelSpec& model, std::size_t arm, const Vec& context,
                          RngStream& rng) {
    const double mean = dot(model.beta_for(arm), context);
    if (model.noise_s == 0.0) return mean;
    return mean + sample_gaussian(std::sqrt(model.noise_s), rng);
}

struct EpisodeOptions {
    std::int64_t lambda_refresh_every = 1;
    bool store_details = false;
};

namespace detail {
inline std::vector<Vec> current_estimates(const ModelSpec& model,
                                          const std::vector<OlsState>& states) {
    std::vector<Vec> est(model.k);
    for (std::size_t i = 0; i < model.k; ++i)
        est[i] = model.mode == ModelSpec::Mode::single ? states[0].beta_hat()
                                                       : states[i].beta_hat();
    return est;
}
} // namespace detail

// Runs the forced-exploration phase and returns the seeded estimator states
// (one shared state in single mode). Pseudo-rounds are indexed -n..-1 so their
// randomness never collides with the episode proper; each pseudo-round pulls
// every arm once on a fresh adversary round. `reward_draws`, if given,
// accumulates the number of reward samples consumed.
inline std::vector<OlsState> run_warm_start(const ModelSpec& model, const WarmStartSpec& warm,
                                            const AdversarySpec& adversary,
                                            const PerturbationSpec& perturbation,
                                            std::uint64_t seed,
                                            std::int64_t* reward_draws = nullptr) {
    model.check();
    warm.check(model.d, model.k);
    const std::size_t n_states = model.mode == ModelSpec::Mode::single ? 1 : model.k;
    std::vector<OlsState> states(n_states, OlsState(model.d));
    auto state_for = [&](std::size_t arm) -> OlsState& {
        return model.mode == ModelSpec::Mode::single ? states[0] : states[arm];
    };

    if (warm.source == WarmStartSpec::Source::explicit_data) {
        for (const WarmStartSpec::Row& row : warm.rows)
            state_for(static_cast<std::size_t>(row.arm)).update(row.x, row.reward);
        return states;
    }

    History warm_history;
    for (std::int64_t pull = 0; pull < warm.n; ++pull) {
        const std::int64_t round = pull - warm.n; // -n .. -1
        const std::vector<Vec> est = detail::current_estimates(model, states);
        const AdversaryChoice choice = adversary_next(adversary, warm_history, &est);
        const RoundContexts rc = perturb_round(choice, perturbation, est, seed, round,
                                               StreamPurpose::warm_perturbation);
        double last_reward = 0.0;
        for (std::size_t arm = 0; arm < model.k; ++arm) {
            RngStream rng(seed, round, arm, StreamPurpose::warm_reward);
            const double r = draw_reward(model, arm, rc.contexts[arm], rng);
            if (reward_draws) ++*reward_draws;
            state_for(arm).update(rc.contexts[arm], r);
            last_reward = r;
        }
        warm_history.append(HistoryRecord{rc, static_cast<int>(model.k) - 1, last_reward});
    }
    return states;
}

// One full episode: warm start, then T rounds of
//   estimates -> adversary means -> perturbation -> greedy pull -> reward
//   -> least-squares update.
// Pseudo-regret is measured against the best arm under the true coefficients
// on the realized contexts; warm-start pulls never appear in the trace.
inline RegretTrace run_episode(const ModelSpec& model, const AdversarySpec& adversary,
                               const PerturbationSpec& perturbation, const WarmStartSpec& warm,
                               std::int64_t T, std::uint64_t seed,
                               const EpisodeOptions& options = {}) {
    model.check();
    perturbation.check();
    if (T < 1)
        throw Error(Error::Kind::invalid_input, "run_episode: horizon must be >= 1");

    RegretTrace trace;
    trace.k = model.k;
    trace.d = model.d;
    trace.has_details = options.store_details;
    trace.chosen.reserve(T);
    trace.optimal.reserve(T);
    trace.inst_regret.reserve(T);
    trace.cum_regret.reserve(T);
    trace.lambda_min.reserve(T);
    trace.beta_err.reserve(T * model.k);

    std::vector<OlsState> states =
        run_warm_start(model, warm, adversary, perturbation, seed, &trace.reward_draws);

    History history;
    double cum = 0.0;
    for (std::int64_t t = 1; t <= T; ++t) {
        const std::vector<Vec> est = detail::current_estimates(model, states);
        const AdversaryChoice choice = adversary_next(adversary, history, &est);
        const RoundContexts rc = perturb_round(choice, perturbation, est, seed, t);

        const int chosen = greedy_select(est, rc.contexts);

        int optimal = 0;
        double best_true = dot(model.beta_for(0), rc.contexts[0]);
        for (std::size_t i = 1; i < model.k; ++i) {
            const double s = dot(model.beta_for(i), rc.contexts[i]);
            if (s > best_true) {
                best_true = s;
                optimal = static_cast<int>(i);
            }
        }

        RngStream reward_rng(seed, t, static_cast<std::uint64_t>(chosen), StreamPurpose::reward);
        const double reward = draw_reward(model, chosen, rc.contexts[chosen], reward_rng);
        ++trace.reward_draws;

        OlsState& st = model.mode == ModelSpec::Mode::single ? states[0]
                                                             : states[chosen];
        st.update(rc.contexts[chosen], reward, options.lambda_refresh_every);

        const double inst = best_true - dot(model.beta_for(chosen), rc.contexts[chosen]);
        cum += inst;

        trace.chosen.push_back(chosen);
        trace.optimal.push_back(optimal);
        trace.inst_regret.push_back(inst);
        trace.cum_regret.push_back(cum);

        double lam = states[0].lambda_min();
        if (model.mode == ModelSpec::Mode::multi)
            for (std::size_t i = 1; i < model.k; ++i)
                lam = std::min(lam, states[i].lambda_min());
        trace.lambda_min.push_back(lam);

        for (std::size_t i = 0; i < model.k; ++i) {
            const OlsState& si = model.mode == ModelSpec::Mode::single ? states[0] : states[i];
            Vec diff = model.beta_for(i);
            const Vec& bh = si.beta_hat();
            for (std::size_t j = 0; j < model.d; ++j) diff[j] -= bh[j];
            trace.beta_err.push_back(norm(diff));
        }

        if (options.store_details) {
            // Estimates as they stood when the round was played (pre-update).
            for (std::size_t i = 0; i < model.k; ++i)
                trace.means_flat.insert(trace.means_flat.end(), rc.means[i].begin(),
                                        rc.means[i].end());
            for (std::size_t i = 0; i < model.k; ++i)
                trace.beta_hats_flat.insert(trace.beta_hats_flat.end(), est[i].begin(),
                                            est[i].end());
        }

        history.append(HistoryRecord{rc, chosen, reward});
    }
    return trace;
}

// ---- Closed-form warm-start sizes -------------------------------------------

// Smallest warm start that certifies the diversity constant through the Gram
// matrix: max{ 128 ln(192 k / delta), 320 R^2 ln(320 R^2 d k / delta) / lambda0 }.
inline double warm_start_n_min(double delta, double R, std::size_t d, std::size_t k,
                               double lambda0) {
    if (!(delta > 0.0 && delta < 1.0) || R <= 0.0 || d == 0 || k == 0 || lambda0 <= 0.0)
        throw Error(Error::Kind::invalid_input, "warm_start_n_min: bad arguments");
    const double dk = static_cast<double>(d) * static_cast<double>(k);
    const double case1 = 128.0 * std::log(192.0 * static_cast<double>(k) / delta);
    const double case2 = 320.0 * R * R * std::log(320.0 * R * R * dk / delta) / lambda0;
    return std::max(case1, case2);
}

struct WarmStartSizeParams {
    double delta = 0.05;
    double R = 1.0;       // context norm bound
    std::size_t d = 1;
    std::size_t k = 1;
    double lambda0 = 1.0; // diversity constant
    double alpha = 1.0;   // margin shift
    double s = 1.0;       // reward noise variance
    double min_beta_norm = 1.0;
    double sigma = 0.1;   // perturbation scale (order-of-magnitude case only)
};

struct WarmStartSizes {
    double n_min;     // Gram/diversity requirement at the given delta
    double n_star;    // full convergence requirement (uses n_min at delta/2)
    double headline_n; // order-of-magnitude headline with all constants set to 1
};

inline WarmStartSizes warm_start_sizes(const WarmStartSizeParams& p) {
    if (p.alpha <= 0.0 || p.s <= 0.0 || p.min_beta_norm <= 0.0 || p.sigma <= 0.0)
        throw Error(Error::Kind::invalid_input, "warm_start_sizes: bad arguments");
    const double n_min_here = warm_start_n_min(p.delta, p.R, p.d, p.k, p.lambda0);
    const double n_min_half = warm_start_n_min(p.delta / 2.0, p.R, p.d, p.k, p.lambda0);

    const double dd = static_cast<double>(p.d);
    const double kk = static_cast<double>(p.k);
    const double denom = p.alpha * p.lambda0 * p.min_beta_norm;
    const double denom2 = denom * denom;
    const double case1 = 4.0 + std::sqrt(2.0 * std::log(2.0 * kk / p.delta));
    const double case3 = (49152.0 * p.R * dd * p.s / denom2) *
                         std::log(98304.0 * p.R * dd * dd * kk * p.s / (p.delta * denom2));
    const double n_star = std::max({case1, n_min_half, case3});

    const double mb2 = p.min_beta_norm * p.min_beta_norm;
    const double sigma12 = std::pow(p.sigma, 12.0);
    const double headline_n = dd * p.s / (sigma12 * mb2) *
                             std::log(dd * kk * p.s / (p.delta * p.sigma * p.min_beta_norm));

    return WarmStartSizes{n_min_here, n_star, headline_n};
}

} // namespace gbandit
