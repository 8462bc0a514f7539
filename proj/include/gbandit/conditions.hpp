#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gbandit/bandit.hpp"
#include "gbandit/distributions.hpp"
#include "gbandit/environment.hpp"
#include "gbandit/errors.hpp"
#include "gbandit/linalg.hpp"
#include "gbandit/rng.hpp"

namespace gbandit {

inline constexpr double kZ99 = 2.5758293035489004; // two-sided 99% normal quantile
inline constexpr double kAcceptanceFloor = 1e-6;

// Monte-Carlo estimate of a diversity (lambda_hat) or margin (gamma_hat)
// quantity, with a 99% normal-approximation confidence halfwidth and the
// effective sample counts behind it. `extreme` marks grid points whose
// conditioning event is below the acceptance floor; their value fields are
// meaningless and the caller should not interpret them.
struct ConditionReport {
    enum class Kind { diversity, margin };

    Kind kind = Kind::diversity;
    double lambda_hat = 0.0;
    double gamma_hat = 0.0;
    double ci99 = 0.0;
    std::int64_t samples = 0;        // accepted (post-conditioning) draws
    std::int64_t proposals = 0;      // raw draws (== samples for exact samplers)
    double acceptance_rate = 1.0;
    bool extreme = false;
};

namespace detail {

inline double binomial_ci99(double p, std::int64_t n) {
    if (n <= 0) return 1.0;
    const double nn = static_cast<double>(n);
    return kZ99 * std::sqrt(std::max(p * (1.0 - p), 0.0) / nn) + 0.5 / nn;
}

// Samples e ~ perturbation conditioned on beta_hat . e >= b, exactly: in the
// basis sending beta_hat to the first axis the conditioning event touches only
// the first coordinate, which is then drawn from the matching truncated
// distribution by inverse CDF. Returns the analytic acceptance probability of
// the conditioning event (for floor checks and reporting).
class ConditionedPerturbationSampler {
public:
    ConditionedPerturbationSampler(const PerturbationSpec& p, const Vec& beta_hat, double b)
        : p_(p), d_(beta_hat.size()) {
        p_.check();
        if (d_ == 0)
            throw Error(Error::Kind::invalid_input, "conditioned sampler: empty direction");
        if (p_.kind == PerturbationSpec::Kind::none)
            throw Error(Error::Kind::invalid_input,
                        "conditioned sampler: degenerate (no-perturbation) family");
        const double bn = norm(beta_hat);
        rotation_ = rotation_to_first_axis(beta_hat);
        if (bn < 1e-12) {
            // Zero direction: the conditioning event is "0 >= b".
            if (b > 0.0)
                throw Error(Error::Kind::degenerate_interval,
                            "conditioned sampler: impossible conditioning on zero direction");
            unconditioned_ = true;
            lo1_ = -std::numeric_limits<double>::infinity();
        } else {
            lo1_ = std::isinf(b) && b < 0.0 ? b : b / bn; // threshold for the first coordinate
            unconditioned_ = std::isinf(lo1_) && lo1_ < 0.0;
        }

        if (p_.kind == PerturbationSpec::Kind::gaussian) {
            acceptance_ = unconditioned_ ? 1.0 : gaussian_tail(lo1_ / p_.sigma);
        } else {
            const double full = interval_mass(-p_.rhat / p_.sigma, p_.rhat / p_.sigma);
            if (!unconditioned_ && lo1_ >= p_.rhat) {
                acceptance_ = 0.0;
            } else {
                const double lo = unconditioned_ ? -p_.rhat : std::max(-p_.rhat, lo1_);
                acceptance_ = interval_mass(lo / p_.sigma, p_.rhat / p_.sigma) / full;
            }
        }
    }

    double acceptance() const { return acceptance_; }
    std::size_t dim() const { return d_; }

    Vec draw(RngStream& rng) const {
        Vec z(d_, 0.0);
        if (p_.kind == PerturbationSpec::Kind::gaussian) {
            z[0] = unconditioned_
                       ? sample_gaussian(p_.sigma, rng)
                       : p_.sigma * sample_truncated_standard(
                                        lo1_ / p_.sigma, std::numeric_limits<double>::infinity(),
                                        rng);
            for (std::size_t j = 1; j < d_; ++j) z[j] = sample_gaussian(p_.sigma, rng);
        } else {
            const double lo = unconditioned_ ? -p_.rhat : std::max(-p_.rhat, lo1_);
            z[0] = p_.sigma * sample_truncated_standard(lo / p_.sigma, p_.rhat / p_.sigma, rng);
            for (std::size_t j = 1; j < d_; ++j)
                z[j] = sample_truncated_gaussian(p_.sigma, p_.rhat, rng);
        }
        return rotation_.apply_transpose(z);
    }

private:
    static double interval_mass(double a, double b) { return gbandit::detail::interval_mass(a, b); }

    PerturbationSpec p_;
    std::size_t d_;
    Matrix rotation_;
    double lo1_ = 0.0;
    bool unconditioned_ = false;
    double acceptance_ = 1.0;
};

} // namespace detail

// Smallest eigenvalue of the empirical conditional second moment
// E[x x^T | beta_hat . e >= b], x = mu + e, from m conditioned draws. The
// confidence halfwidth is for the quadratic form along the minimizing
// eigenvector (the draws are replayed from the recorded stream position for
// the second pass, so the estimate costs O(1) memory).
inline ConditionReport estimate_diversity(const PerturbationSpec& p, const Vec& beta_hat,
                                          const Vec& mu, double b, std::int64_t m,
                                          std::uint64_t seed) {
    if (mu.size() != beta_hat.size())
        throw Error(Error::Kind::invalid_input, "estimate_diversity: dimension mismatch");
    if (m < 2)
        throw Error(Error::Kind::invalid_input, "estimate_diversity: need m >= 2");

    ConditionReport rep;
    rep.kind = ConditionReport::Kind::diversity;

    const detail::ConditionedPerturbationSampler sampler(p, beta_hat, b);
    rep.acceptance_rate = sampler.acceptance();
    if (rep.acceptance_rate < kAcceptanceFloor) {
        rep.extreme = true;
        return rep;
    }

    const std::size_t d = mu.size();
    RngStream rng(seed, 0, 0, StreamPurpose::condition_sampling);
    RngStream replay = rng; // identical stream, consumed again in pass 2

    SymMatrix second_moment(d);
    for (std::int64_t i = 0; i < m; ++i) {
        Vec x = add(mu, sampler.draw(rng));
        second_moment.add_outer(x);
    }
    second_moment.scale(1.0 / static_cast<double>(m));

    const EigenSystem es = eigen_decompose(second_moment);
    std::size_t arg_min = 0;
    for (std::size_t j = 1; j < d; ++j)
        if (es.values[j] < es.values[arg_min]) arg_min = j;
    Vec w(d);
    for (std::size_t i = 0; i < d; ++i) w[i] = es.vectors(i, arg_min);

    double s1 = 0.0, s2 = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
        const Vec x = add(mu, sampler.draw(replay));
        const double q = dot(w, x);
        const double q2 = q * q;
        s1 += q2;
        s2 += q2 * q2;
    }
    const double mm = static_cast<double>(m);
    const double mean_q2 = s1 / mm;
    const double var_q2 = std::max(s2 / mm - mean_q2 * mean_q2, 0.0);

    rep.lambda_hat = std::max(es.values[arg_min], 0.0);
    rep.ci99 = kZ99 * std::sqrt(var_q2 / mm);
    rep.samples = m;
    rep.proposals = m;
    return rep;
}

// Conditional margin estimate gamma_hat = P(beta . e > b + alpha ||beta||
// | beta . e >= b). Gaussian perturbations project exactly onto a scalar, so
// the conditional law is sampled directly and rare conditioning events cost
// nothing statistically — the report is flagged extreme only when the event's
// tail mass underflows. The truncated-rotated family (with `beta` expressed in
// the truncation basis) generally has no such projection and falls back to
// rejection with doubling batches, where the hard acceptance floor does apply.
inline ConditionReport estimate_margin(const PerturbationSpec& p, const Vec& beta, double b,
                                       double alpha, std::int64_t m, std::uint64_t seed) {
    p.check();
    if (alpha < 0.0)
        throw Error(Error::Kind::invalid_input, "estimate_margin: alpha must be >= 0");
    if (m < 1)
        throw Error(Error::Kind::invalid_input, "estimate_margin: need m >= 1");
    const double bn = norm(beta);
    if (bn <= 0.0)
        throw Error(Error::Kind::invalid_input, "estimate_margin: beta must be nonzero");

    ConditionReport rep;
    rep.kind = ConditionReport::Kind::margin;
    RngStream rng(seed, 0, 0, StreamPurpose::condition_sampling);

    if (p.kind == PerturbationSpec::Kind::gaussian) {
        // beta . e / (sigma ||beta||) is standard normal; condition by inverse CDF.
        const double c = b / (p.sigma * bn);
        const double thr = c + alpha / p.sigma;
        rep.acceptance_rate = std::isinf(c) && c < 0.0 ? 1.0 : gaussian_tail(c);
        if (rep.acceptance_rate < 1e-300) { // conditional law no longer representable
            rep.extreme = true;
            return rep;
        }
        std::int64_t hits = 0;
        for (std::int64_t i = 0; i < m; ++i) {
            const double eta =
                sample_truncated_standard(c, std::numeric_limits<double>::infinity(), rng);
            if (eta > thr) ++hits;
        }
        rep.samples = m;
        rep.proposals = m;
        rep.gamma_hat = static_cast<double>(hits) / static_cast<double>(m);
        rep.ci99 = detail::binomial_ci99(rep.gamma_hat, m);
        return rep;
    }

    if (p.kind == PerturbationSpec::Kind::none)
        throw Error(Error::Kind::invalid_input,
                    "estimate_margin: degenerate (no-perturbation) family");

    // Truncated-rotated: rejection on the linear statistic beta . z.
    const std::size_t d = beta.size();
    const double cut_hi = b + alpha * bn;
    std::int64_t accepted = 0, hits = 0, proposals = 0;
    std::int64_t batch = 1 << 16;
    const std::int64_t floor_check_at = 1 << 22;
    while (accepted < m) {
        for (std::int64_t i = 0; i < batch && accepted < m; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                v += beta[j] * sample_truncated_gaussian(p.sigma, p.rhat, rng);
            ++proposals;
            if (v >= b) {
                ++accepted;
                if (v > cut_hi) ++hits;
            }
        }
        if (accepted < m && proposals >= floor_check_at &&
            static_cast<double>(accepted) / static_cast<double>(proposals) < kAcceptanceFloor) {
            rep.extreme = true;
            rep.samples = accepted;
            rep.proposals = proposals;
            rep.acceptance_rate =
                static_cast<double>(accepted) / static_cast<double>(proposals);
            return rep;
        }
        batch *= 2;
    }
    rep.samples = accepted;
    rep.proposals = proposals;
    rep.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposals);
    rep.gamma_hat = static_cast<double>(hits) / static_cast<double>(accepted);
    rep.ci99 = detail::binomial_ci99(rep.gamma_hat, accepted);
    return rep;
}

// Margin constant surviving a total-variation substitution: a distribution
// within TV distance theta of one with margin constant gamma keeps margins
// with constant gamma/4, provided theta is at most half the smallest
// exceedance probability `tail_floor` = inf_beta P(beta . e > (r+alpha)||beta||).
struct MarginTransfer {
    bool applicable = false;
    double gamma = std::numeric_limits<double>::quiet_NaN();
};

inline MarginTransfer margin_tv_transfer_bound(double gamma, double theta, double tail_floor) {
    if (!(gamma >= 0.0 && gamma <= 1.0) || theta < 0.0 || tail_floor < 0.0)
        throw Error(Error::Kind::invalid_input, "margin_tv_transfer_bound: bad arguments");
    MarginTransfer out;
    if (theta <= 0.5 * tail_floor) {
        out.applicable = true;
        out.gamma = gamma / 4.0;
    }
    return out;
}

// ---- Per-round competition audit ---------------------------------------------

// For the arm pulled at round t, the relevant competing score is
//   chi = max_{j != i} score_j;
// the round is "clear" for i when chi <= score-threshold
//   (estimate version: beta_hat_i . mu_i + r ||beta_hat_i||). A round counts
// against the bound when the resampled conditional probability
//   P(chi clear | argmax = i)
// falls below 1/2. `flagged` uses the point estimate; `flagged_confident`
// requires the 99% CI to sit entirely below 1/2; rounds whose conditioning
// event never occurred among the m resamples are `unclassified`.
struct ArmAuditCounts {
    std::int64_t rounds = 0;
    std::int64_t flagged = 0;
    std::int64_t flagged_confident = 0;
    std::int64_t unclassified = 0;
};

struct AuditResult {
    std::vector<ArmAuditCounts> estimate_version; // conditioned on the greedy argmax
    std::vector<ArmAuditCounts> true_version;     // conditioned on the true argmax (multi mode)
    bool has_true_version = false;
};

// Expected cap on flagged rounds per arm when the perturbations keep every
// fixed direction within r except with probability 1/T: 2 + sqrt(ln(k/delta)/2).
inline double auspicious_count_bound(std::size_t k, double delta) {
    if (k == 0 || !(delta > 0.0 && delta < 1.0))
        throw Error(Error::Kind::invalid_input, "auspicious_count_bound: bad arguments");
    return 2.0 + std::sqrt(0.5 * std::log(static_cast<double>(k) / delta));
}

// Replays every round of a detailed trace m times with fresh perturbations
// (recorded means and estimates held fixed) and tallies, per arm, the rounds
// whose conditional clear-probability estimate falls below 1/2. Multi-mode
// models are additionally audited with the true coefficients against the true
// argmax.
inline AuditResult audit_auspicious(const RegretTrace& trace, const ModelSpec& model,
                                    const PerturbationSpec& p, double r, std::int64_t m,
                                    std::uint64_t seed) {
    if (!trace.has_details)
        throw Error(Error::Kind::invalid_input,
                    "audit_auspicious: trace was recorded without per-round details");
    if (m < 1)
        throw Error(Error::Kind::invalid_input, "audit_auspicious: need m >= 1");
    p.check();

    const std::size_t k = trace.k;
    const std::size_t d = trace.d;
    AuditResult out;
    out.estimate_version.assign(k, ArmAuditCounts{});
    out.has_true_version = model.mode == ModelSpec::Mode::multi;
    if (out.has_true_version) out.true_version.assign(k, ArmAuditCounts{});

    std::vector<Vec> scratch_e(k, Vec(d, 0.0));
    for (std::size_t t = 0; t < trace.rounds(); ++t) {
        const int chosen = trace.chosen[t];
        const int optimal = trace.optimal[t];
        out.estimate_version[chosen].rounds += 1;
        if (out.has_true_version) out.true_version[optimal].rounds += 1;

        if (k == 1) continue; // no competitor: trivially clear

        std::vector<Vec> mus(k), ests(k);
        std::vector<Matrix> rots;
        for (std::size_t i = 0; i < k; ++i) {
            mus[i] = trace.mean_vec(t, i);
            ests[i] = trace.beta_hat_vec(t, i);
        }
        if (p.kind == PerturbationSpec::Kind::truncated_rotated) {
            rots.reserve(k);
            for (std::size_t i = 0; i < k; ++i) rots.push_back(rotation_to_first_axis(ests[i]));
        }

        const double thr_est = dot(ests[chosen], mus[chosen]) + r * norm(ests[chosen]);
        const double thr_true =
            out.has_true_version
                ? dot(model.beta_for(optimal), mus[optimal]) + r * norm(model.beta_for(optimal))
                : 0.0;

        std::vector<RngStream> streams;
        streams.reserve(k);
        for (std::size_t i = 0; i < k; ++i)
            streams.emplace_back(seed, static_cast<std::int64_t>(t) + 1, i, StreamPurpose::audit);

        std::int64_t acc_est = 0, good_est = 0, acc_true = 0, good_true = 0;
        for (std::int64_t rep = 0; rep < m; ++rep) {
            for (std::size_t i = 0; i < k; ++i) {
                if (p.kind == PerturbationSpec::Kind::gaussian) {
                    scratch_e[i] = sample_gaussian_vector(d, p.sigma, streams[i]);
                } else if (p.kind == PerturbationSpec::Kind::truncated_rotated) {
                    Vec z(d);
                    for (std::size_t j = 0; j < d; ++j)
                        z[j] = sample_truncated_gaussian(p.sigma, p.rhat, streams[i]);
                    scratch_e[i] = rots[i].apply_transpose(z);
                } else {
                    std::fill(scratch_e[i].begin(), scratch_e[i].end(), 0.0);
                }
            }

            int arg_est = 0, arg_true = 0;
            double best_est = -std::numeric_limits<double>::infinity();
            double best_true = -std::numeric_limits<double>::infinity();
            double chi_est = -std::numeric_limits<double>::infinity();
            double chi_true = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < k; ++i) {
                double se = dot(ests[i], mus[i]) + dot(ests[i], scratch_e[i]);
                if (se > best_est) {
                    best_est = se;
                    arg_est = static_cast<int>(i);
                }
                if (static_cast<int>(i) != chosen) chi_est = std::max(chi_est, se);
                if (out.has_true_version) {
                    double st = dot(model.beta_for(i), mus[i]) +
                                dot(model.beta_for(i), scratch_e[i]);
                    if (st > best_true) {
                        best_true = st;
                        arg_true = static_cast<int>(i);
                    }
                    if (static_cast<int>(i) != optimal) chi_true = std::max(chi_true, st);
                }
            }
            if (arg_est == chosen) {
                ++acc_est;
                if (chi_est <= thr_est) ++good_est;
            }
            if (out.has_true_version && arg_true == optimal) {
                ++acc_true;
                if (chi_true <= thr_true) ++good_true;
            }
        }

        auto classify = [](ArmAuditCounts& c, std::int64_t acc, std::int64_t good) {
            if (acc == 0) {
                c.unclassified += 1;
                return;
            }
            const double ph = static_cast<double>(good) / static_cast<double>(acc);
            if (ph < 0.5) c.flagged += 1;
            if (ph + detail::binomial_ci99(ph, acc) < 0.5) c.flagged_confident += 1;
        };
        classify(out.estimate_version[chosen], acc_est, good_est);
        if (out.has_true_version) classify(out.true_version[optimal], acc_true, good_true);
    }
    return out;
}

} // namespace gbandit
