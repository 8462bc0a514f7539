#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gbandit/distributions.hpp"
#include "gbandit/errors.hpp"
#include "gbandit/linalg.hpp"
#include "gbandit/rng.hpp"

namespace gbandit {

inline constexpr double kMeanNormSlack = 1e-12;

// One round's arm means as produced by an adversary. Construction enforces the
// unit-ball contract on every mean.
struct AdversaryChoice {
    std::vector<Vec> means; // k vectors, one per arm

    static AdversaryChoice checked(std::vector<Vec> means) {
        if (means.empty())
            throw Error(Error::Kind::contract_violation, "AdversaryChoice: no arms");
        const std::size_t d = means.front().size();
        for (const Vec& mu : means) {
            if (mu.size() != d || d == 0)
                throw Error(Error::Kind::contract_violation,
                            "AdversaryChoice: inconsistent dimensions");
            if (!all_finite(mu))
                throw Error(Error::Kind::contract_violation, "AdversaryChoice: non-finite mean");
            if (norm(mu) > 1.0 + kMeanNormSlack)
                throw Error(Error::Kind::contract_violation,
                            "AdversaryChoice: mean leaves the unit ball");
        }
        return AdversaryChoice{std::move(means)};
    }
};

// Everything the learner sees in one round: contexts = means + perturbations,
// exactly, with all three kept so diagnostics can be replayed.
struct RoundContexts {
    std::vector<Vec> means;
    std::vector<Vec> perturbations;
    std::vector<Vec> contexts;
};

struct HistoryRecord {
    RoundContexts contexts;
    int chosen_arm = -1; // 0-based
    double reward = 0.0;
};

// Append-only record of completed rounds, handed back to adaptive adversaries.
class History {
public:
    void append(HistoryRecord rec) { records_.push_back(std::move(rec)); }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const HistoryRecord& operator[](std::size_t i) const { return records_[i]; }
    const HistoryRecord& back() const { return records_.back(); }

private:
    std::vector<HistoryRecord> records_;
};

// ---- Built-in adversaries ---------------------------------------------------

struct FixedMeansAdversary {
    std::vector<Vec> means;
};

// Two arms in dimension 1 with means 1 and 1 - 1/sqrt(n): the gap an
// under-sized warm start of n pulls per arm cannot reliably resolve. The
// matching perturbation scale for horizon rho solves
// n = 1/(100 sigma^2 ln(rho/100)).
struct LowerBound1Adversary {
    std::int64_t n = 64;

    double mu2() const { return 1.0 - 1.0 / std::sqrt(static_cast<double>(n)); }
    static double matching_sigma(std::int64_t n, std::int64_t rho) {
        if (n < 1 || rho <= 100)
            throw Error(Error::Kind::invalid_input,
                        "LowerBound1Adversary: need n >= 1 and rho > 100");
        return std::sqrt(1.0 / (100.0 * static_cast<double>(n) *
                                std::log(static_cast<double>(rho) / 100.0)));
    }
};

// Two arms in dimension 1 with identical means 1; the difficulty lives
// entirely in the per-arm coefficients (set in the model spec).
struct LowerBound2Adversary {};

// Table-driven adaptive adversary: each round it looks up (round mod period,
// last chosen arm) in `entries` (first match wins; last_arm -1 matches
// anything, 0 means "no pull yet") and falls back to `default_means`.
struct ScriptedEntry {
    std::int64_t round_mod = 0;
    int last_arm = -1;       // -1 any, 0 none, 1..k (1-based to match configs)
    std::vector<Vec> means;
};

struct ScriptedAdaptiveAdversary {
    std::int64_t period = 1;
    std::vector<Vec> default_means;
    std::vector<ScriptedEntry> entries;
};

using AdversarySpec = std::variant<FixedMeansAdversary, LowerBound1Adversary,
                                   LowerBound2Adversary, ScriptedAdaptiveAdversary>;

// Next round's means. `estimates` is made available for completeness (an
// adaptive adversary may key on the learner state); the built-ins ignore it.
inline AdversaryChoice adversary_next(const AdversarySpec& spec, const History& history,
                                      const std::vector<Vec>* estimates = nullptr) {
    (void)estimates;
    if (std::holds_alternative<FixedMeansAdversary>(spec)) {
        return AdversaryChoice::checked(std::get<FixedMeansAdversary>(spec).means);
    }
    if (std::holds_alternative<LowerBound1Adversary>(spec)) {
        const auto& lb = std::get<LowerBound1Adversary>(spec);
        if (lb.n < 1)
            throw Error(Error::Kind::invalid_input, "LowerBound1Adversary: n must be >= 1");
        return AdversaryChoice::checked({Vec{1.0}, Vec{lb.mu2()}});
    }
    if (std::holds_alternative<LowerBound2Adversary>(spec)) {
        return AdversaryChoice::checked({Vec{1.0}, Vec{1.0}});
    }

    const auto& sc = std::get<ScriptedAdaptiveAdversary>(spec);
    if (sc.period < 1)
        throw Error(Error::Kind::invalid_input, "ScriptedAdaptiveAdversary: period must be >= 1");
    const std::int64_t round = static_cast<std::int64_t>(history.size()) + 1;
    const std::int64_t rmod = ((round - 1) % sc.period + sc.period) % sc.period;
    const int last = history.empty() ? 0 : history.back().chosen_arm + 1; // 1-based, 0 = none
    for (const ScriptedEntry& e : sc.entries) {
        if (e.round_mod != rmod) continue;
        if (e.last_arm != -1 && e.last_arm != last) continue;
        return AdversaryChoice::checked(e.means);
    }
    return AdversaryChoice::checked(sc.default_means);
}

// ---- Perturbation -----------------------------------------------------------

// Draws this round's perturbations and assembles contexts. Draws for arm i
// come from the stream (seed, round, i, purpose), so they are identical under
// replay no matter which arms were pulled before. For the truncated-rotated
// family, arm i's coordinates are truncated in the basis that sends
// estimates[i] to the first axis (zero estimate: identity basis); single-mode
// callers pass the shared estimate for every arm.
inline RoundContexts perturb_round(const AdversaryChoice& choice, const PerturbationSpec& p,
                                   const std::vector<Vec>& estimates, std::uint64_t seed,
                                   std::int64_t round,
                                   StreamPurpose purpose = StreamPurpose::perturbation) {
    p.check();
    const std::size_t k = choice.means.size();
    const std::size_t d = choice.means.front().size();
    if (estimates.size() != k && p.kind == PerturbationSpec::Kind::truncated_rotated)
        throw Error(Error::Kind::invalid_input, "perturb_round: need one estimate per arm");

    RoundContexts rc;
    rc.means = choice.means;
    rc.perturbations.resize(k);
    rc.contexts.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        Vec e(d, 0.0);
        switch (p.kind) {
        case PerturbationSpec::Kind::none:
            break;
        case PerturbationSpec::Kind::gaussian: {
            RngStream rng(seed, round, i, purpose);
            e = sample_gaussian_vector(d, p.sigma, rng);
            break;
        }
        case PerturbationSpec::Kind::truncated_rotated: {
            RngStream rng(seed, round, i, purpose);
            Vec z(d);
            for (std::size_t j = 0; j < d; ++j)
                z[j] = sample_truncated_gaussian(p.sigma, p.rhat, rng);
            const Matrix q = rotation_to_first_axis(estimates[i]);
            e = q.apply_transpose(z); // Q^{-1} z
            break;
        }
        }
        rc.perturbations[i] = e;
        rc.contexts[i] = add(choice.means[i], e);
    }
    return rc;
}

// Union-bound mass of the event that any truncated coordinate would have been
// clipped over a whole horizon: 2 T k d exp(-rhat^2 / (2 sigma^2)). This is
// the total-variation budget separating the truncated-rotated run from the
// plain Gaussian one.
inline double mixture_weight_check(double sigma, double rhat, std::int64_t T, std::size_t k,
                                   std::size_t d) {
    if (sigma <= 0.0 || rhat <= 0.0 || T < 1 || k < 1 || d < 1)
        throw Error(Error::Kind::invalid_input, "mixture_weight_check: bad arguments");
    const double tkd = static_cast<double>(T) * static_cast<double>(k) * static_cast<double>(d);
    return 2.0 * tkd * std::exp(-rhat * rhat / (2.0 * sigma * sigma));
}

} // namespace gbandit
