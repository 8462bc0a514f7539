#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "gbandit/errors.hpp"
#include "gbandit/linalg.hpp"
#include "gbandit/rng.hpp"

namespace gbandit {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;
inline constexpr double kSqrt2 = 1.4142135623730950488;

inline double gaussian_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Phi(x) through erfc; good to ~1e-15 relative over the whole line.
inline double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// 1 - Phi(x) without cancellation in the upper tail.
inline double gaussian_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }

// Inverse standard normal CDF: Acklam's rational approximation followed by a
// Halley refinement against the erfc-based CDF, which brings the error to the
// ~1e-15 level except in the extreme tails (|x| > 37), where the raw
// approximation (~1e-9 relative) is returned as is.
inline double inverse_gaussian_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw Error(Error::Kind::invalid_input, "inverse_gaussian_cdf: p must lie in (0,1)");

    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }

    if (std::abs(x) < 37.0) {
        const double e = gaussian_cdf(x) - p;
        const double u = e / gaussian_pdf(x);
        x -= u / (1.0 + 0.5 * x * u); // Halley step
    }
    return x;
}

// One N(0, sigma^2) draw by inverse CDF (monotone in the underlying uniform,
// which keeps every draw reproducible from its stream position alone).
inline double sample_gaussian(double sigma, RngStream& rng) {
    if (sigma < 0.0)
        throw Error(Error::Kind::invalid_input, "sample_gaussian: sigma < 0");
    if (sigma == 0.0) return 0.0;
    return sigma * inverse_gaussian_cdf(rng.next_uniform_oo());
}

inline Vec sample_gaussian_vector(std::size_t d, double sigma, RngStream& rng) {
    Vec v(d, 0.0);
    if (sigma == 0.0) return v;
    for (std::size_t i = 0; i < d; ++i) v[i] = sample_gaussian(sigma, rng);
    return v;
}

// Standard normal conditioned to [lo, hi] (either bound may be infinite),
// sampled by inverse CDF on the matching uniform range. Intervals entirely in
// one tail are handled in tail coordinates so the method stays usable out to
// |bound| ~ 37 instead of ~8.
inline double sample_truncated_standard(double lo, double hi, RngStream& rng) {
    if (!(lo < hi))
        throw Error(Error::Kind::degenerate_interval, "sample_truncated_standard: lo >= hi");

    double z;
    if (lo >= 0.0) { // upper tail: parameterize by 1 - Phi
        const double t_hi = gaussian_tail(lo);  // larger
        const double t_lo = std::isinf(hi) ? 0.0 : gaussian_tail(hi);
        if (t_hi < 1e-300)
            throw Error(Error::Kind::degenerate_interval,
                        "sample_truncated_standard: interval mass underflows");
        const double u = t_lo + (t_hi - t_lo) * rng.next_uniform_oo();
        z = -inverse_gaussian_cdf(u);
    } else if (hi <= 0.0) { // lower tail, by symmetry
        const double t_hi = gaussian_tail(-hi);
        const double t_lo = std::isinf(lo) ? 0.0 : gaussian_tail(-lo);
        if (t_hi < 1e-300)
            throw Error(Error::Kind::degenerate_interval,
                        "sample_truncated_standard: interval mass underflows");
        const double u = t_lo + (t_hi - t_lo) * rng.next_uniform_oo();
        z = inverse_gaussian_cdf(u);
    } else {
        const double u_lo = std::isinf(lo) ? 0.0 : gaussian_cdf(lo);
        const double u_hi = std::isinf(hi) ? 1.0 : gaussian_cdf(hi);
        const double u = u_lo + (u_hi - u_lo) * rng.next_uniform_oo();
        z = inverse_gaussian_cdf(u);
    }

    if (!std::isinf(lo)) z = std::max(z, lo);
    if (!std::isinf(hi)) z = std::min(z, hi);
    return z;
}

// N(0, sigma^2) conditioned to [-rhat, rhat].
inline double sample_truncated_gaussian(double sigma, double rhat, RngStream& rng) {
    if (sigma < 0.0 || rhat <= 0.0)
        throw Error(Error::Kind::invalid_input, "sample_truncated_gaussian: bad sigma/rhat");
    if (sigma == 0.0) return 0.0;
    return sigma * sample_truncated_standard(-rhat / sigma, rhat / sigma, rng);
}

// Two-sided estimate of the Gaussian upper tail from the alternating hazard
// series: with G(x; N) = sum_{n=0..N} (-1)^n (2n-1)!! / x^(2n),
//   (phi(x)/x) G(x; 2m-1)  <=  1 - Phi(x)  <=  (phi(x)/x) G(x; 2m).
// `n_terms` = m picks how deep the series goes. Only validated for x >= 2,
// where the leading terms already bracket tightly.
struct HazardBracket {
    double lower;
    double upper;
};

inline HazardBracket hazard_bound(double x, int n_terms = 1) {
    if (x < 2.0)
        throw Error(Error::Kind::out_of_validated_range, "hazard_bound: requires x >= 2");
    if (n_terms < 1)
        throw Error(Error::Kind::invalid_input, "hazard_bound: n_terms must be >= 1");

    const double inv_x2 = 1.0 / (x * x);
    double term = 1.0; // (-1)^n (2n-1)!! / x^(2n), starting at n = 0
    double g = 1.0;
    const int n_low = 2 * n_terms - 1;
    double g_low = 0.0;
    for (int n = 1; n <= n_low + 1; ++n) {
        term *= -static_cast<double>(2 * n - 1) * inv_x2;
        g += term;
        if (n == n_low) g_low = g;
    }
    const double scale = gaussian_pdf(x) / x;
    return HazardBracket{scale * g_low, scale * g};
}

namespace detail {
// x * phi(x) with the correct 0 limit at +-infinity.
inline double x_pdf(double x) {
    if (std::isinf(x)) return 0.0;
    return x * gaussian_pdf(x);
}
inline double pdf_ext(double x) { return std::isinf(x) ? 0.0 : gaussian_pdf(x); }

// Phi(hi) - Phi(lo) avoiding cancellation when both endpoints sit in one tail.
inline double interval_mass(double lo, double hi) {
    if (lo >= 0.0) return gaussian_tail(lo) - (std::isinf(hi) ? 0.0 : gaussian_tail(hi));
    if (hi <= 0.0) return gaussian_tail(-hi) - (std::isinf(lo) ? 0.0 : gaussian_tail(-lo));
    return (std::isinf(hi) ? 1.0 : gaussian_cdf(hi)) - (std::isinf(lo) ? 0.0 : gaussian_cdf(lo));
}
} // namespace detail

// Mean of N(0, sigma^2) conditioned to [lo, hi] (closed form).
inline double truncated_mean(double lo, double hi, double sigma) {
    if (sigma <= 0.0)
        throw Error(Error::Kind::invalid_input, "truncated_mean: sigma must be > 0");
    if (!(lo < hi))
        throw Error(Error::Kind::degenerate_interval, "truncated_mean: lo >= hi");
    const double a = lo / sigma, b = hi / sigma;
    const double z = detail::interval_mass(a, b);
    if (z < 1e-300)
        throw Error(Error::Kind::degenerate_interval, "truncated_mean: interval mass underflows");
    return sigma * (detail::pdf_ext(a) - detail::pdf_ext(b)) / z;
}

// Variance of N(0, sigma^2) conditioned to [lo, hi] (closed form):
//   sigma^2 * [ 1 + (a phi(a) - b phi(b))/Z - ((phi(a) - phi(b))/Z)^2 ].
inline double truncated_variance(double lo, double hi, double sigma) {
    if (sigma <= 0.0)
        throw Error(Error::Kind::invalid_input, "truncated_variance: sigma must be > 0");
    if (!(lo < hi))
        throw Error(Error::Kind::degenerate_interval, "truncated_variance: lo >= hi");
    const double a = lo / sigma, b = hi / sigma;
    const double z = detail::interval_mass(a, b);
    if (z < 1e-300)
        throw Error(Error::Kind::degenerate_interval,
                    "truncated_variance: interval mass underflows");
    const double first = (detail::x_pdf(a) - detail::x_pdf(b)) / z;
    const double second = (detail::pdf_ext(a) - detail::pdf_ext(b)) / z;
    return sigma * sigma * (1.0 + first - second * second);
}

// How contexts are perturbed each round.
struct PerturbationSpec {
    enum class Kind { none, gaussian, truncated_rotated };

    Kind kind = Kind::none;
    double sigma = 0.0;
    double rhat = 0.0; // truncated_rotated only: per-coordinate bound

    void check() const {
        switch (kind) {
        case Kind::none:
            return;
        case Kind::gaussian:
            if (sigma < 0.0)
                throw Error(Error::Kind::invalid_input, "PerturbationSpec: sigma < 0");
            return;
        case Kind::truncated_rotated:
            if (sigma <= 0.0)
                throw Error(Error::Kind::invalid_input, "PerturbationSpec: sigma must be > 0");
            if (rhat < sigma)
                throw Error(Error::Kind::invalid_input, "PerturbationSpec: rhat must be >= sigma");
            return;
        }
        throw Error(Error::Kind::invalid_input, "PerturbationSpec: unknown kind");
    }
};

} // namespace gbandit
