/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "relfk/error.hpp"
#include "relfk/random.hpp"

namespace relfk {

// Inverse Gaussian subordinator T under nu^m: the first passage time of B^1(s) + m s.

/// Density of T(t) at r: t/sqrt(2 pi) e^{mt} r^{-3/2} exp(-(t^2/r + m^2 r)/2).
inline double ig_density(double r, double t, double m) {
    if (!(r > 0.0) || !(t > 0.0)) {
        throw DomainError("ig_density requires r > 0 and t > 0");
    }
    // mt - t^2/(2r) - m^2 r/2 = -(t - m r)^2 / (2r)
    const double e = t - m * r;
    return t / std::sqrt(2.0 * std::numbers::pi) * std::pow(r, -1.5) * std::exp(-e * e / (2.0 * r));
}

/// Exact draw of T(t): Michael-Schucany-Haas for m > 0 (mean t/m, shape t^2), t^2/Z^2 for m = 0.
template <class Engine>
double sample_ig(double t, double m, Engine& rng) {
    if (!(t > 0.0)) {
        throw UsageError("sample_ig requires t > 0");
    }
    const double z = standard_normal(rng);
    if (m == 0.0) {
        return t * t / (z * z);
    }
    const double mu = t / m;
    const double lambda = t * t;
    const double y = z * z;
    // x = mu + mu^2 y/(2 lambda) - mu/(2 lambda) sqrt(4 mu lambda y + mu^2 y^2), rearranged to avoid cancellation.
    const double root = std::sqrt(4.0 * mu * lambda * y + mu * mu * y * y);
    const double x = mu - 2.0 * mu * mu * y / (mu * y + root);
    if (uniform_open(rng) <= mu / (mu + x)) {
        return x;
    }
    return mu * mu / x;
}

/// Density of the subordinator Levy measure sigma^m.
inline double sigma_density(double r, double m) {
    if (!(r > 0.0)) {
        throw DomainError("sigma_density requires r > 0");
    }
    return std::pow(r, -1.5) * std::exp(-0.5 * m * m * r) / std::sqrt(2.0 * std::numbers::pi);
}

/// sigma^0([eps, inf)) = sqrt(2/pi) / sqrt(eps).
inline double sigma0_tail(double eps) { return std::sqrt(2.0 / std::numbers::pi / eps); }

/// int_0^eps r sigma^0(dr) = sqrt(2 eps / pi).
inline double sigma0_small_jump_mean(double eps) { return std::sqrt(2.0 * eps / std::numbers::pi); }

namespace detail {

// e^{z^2} [e^{-z^2} - sqrt(pi) z erfc(z)] = 1 - sqrt(pi) z e^{z^2} erfc(z).
inline double tail_ghat(double z) {
    const double z2 = z * z;
    if (z2 <= 40.0) {
        return 1.0 - std::sqrt(std::numbers::pi) * z * std::exp(z2) * std::erfc(z);
    }
    // Asymptotic series sum_{k>=1} (-1)^{k+1} (2k-1)!! / (2 z^2)^k; the direct form cancels here.
    const double x = 1.0 / (2.0 * z2);
    double term = x;
    double sum = x;
    for (int k = 2; k < 60; ++k) {
        const double next = -term * (2.0 * k - 1.0) * x;
        if (std::abs(next) >= std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace detail

/// sigma^m([eps, inf)) = (2 pi)^{-1/2} [2 eps^{-1/2} e^{-a eps} - 2 sqrt(a pi) erfc(sqrt(a eps))], a = m^2/2.
inline double sigma_tail(double eps, double m) {
    if (!(eps > 0.0)) throw DomainError("sigma_tail requires eps > 0");
    const double z = m * std::sqrt(0.5 * eps);
    return 2.0 / std::sqrt(2.0 * std::numbers::pi * eps) * std::exp(-z * z) * detail::tail_ghat(z);
}

/// int_0^eps r sigma^m(dr) = (2 pi)^{-1/2} sqrt(pi/a) erf(sqrt(a eps)), a = m^2/2.
inline double sigma_small_jump_mean(double eps, double m) {
    if (m == 0.0) return sigma0_small_jump_mean(eps);
    const double a = 0.5 * m * m;
    return std::sqrt(0.5 / a) * std::erf(std::sqrt(a * eps));
}

struct SubJump {
    double time;
    double size;
};

/// T(s) = drift * s + sum of jumps with time <= s; jumps below `truncation` are folded into the drift.
struct SubPath {
    double horizon = 0.0;
    double truncation = 0.0;
    double mass = 0.0;
    double drift = 0.0;
    std::vector<SubJump> jumps;

    double value(double s) const {
        double v = 0.0;
        for (const auto& j : jumps) {
            if (j.time > s) break;
            v += j.size;
        }
        return drift * s + v;
    }
};

/// Truncated skeleton of T under nu^0 on (0, t_max].
template <class Engine>
SubPath sample_sub_path(double t_max, double eps_t, Engine& rng) {
    if (!(t_max > 0.0) || !(eps_t > 0.0)) {
        throw UsageError("sample_sub_path requires t_max > 0 and eps_T > 0");
    }
    SubPath path;
    path.horizon = t_max;
    path.truncation = eps_t;
    path.mass = 0.0;
    path.drift = sigma0_small_jump_mean(eps_t);
    const std::int64_t count = poisson(rng, t_max * sigma0_tail(eps_t));
    path.jumps.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        const double time = t_max * uniform_open(rng);
        const double u = uniform_open(rng);
        path.jumps.push_back({time, eps_t / (u * u)});
    }
    std::sort(path.jumps.begin(), path.jumps.end(), [](const SubJump& a, const SubJump& b) { return a.time < b.time; });
    return path;
}

/// Cap on rejected size proposals for one subordinator jump.
inline constexpr std::int64_t kSizeRejectionCap = 1000000;

/// Truncated skeleton of T under nu^m directly: sigma^0 proposals thinned by e^{-m^2 r/2}.
template <class Engine>
SubPath sample_sub_path(double t_max, double eps_t, double m, Engine& rng) {
    if (m == 0.0) return sample_sub_path(t_max, eps_t, rng);
    if (!(t_max > 0.0) || !(eps_t > 0.0) || !(m > 0.0) || !std::isfinite(m)) {
        throw UsageError("sample_sub_path requires t_max > 0, eps_T > 0 and m >= 0");
    }
    SubPath path;
    path.horizon = t_max;
    path.truncation = eps_t;
    path.mass = m;
    path.drift = sigma_small_jump_mean(eps_t, m);
    const std::int64_t count = poisson(rng, t_max * sigma_tail(eps_t, m));
    path.jumps.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        const double time = t_max * uniform_open(rng);
        double size = 0.0;
        for (std::int64_t tries = 0;; ++tries) {
            if (tries >= kSizeRejectionCap) {
                throw SamplerError("subordinator size sampler exceeded its cap; check m^2 eps_T");
            }
            const double u = uniform_open(rng);
            size = eps_t / (u * u);
            if (uniform_open(rng) <= std::exp(-0.5 * m * m * size)) break;
        }
        path.jumps.push_back({time, size});
    }
    std::sort(path.jumps.begin(), path.jumps.end(), [](const SubJump& a, const SubJump& b) { return a.time < b.time; });
    return path;
}

/// Levy exponent zeta_m with E[exp(i p T(t))] = exp(-t zeta_m(p)); zeta_0(0) = 0.
inline std::complex<double> levy_exponent(double p, double m) {
    if (p == 0.0) {
        return {0.0, 0.0};
    }
    const double m2 = m * m;
    const double w = m2 + std::sqrt(m2 * m2 + 4.0 * p * p);
    const double sw = std::sqrt(w);
    const double re = 2.0 * std::numbers::sqrt2 * p * p / ((sw + std::numbers::sqrt2 * m) * w);
    const double im = -std::numbers::sqrt2 * p / sw;
    return {re, im};
}

}  // namespace relfk
