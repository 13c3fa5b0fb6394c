/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "relfk/error.hpp"
#include "relfk/geometry.hpp"
#include "relfk/random.hpp"
#include "relfk/specfun.hpp"

namespace relfk {

// Jump process X under lambda^m: characteristic function exp(-t[sqrt(xi^2+m^2) - m]),
// Levy density n^m, transition density k_0^m. Everything here is rotation invariant,
// so scalar functions take the radius |y| and the dimension d.

namespace detail {

inline void require_dimension(int d) {
    if (d < 1) {
        throw DomainError("dimension must be >= 1");
    }
}

inline void require_mass(double m) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
        throw DomainError("mass must be finite and >= 0");
    }
}

}  // namespace detail

/// n^m(y) at radius |y|.
inline double levy_density(double radius, double m, int d) {
    detail::require_dimension(d);
    detail::require_mass(m);
    if (!(radius > 0.0)) {
        throw DomainError("levy_density is singular at y = 0");
    }
    const double nu = 0.5 * (d + 1);
    if (m == 0.0) {
        return std::tgamma(nu) / std::pow(std::numbers::pi, nu) / std::pow(radius, d + 1);
    }
    const double x = m * radius;
    return 2.0 * std::exp(nu * std::log(m / (2.0 * std::numbers::pi)) - x - nu * std::log(radius)) *
           bessel_k_scaled(BesselOrder::upper(d), x);
}

template <int D>
double levy_density(const Point<D>& y, double m) {
    return levy_density(norm(y), m, D);
}

/// k_0^m(y, t), the transition density of X(t) at radius |y|.
inline double kernel(double radius, double t, double m, int d) {
    detail::require_dimension(d);
    detail::require_mass(m);
    if (!(t > 0.0)) {
        throw DomainError("kernel requires t > 0");
    }
    const double nu = 0.5 * (d + 1);
    const double rho = std::hypot(radius, t);
    if (m == 0.0) {
        return std::tgamma(nu) / std::pow(std::numbers::pi, nu) * t / std::pow(rho, d + 1);
    }
    // t e^{mt} K(m rho) = t e^{-m(rho - t)} [e^{m rho} K(m rho)]
    return 2.0 * std::exp(nu * std::log(m / (2.0 * std::numbers::pi)) - m * (rho - t) - nu * std::log(rho)) * t *
           bessel_k_scaled(BesselOrder::upper(d), m * rho);
}

template <int D>
double kernel(const Point<D>& y, double t, double m) {
    return kernel(norm(y), t, m, D);
}

/// c_d = |S^{d-1}| Gamma((d+1)/2) / pi^{(d+1)/2}; the massless tail is c_d / rho.
inline double massless_tail_constant(int d) {
    const double nu = 0.5 * (d + 1);
    return sphere_area(d) * std::tgamma(nu) / std::pow(std::numbers::pi, nu);
}

/// Levy measure of {|y| >= rho}.
inline double tail_mass(double rho, double m, int d) {
    detail::require_dimension(d);
    detail::require_mass(m);
    if (!(rho > 0.0)) {
        throw DomainError("tail_mass requires rho > 0");
    }
    if (m == 0.0) {
        return massless_tail_constant(d) / rho;
    }
    const double nu = 0.5 * (d + 1);
    return sphere_area(d) * 2.0 * std::pow(m / (2.0 * std::numbers::pi), nu) * tail_bessel_integral(m, rho, d);
}

struct LevyConfig {
    int d = 1;
    double m = 0.0;
    double eps = 1e-3;

    void validate() const {
        if (d < 1) throw UsageError("LevyConfig: d must be >= 1");
        if (!(m >= 0.0) || !std::isfinite(m)) throw UsageError("LevyConfig: m must be >= 0");
        if (!(eps > 0.0 && eps < 1.0)) throw UsageError("LevyConfig: eps must lie in (0, 1)");
    }
};

template <int D>
struct Jump {
    double time;
    Point<D> delta;
};

/// Jumps of size >= truncation on (0, horizon]; X(s) = sum of jumps with time <= s.
template <int D>
struct JumpPath {
    double horizon = 0.0;
    double truncation = 0.0;
    double mass = 0.0;
    std::vector<Jump<D>> jumps;

    Point<D> position(double s) const {
        Point<D> x{};
        for (const auto& j : jumps) {
            if (j.time > s) break;
            x += j.delta;
        }
        return x;
    }

    Point<D> end_position() const { return position(horizon); }
};

/// Cap on rejected radius proposals for one jump.
inline constexpr std::int64_t kRadialRejectionCap = 1000000;

/// Truncated Levy-Ito skeleton of X on (0, t_max]: jumps below cfg.eps discarded.
/// The compensator of the discarded ring vanishes by rotational symmetry, so no drift is added.
template <int D, class Engine>
JumpPath<D> sample_path(const LevyConfig& cfg, double t_max, Engine& rng) {
    cfg.validate();
    if (cfg.d != D) {
        throw UsageError("LevyConfig dimension does not match the path dimension");
    }
    if (!(t_max > 0.0)) {
        throw UsageError("sample_path requires t_max > 0");
    }
    JumpPath<D> path;
    path.horizon = t_max;
    path.truncation = cfg.eps;
    path.mass = cfg.m;
    const double rate = tail_mass(cfg.eps, cfg.m, D);
    const std::int64_t count = poisson(rng, t_max * rate);
    path.jumps.resize(static_cast<std::size_t>(count));
    // Sorted uniform times as normalized partial sums of count + 1 exponentials.
    double acc = 0.0;
    for (auto& j : path.jumps) {
        acc -= std::log(uniform_open(rng));
        j.time = acc;
    }
    acc -= std::log(uniform_open(rng));
    for (auto& j : path.jumps) j.time = std::min(t_max, t_max * (j.time / acc));
    std::array<double, 64> squeeze;
    squeeze.fill(-1.0);
    for (auto& jump : path.jumps) {
        double radius = 0.0;
        std::int64_t tries = 0;
        for (;;) {
            // Exact inverse of the massless conditional tail P(R > r) = eps / r ...
            radius = cfg.eps / uniform_open(rng);
            if (cfg.m == 0.0) break;
            // ... thinned by n^m / n^0 <= 1. The ratio decreases in r, so its value at the
            // top of r's octave is an exact lower bound for a cheap accept.
            const double u = uniform_open(rng);
            const int octave = std::min(std::ilogb(radius / cfg.eps), 63);
            double& floor = squeeze[static_cast<std::size_t>(octave)];
            if (floor < 0.0) floor = bessel_ratio(D, cfg.m * std::ldexp(cfg.eps, octave + 1));
            if (u <= floor || u <= bessel_ratio(D, cfg.m * radius)) break;
            if (++tries >= kRadialRejectionCap) {
                throw SamplerError("radial rejection sampler exceeded its cap; check m * eps");
            }
        }
        jump.delta = radius * random_direction<D>(rng);
    }
    return path;
}

}  // namespace relfk
