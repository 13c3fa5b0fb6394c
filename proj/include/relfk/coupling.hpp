/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <utility>
#include <vector>

#include "relfk/error.hpp"
#include "relfk/levy.hpp"
#include "relfk/quadrature.hpp"
#include "relfk/specfun.hpp"
#include "relfk/subordinator.hpp"

namespace relfk {

// Path couplings: phi_m pushes n^0 to n^m (radially, through ell_m), psi_m pushes sigma^0 to
// sigma^m. Applying them jump by jump maps lambda^0 paths to lambda^m paths and nu^0 paths to
// nu^m paths, so every mass can be evaluated on one base sample.

namespace detail {

struct EllPoint {
    double log_ell;
    double slope;  // d log ell / d log r
};

inline EllPoint ell_point(double r, double m, int d) {
    const double nu = 0.5 * (d + 1);
    const double p = 0.5 * (d - 3);
    const auto t = tail_bessel_scaled(m, r, d, 1e-13);
    const double log_c = 0.5 * (d - 1) * std::numbers::ln2 + std::lgamma(nu);
    const double log_ell = log_c - nu * std::log(m) - std::log(t.scaled) + m * r;
    const double slope = std::pow(r, p + 1.0) * bessel_k_scaled(BesselOrder::upper(d), m * r) / t.scaled;
    return {log_ell, slope};
}

// Safeguarded Newton for an increasing F(w) with F(hi) >= 0, derivative F'(w) > 0.
template <class F>
double solve_increasing(F&& f, double hi, double tol, const char* what) {
    double fhi = f(hi).first;
    if (fhi == 0.0) return hi;
    double lo = hi;
    double step = 1.0;
    double flo = fhi;
    for (int k = 0; k < 200 && flo > 0.0; ++k) {
        hi = lo;
        fhi = flo;
        lo -= step;
        step *= 2.0;
        flo = f(lo).first;
    }
    if (flo > 0.0) {
        throw QuadratureError(std::string(what) + ": bracket expansion failed", flo);
    }
    double w = hi;
    for (int it = 0; it < 200; ++it) {
        auto [fw, dfw] = f(w);
        if (fw == 0.0) return w;
        if (fw > 0.0) {
            hi = w;
        } else {
            lo = w;
        }
        double next = w - fw / dfw;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - w) <= tol * std::max(1.0, std::abs(w)) || hi - lo <= tol * std::max(1.0, std::abs(w))) {
            return next;
        }
        w = next;
    }
    throw QuadratureError(std::string(what) + ": root finder did not converge", hi - lo);
}

}  // namespace detail

/// ell_m(r) = 2^{(d-1)/2} Gamma((d+1)/2) / (m^{(d+1)/2} int_r^inf u^{(d-3)/2} K_{(d+1)/2}(m u) du); ell_0(r) = r.
/// Overflows to +inf when m r is large enough.
inline double ell(double r, double m, int d) {
    if (!(r > 0.0)) throw DomainError("ell requires r > 0");
    detail::require_mass(m);
    if (m == 0.0) return r;
    return std::exp(detail::ell_point(r, m, d).log_ell);
}

inline double log_ell(double r, double m, int d) {
    if (!(r > 0.0)) throw DomainError("ell requires r > 0");
    detail::require_mass(m);
    if (m == 0.0) return std::log(r);
    return detail::ell_point(r, m, d).log_ell;
}

/// ell_m^{-1}(rho), by bisection-safeguarded Newton in log r to 1e-12 relative.
inline double ell_inv(double rho, double m, int d) {
    if (!(rho > 0.0)) throw DomainError("ell_inv requires rho > 0");
    detail::require_mass(m);
    if (m == 0.0) return rho;
    const double target = std::log(rho);
    auto f = [&](double w) {
        const auto p = detail::ell_point(std::exp(w), m, d);
        return std::pair<double, double>{p.log_ell - target, p.slope};
    };
    // ell_m(r) >= r puts the root at or below log rho. For large rho, log ell_m(r) = m r + O(log m r)
    // gives a far tighter start; it is used only if it really brackets.
    double hi = target;
    const double guess = std::log((std::max(target, 0.0) + 40.0) / m);
    if (guess < hi && f(guess).first >= 0.0) hi = guess;
    return std::exp(detail::solve_increasing(f, hi, 1e-13, "ell_inv"));
}

/// ell_m tabulated once on a log grid over [1e-6, min(1e3, 60/m)] with cubic Hermite interpolation of
/// log ell against log r using exact slopes. Off-table queries fall back to direct quadrature.
/// Read-only after construction.
class EllTransform {
public:
    static constexpr double kRadiusMin = 1e-6;
    static constexpr double kRadiusMax = 1e3;
    static constexpr double kMassRadiusMax = 60.0;

    EllTransform(double m, int d, double rel_tol = 1e-10) : m_(m), d_(d) {
        detail::require_mass(m);
        detail::require_dimension(d);
        if (m == 0.0) return;
        u0_ = std::log(kRadiusMin);
        // Past m r = 60, ell_m is beyond e^60 and queries are rare enough for direct quadrature.
        const double u1 = std::log(std::max(10.0 * kRadiusMin, std::min(kRadiusMax, kMassRadiusMax / m)));
        int cells = 512;
        du_ = (u1 - u0_) / cells;
        for (int i = 0; i <= cells; ++i) {
            points_.push_back(detail::ell_point(std::exp(u0_ + i * du_), m_, d_));
        }
        for (;;) {
            std::vector<detail::EllPoint> mid(cells);
            double worst = 0.0;
            for (int i = 0; i < cells; ++i) {
                const double u = u0_ + (i + 0.5) * du_;
                mid[i] = detail::ell_point(std::exp(u), m_, d_);
                worst = std::max(worst, std::abs(std::expm1(interpolate(i, 0.5).first - mid[i].log_ell)));
            }
            max_error_ = worst;
            if (worst <= rel_tol || cells >= (1 << 17)) break;
            std::vector<detail::EllPoint> merged;
            merged.reserve(2 * cells + 1);
            for (int i = 0; i < cells; ++i) {
                merged.push_back(points_[i]);
                merged.push_back(mid[i]);
            }
            merged.push_back(points_.back());
            points_ = std::move(merged);
            cells *= 2;
            du_ *= 0.5;
        }
        log_values_.reserve(points_.size());
        for (const auto& p : points_) log_values_.push_back(p.log_ell);
        // Uniform buckets in log rho pointing at the cell that holds their left edge.
        const std::size_t buckets = 4 * points_.size();
        bucket_width_ = (log_values_.back() - log_values_.front()) / static_cast<double>(buckets);
        bucket_.resize(buckets + 1);
        std::size_t cell = 0;
        for (std::size_t b = 0; b <= buckets; ++b) {
            const double edge = log_values_.front() + static_cast<double>(b) * bucket_width_;
            while (cell + 2 < log_values_.size() && log_values_[cell + 1] <= edge) ++cell;
            bucket_[b] = static_cast<int>(cell);
        }
    }

    double mass() const noexcept { return m_; }
    int dimension() const noexcept { return d_; }
    std::size_t table_size() const noexcept { return points_.size(); }
    /// Largest relative interpolation error of ell observed at cell midpoints.
    double table_error() const noexcept { return max_error_; }

    double log_forward(double r) const {
        if (m_ == 0.0) return std::log(r);
        const double u = std::log(r);
        const double x = (u - u0_) / du_;
        const int cells = static_cast<int>(points_.size()) - 1;
        if (!(x >= 0.0) || x > cells) return detail::ell_point(r, m_, d_).log_ell;
        const int i = std::min(static_cast<int>(x), cells - 1);
        return interpolate(i, x - i).first;
    }

    double forward(double r) const {
        if (!(r > 0.0)) throw DomainError("ell requires r > 0");
        return m_ == 0.0 ? r : std::exp(log_forward(r));
    }

    double inverse(double rho) const {
        if (!(rho > 0.0)) throw DomainError("ell_inv requires rho > 0");
        if (m_ == 0.0) return rho;
        const double v = std::log(rho);
        if (v < log_values_.front() || v > log_values_.back()) return ell_inv(rho, m_, d_);
        const auto b = std::min(bucket_.size() - 1,
                                static_cast<std::size_t>((v - log_values_.front()) / bucket_width_));
        int i = bucket_[b];
        const int last = static_cast<int>(points_.size()) - 2;
        while (i < last && log_values_[i + 1] <= v) ++i;
        // Solve the cell's cubic for tau in [0, 1].
        double lo = 0.0;
        double hi = 1.0;
        const double span = log_values_[i + 1] - log_values_[i];
        double tau = span > 0.0 ? (v - log_values_[i]) / span : 0.5;
        const double noise = 4e-16 * std::max(1.0, std::abs(v));
        for (int it2 = 0; it2 < 60; ++it2) {
            const auto [val, slope] = interpolate(i, tau);
            const double f = val - v;
            if (std::abs(f) <= noise) break;
            if (f > 0.0) hi = tau; else lo = tau;
            double next = slope > 0.0 ? tau - f / (slope * du_) : 0.5 * (lo + hi);
            if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
            const bool done = std::abs(next - tau) < 1e-14;
            tau = next;
            if (done) break;
        }
        return std::exp(u0_ + (i + tau) * du_);
    }

    /// phi_m(z) = ell_m^{-1}(|z|) z / |z|.
    template <int D>
    Point<D> phi(const Point<D>& z) const {
        const double r = norm(z);
        return (inverse(r) / r) * z;
    }

private:
    // (log ell, d log ell / d log r) at u = u0 + (i + tau) du.
    std::pair<double, double> interpolate(int i, double tau) const {
        const auto& a = points_[i];
        const auto& b = points_[i + 1];
        const double t2 = tau * tau;
        const double t3 = t2 * tau;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + tau;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        const double value = h00 * a.log_ell + h10 * du_ * a.slope + h01 * b.log_ell + h11 * du_ * b.slope;
        const double d00 = 6 * t2 - 6 * tau;
        const double d10 = 3 * t2 - 4 * tau + 1;
        const double d01 = -6 * t2 + 6 * tau;
        const double d11 = 3 * t2 - 2 * tau;
        const double slope = (d00 * a.log_ell + d01 * b.log_ell) / du_ + d10 * a.slope + d11 * b.slope;
        return {value, slope};
    }

    double m_;
    int d_;
    std::vector<int> bucket_;
    double bucket_width_ = 1.0;
    double u0_ = 0.0;
    double du_ = 0.0;
    double max_error_ = 0.0;
    std::vector<detail::EllPoint> points_;
    std::vector<double> log_values_;
};

/// Thread-safe cache of EllTransform tables keyed by (m, d).
class TransformCache {
public:
    std::shared_ptr<const EllTransform> get(double m, int d) {
        std::lock_guard<std::mutex> lock(mu_);
        auto& slot = tables_[{m, d}];
        if (!slot) slot = std::make_shared<const EllTransform>(m, d);
        return slot;
    }

private:
    std::mutex mu_;
    std::map<std::pair<double, int>, std::shared_ptr<const EllTransform>> tables_;
};

/// Phi_m: replaces every jump by phi_m(jump). Times are unchanged; the image of the truncation
/// ball is |y| < ell_m^{-1}(eps), recorded as the new truncation. No drift: phi_m is odd and n^0
/// is rotation invariant, so the compensator of Phi_m vanishes on every symmetric ring.
template <int D>
JumpPath<D> transform_path(const JumpPath<D>& path, const EllTransform& ell_m) {
    if (path.mass != 0.0) {
        throw UsageError("transform_path expects a path sampled with mass 0");
    }
    if (ell_m.dimension() != D) {
        throw UsageError("transform_path: EllTransform dimension mismatch");
    }
    JumpPath<D> out = path;
    out.mass = ell_m.mass();
    if (ell_m.mass() == 0.0) return out;
    out.truncation = ell_m.inverse(path.truncation);
    for (auto& j : out.jumps) {
        j.delta = ell_m.phi<D>(j.delta);
    }
    return out;
}

/// Same as above without a cached table; every jump costs one direct inversion.
template <int D>
JumpPath<D> transform_path(const JumpPath<D>& path, double m) {
    if (path.mass != 0.0) {
        throw UsageError("transform_path expects a path sampled with mass 0");
    }
    JumpPath<D> out = path;
    out.mass = m;
    if (m == 0.0) return out;
    out.truncation = ell_inv(path.truncation, m, D);
    for (auto& j : out.jumps) {
        const double r = norm(j.delta);
        j.delta = (ell_inv(r, m, D) / r) * j.delta;
    }
    return out;
}

/// int_r^inf u^{-3/2} e^{-m^2 u / 2} du = 2 r^{-1/2} e^{-ar} - 2 sqrt(a pi) erfc(sqrt(ar)), a = m^2/2.
inline double psi_tail_integral(double r, double m) {
    if (!(r > 0.0)) throw DomainError("psi_tail_integral requires r > 0");
    const double z = m * std::sqrt(0.5 * r);
    return 2.0 / std::sqrt(r) * std::exp(-z * z) * detail::tail_ghat(z);
}

inline double log_psi_inv(double r, double m) {
    if (!(r > 0.0)) throw DomainError("psi_inv requires r > 0");
    detail::require_mass(m);
    if (m == 0.0) return std::log(r);
    const double z = m * std::sqrt(0.5 * r);
    return std::log(r) - 2.0 * std::log(detail::tail_ghat(z)) + 2.0 * z * z;
}

/// psi_m^{-1}(r) = 4 / (int_r^inf u^{-3/2} e^{-m^2 u/2} du)^2 >= r.
inline double psi_inv(double r, double m) { return m == 0.0 ? r : std::exp(log_psi_inv(r, m)); }

/// psi_m(r) <= r, by safeguarded Newton on log psi_m^{-1} in log r to 1e-12.
inline double psi(double r, double m) {
    if (!(r > 0.0)) throw DomainError("psi requires r > 0");
    detail::require_mass(m);
    if (m == 0.0) return r;
    const double target = std::log(r);
    auto f = [&](double w) {
        const double s = std::exp(w);
        const double z = m * std::sqrt(0.5 * s);
        const double g = detail::tail_ghat(z);
        return std::pair<double, double>{w - 2.0 * std::log(g) + 2.0 * z * z - target, 1.0 / g};
    };
    return std::exp(detail::solve_increasing(f, target, 1e-13, "psi"));
}

/// int_0^eps psi_m(r) sigma^0(dr): the drift of Psi_m(T) once jumps below eps are folded in.
inline double transformed_small_jump_mean(double eps, double m) {
    if (m == 0.0) return sigma0_small_jump_mean(eps);
    // r = eps u^2 makes the integrand smooth: 2 (2 pi)^{-1/2} eps^{-1/2} psi(eps u^2) / u^2.
    auto f = [&](double u) {
        const double r = eps * u * u;
        return psi(r, m) / (u * u);
    };
    quad::Tolerance tol;
    tol.rel = 1e-12;
    const auto res = quad::integrate(f, 0.0, 1.0, tol);
    return 2.0 / std::sqrt(2.0 * std::numbers::pi * eps) * res.value;
}

/// Psi_m with the drift int_0^eps psi_m dsigma^0 supplied by the caller (it depends on eps and m only).
inline SubPath transform_sub(const SubPath& path, double m, double drift) {
    if (path.mass != 0.0) {
        throw UsageError("transform_sub expects a path sampled under nu^0");
    }
    detail::require_mass(m);
    SubPath out = path;
    out.mass = m;
    if (m == 0.0) return out;
    out.drift = drift;
    for (auto& j : out.jumps) {
        j.size = psi(j.size, m);
    }
    return out;
}

/// Psi_m: every jump r -> psi_m(r), drift -> int_0^eps psi_m dsigma^0. Nondecreasing, below T.
inline SubPath transform_sub(const SubPath& path, double m) {
    return transform_sub(path, m, m == 0.0 ? path.drift : transformed_small_jump_mean(path.truncation, m));
}

}  // namespace relfk
