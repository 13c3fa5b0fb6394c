/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "relfk/error.hpp"
#include "relfk/quadrature.hpp"

namespace relfk {

/// Order of K_nu restricted to nu = k/2, k >= 0. Every order the library needs is (d +- 1)/2.
class BesselOrder {
public:
    static BesselOrder from_twice(int twice_nu) {
        if (twice_nu < 0) {
            throw DomainError("Bessel order must be non-negative, got 2*nu=" + std::to_string(twice_nu));
        }
        return BesselOrder(twice_nu);
    }
    /// (d+1)/2
    static BesselOrder upper(int d) { return from_twice(d + 1); }
    /// (d-1)/2
    static BesselOrder lower(int d) { return from_twice(d - 1); }

    int twice() const noexcept { return twice_; }
    double value() const noexcept { return 0.5 * twice_; }
    bool half_integer() const noexcept { return twice_ % 2 == 1; }

private:
    explicit BesselOrder(int twice_nu) : twice_(twice_nu) {}
    int twice_;
};

struct BesselResult {
    double value;
    bool underflow;
};

namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

// e^x K_0(x), e^x K_1(x) for 0 < x <= 2 from the ascending series.
inline void bessel_k01_series_scaled(double x, double& k0, double& k1) {
    const double t = 0.25 * x * x;
    const double lx = std::log(0.5 * x);
    // K_0 = -(ln(x/2)+gamma) I_0 + sum_{k>=1} t^k/(k!)^2 H_k
    double term0 = 1.0;  // t^k/(k!)^2
    double i0 = 1.0;
    double harmonic = 0.0;
    double s0 = 0.0;
    // K_1 = 1/x + ln(x/2) I_1 - (x/4) sum_{k>=0} [psi(k+1)+psi(k+2)] t^k/(k!(k+1)!)
    double term1 = 1.0;  // t^k/(k!(k+1)!)
    double i1s = 1.0;
    double s1 = (-kEulerGamma) + (1.0 - kEulerGamma);
    for (int k = 1; k < 60; ++k) {
        term0 *= t / (static_cast<double>(k) * k);
        harmonic += 1.0 / k;
        i0 += term0;
        s0 += term0 * harmonic;
        term1 *= t / (static_cast<double>(k) * (k + 1));
        i1s += term1;
        const double psi_k1 = harmonic - kEulerGamma;
        const double psi_k2 = harmonic + 1.0 / (k + 1) - kEulerGamma;
        s1 += term1 * (psi_k1 + psi_k2);
        if (term0 * harmonic < 1e-17 * std::abs(s0) && term1 < 1e-17 * i1s) {
            break;
        }
    }
    const double i1 = 0.5 * x * i1s;
    const double ex = std::exp(x);
    k0 = (-(lx + kEulerGamma) * i0 + s0) * ex;
    k1 = (1.0 / x + lx * i1 - 0.25 * x * s1) * ex;
}

// e^x K_0(x), e^x K_1(x) for x > 2 by Steed's evaluation of the Temme continued fraction.
inline void bessel_k01_cf_scaled(double x, double& k0, double& k1) {
    constexpr double mu = 0.0;
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu * mu;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    int i = 2;
    for (; i <= 100000; ++i) {
        a -= 2.0 * (i - 1);
        c = -a * c / i;
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < 1e-17) {
            break;
        }
    }
    if (i > 100000) {
        throw QuadratureError("bessel_k continued fraction did not converge", 0.0);
    }
    h *= a1;
    k0 = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
    k1 = k0 * (mu + x + 0.5 - h) / x;
}

}  // namespace detail

/// e^x K_nu(x). Never underflows on (0, inf).
inline double bessel_k_scaled(BesselOrder order, double x) {
    if (!(x > 0.0)) {
        throw DomainError("bessel_k requires x > 0");
    }
    if (std::isinf(x)) {
        return 0.0;
    }
    double lo = 0.0;  // order nu - 1
    double hi = 0.0;  // order nu
    double nu = 0.0;
    if (order.half_integer()) {
        // K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}, and K_{-1/2} = K_{1/2}.
        hi = std::sqrt(std::numbers::pi / (2.0 * x));
        lo = hi;
        nu = 0.5;
    } else {
        // Switch point x = 2: series error grows past it, the fraction converges slowly below it.
        if (x <= 2.0) {
            detail::bessel_k01_series_scaled(x, lo, hi);
        } else {
            detail::bessel_k01_cf_scaled(x, lo, hi);
        }
        if (order.twice() == 0) {
            return lo;
        }
        nu = 1.0;
    }
    // Upward recurrence K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu, stable for K.
    while (2.0 * nu < order.twice()) {
        const double next = lo + (2.0 * nu / x) * hi;
        lo = hi;
        hi = next;
        nu += 1.0;
    }
    return hi;
}

inline BesselResult bessel_k_checked(BesselOrder order, double x) {
    const double scaled = bessel_k_scaled(order, x);
    const double v = scaled * std::exp(-x);
    if (v < std::numeric_limits<double>::min()) {
        return {0.0, true};
    }
    return {v, false};
}

/// Modified Bessel function of the third kind K_nu(x); 0 once the value underflows.
inline double bessel_k(BesselOrder order, double x) { return bessel_k_checked(order, x).value; }

inline double erfc(double x) { return std::erfc(x); }
inline double gamma_fn(double x) { return std::tgamma(x); }
inline double log_gamma(double x) { return std::lgamma(x); }

/// Surface area of the unit sphere S^{d-1}.
inline double sphere_area(int d) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

/// x^{(d+1)/2} K_{(d+1)/2}(x) normalized by its x -> 0 limit 2^{(d-1)/2} Gamma((d+1)/2).
/// Equals 1 at x = 0 and decreases strictly on (0, inf).
inline double bessel_ratio(int d, double x) {
    if (x == 0.0) {
        return 1.0;
    }
    const double nu = 0.5 * (d + 1);
    const double limit = std::pow(2.0, 0.5 * (d - 1)) * std::tgamma(nu);
    const double scaled = bessel_k_scaled(BesselOrder::upper(d), x);
    return std::exp(nu * std::log(x) - x) * scaled / limit;
}

namespace detail {

struct TailIntegral {
    double scaled;  // e^{m r} * integral
    double error;
};

// e^{mr} int_r^inf u^{(d-3)/2} K_{(d+1)/2}(m u) du, integrated in s = ln(u/r) on [r, R*],
// R* = r + 60/m (r + 60(1+p)/m when the power p is positive).
inline TailIntegral tail_bessel_scaled(double m, double r, int d, double rel_tol) {
    const double p = 0.5 * (d - 3);
    const BesselOrder order = BesselOrder::upper(d);
    const double reach = 60.0 * (1.0 + std::max(p, 0.0)) / m;
    const double rstar = r + reach;
    auto integrand = [&](double s) {
        const double u = r * std::exp(s);
        return std::pow(u, p + 1.0) * std::exp(-m * (u - r)) * bessel_k_scaled(order, m * u);
    };
    quad::Tolerance tol;
    tol.rel = rel_tol;
    tol.max_intervals = 4000;
    const double smax = std::log(rstar / r);
    // Split at the scale 1/m where the integrand turns from algebraic to exponential decay.
    const double ssplit = std::log(std::max(1.0 / m, r) / r);
    double value = 0.0;
    double error = 0.0;
    if (ssplit > 0.0 && ssplit < smax) {
        auto a = quad::integrate(integrand, 0.0, ssplit, tol);
        auto b = quad::integrate(integrand, ssplit, smax, tol);
        value = a.value + b.value;
        error = a.error + b.error;
    } else {
        auto a = quad::integrate(integrand, 0.0, smax, tol);
        value = a.value;
        error = a.error;
    }
    // Remainder beyond R*: e^u K_nu(u) is nonincreasing for nu >= 1/2, so it is bounded by
    // R*^p e^{mR*}K(mR*) e^{-m(R*-r)} / m (for p <= 0).
    const double bound = std::pow(rstar, p) *
                         bessel_k_scaled(order, m * rstar) * std::exp(-m * reach) / m;
    return {value, error + bound};
}

}  // namespace detail

/// int_r^inf u^{(d-3)/2} K_{(d+1)/2}(m u) du, relative accuracy 1e-10 or better.
/// Returns 0 when the value underflows (m r beyond ~700).
inline double tail_bessel_integral(double m, double r, int d) {
    if (!(m > 0.0) || !(r > 0.0)) {
        throw DomainError("tail_bessel_integral requires m > 0 and r > 0");
    }
    const auto t = detail::tail_bessel_scaled(m, r, d, 1e-12);
    return t.scaled * std::exp(-m * r);
}

/// log of tail_bessel_integral; finite for all m r.
inline double log_tail_bessel_integral(double m, double r, int d) {
    if (!(m > 0.0) || !(r > 0.0)) {
        throw DomainError("tail_bessel_integral requires m > 0 and r > 0");
    }
    const auto t = detail::tail_bessel_scaled(m, r, d, 1e-12);
    return std::log(t.scaled) - m * r;
}

}  // namespace relfk
