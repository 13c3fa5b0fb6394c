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
#include <queue>
#include <string>
#include <vector>

#include "relfk/error.hpp"

namespace relfk::quad {

/// Gauss-Legendre rule on [0, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int order) : nodes(order), weights(order) {
        if (order < 1) {
            throw UsageError("Gauss-Legendre order must be >= 1");
        }
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        const int n = order;
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p1 = 1.0;
                double p2 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
                }
                dp = n * (z * p1 - p2) / (z * z - 1.0);
                const double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) {
                    break;
                }
            }
            const double w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
    }

    int order() const noexcept { return static_cast<int>(nodes.size()); }

    template <class F>
    auto integrate(F&& f, double a, double b) const {
        const double len = b - a;
        auto sum = weights[0] * f(a + len * nodes[0]);
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            sum += weights[i] * f(a + len * nodes[i]);
        }
        return sum * len;
    }
};

/// Shared, immutable rule of the given order. Safe to call concurrently.
inline const GaussLegendre& gauss_legendre(int order) {
    // Low orders are built once up front so hot loops never take the lock.
    static const std::vector<GaussLegendre> small = [] {
        std::vector<GaussLegendre> v;
        for (int k = 1; k <= 32; ++k) v.emplace_back(k);
        return v;
    }();
    if (order >= 1 && order <= 32) {
        return small[order - 1];
    }
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GaussLegendre>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[order];
    if (!slot) {
        slot = std::make_unique<GaussLegendre>(order);
    }
    return *slot;
}

struct Result {
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
};

struct Tolerance {
    double abs = 0.0;
    double rel = 1e-12;
    int max_intervals = 2000;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                   0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                   0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                   0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                   0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                   0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                   0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                  0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Interval {
    double a;
    double b;
    double value;
    double error;
    bool operator<(const Interval& o) const { return error < o.error; }
};

template <class F>
Interval gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double fv1[7];
    double fv2[7];
    const double fc = f(c);
    double resk = fc * kWgk[7];
    double resg = fc * kWg[3];
    double resabs = std::abs(resk);
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        fv1[j] = f(c - dx);
        fv2[j] = f(c + dx);
        const double fsum = fv1[j] + fv2[j];
        resk += kWgk[j] * fsum;
        resabs += kWgk[j] * (std::abs(fv1[j]) + std::abs(fv2[j]));
        if (j % 2 == 1) {
            resg += kWg[j / 2] * fsum;
        }
    }
    // QUADPACK error scaling.
    const double reskh = resk * 0.5;
    double resasc = kWgk[7] * std::abs(fc - reskh);
    for (int j = 0; j < 7; ++j) {
        resasc += kWgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));
    }
    const double ah = std::abs(h);
    resasc *= ah;
    resabs *= ah;
    double err = std::abs((resk - resg) * h);
    if (resasc != 0.0 && err != 0.0) {
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    }
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) {
        err = std::max(eps * 50.0 * resabs, err);
    }
    return {a, b, resk * h, err};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (G7/K15) on a finite interval.
/// Throws QuadratureError when the tolerance is not met within max_intervals.
template <class F>
Result integrate(F&& f, double a, double b, const Tolerance& tol = {}) {
    if (a == b) {
        return {};
    }
    std::priority_queue<detail::Interval> heap;
    auto first = detail::gk15(f, a, b);
    double total = first.value;
    double err = first.error;
    heap.push(first);
    int evals = 15;
    int intervals = 1;
    while (err > std::max(tol.abs, tol.rel * std::abs(total))) {
        if (intervals >= tol.max_intervals) {
            throw QuadratureError("adaptive quadrature did not converge",
                                  total != 0.0 ? err / std::abs(total) : err);
        }
        auto worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        evals += 30;
        ++intervals;
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Re-sum occasionally to stop drift in the running totals.
        if (intervals % 64 == 0) {
            auto copy = heap;
            total = 0.0;
            err = 0.0;
            while (!copy.empty()) {
                total += copy.top().value;
                err += copy.top().error;
                copy.pop();
            }
        }
    }
    return {total, err, evals};
}

}  // namespace relfk::quad
