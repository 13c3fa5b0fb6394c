/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "relfk/error.hpp"
#include "relfk/random.hpp"

namespace relfk {

// A distinct type rather than an alias so that D deduces as int.
template <int D>
struct Point : std::array<double, D> {};

template <int D>
constexpr Point<D> operator+(Point<D> a, const Point<D>& b) {
    for (int i = 0; i < D; ++i) a[i] += b[i];
    return a;
}

template <int D>
constexpr Point<D> operator-(Point<D> a, const Point<D>& b) {
    for (int i = 0; i < D; ++i) a[i] -= b[i];
    return a;
}

template <int D>
constexpr Point<D> operator*(double s, Point<D> a) {
    for (int i = 0; i < D; ++i) a[i] *= s;
    return a;
}

template <int D>
constexpr Point<D>& operator+=(Point<D>& a, const Point<D>& b) {
    for (int i = 0; i < D; ++i) a[i] += b[i];
    return a;
}

template <int D>
constexpr double dot(const Point<D>& a, const Point<D>& b) {
    double s = 0.0;
    for (int i = 0; i < D; ++i) s += a[i] * b[i];
    return s;
}

template <int D>
double norm(const Point<D>& a) {
    return std::sqrt(dot(a, a));
}

template <int D>
constexpr double norm2(const Point<D>& a) {
    return dot(a, a);
}

/// Uniform point on S^{D-1}.
template <int D, class Engine>
Point<D> random_direction(Engine& rng) {
    if constexpr (D == 1) {
        return {uniform_open(rng) < 0.5 ? -1.0 : 1.0};
    } else {
        for (;;) {
            Point<D> v{};
            for (int i = 0; i < D; ++i) v[i] = standard_normal(rng);
            const double n = norm(v);
            if (n > 0.0) {
                return (1.0 / n) * v;
            }
        }
    }
}

/// Weighted direction set on S^{D-1}; weights sum to 1, so sums are sphere averages.
template <int D>
struct DirectionRule {
    std::vector<Point<D>> directions;
    std::vector<double> weights;
};

/// D=1: {+1,-1}. D=2: `count` equi-angular directions (default 16).
/// D=3: 26-point Lebedev rule (degree 7), or the 6 axis points when count == 6.
/// Other D: the 2D signed axes. Every rule is symmetric under z -> -z.
template <int D>
DirectionRule<D> direction_rule(int count = 0) {
    DirectionRule<D> rule;
    if constexpr (D == 1) {
        rule.directions = {{1.0}, {-1.0}};
        rule.weights = {0.5, 0.5};
    } else if constexpr (D == 2) {
        const int n = count > 0 ? count : 16;
        if (n % 2 != 0) {
            throw UsageError("2-d direction count must be even");
        }
        for (int k = 0; k < n; ++k) {
            const double a = 2.0 * std::numbers::pi * k / n;
            rule.directions.push_back({std::cos(a), std::sin(a)});
            rule.weights.push_back(1.0 / n);
        }
    } else if constexpr (D == 3) {
        const int n = count > 0 ? count : 26;
        if (n != 26 && n != 6) {
            throw UsageError("3-d direction rule supports 6 or 26 points");
        }
        auto add = [&](Point<3> p, double w) {
            rule.directions.push_back((1.0 / norm(p)) * p);
            rule.weights.push_back(w);
        };
        const double w1 = n == 26 ? 1.0 / 21.0 : 1.0 / 6.0;
        for (int i = 0; i < 3; ++i) {
            for (double s : {1.0, -1.0}) {
                Point<3> p{};
                p[i] = s;
                add(p, w1);
            }
        }
        if (n == 26) {
            for (int i = 0; i < 3; ++i) {
                for (double s1 : {1.0, -1.0}) {
                    for (double s2 : {1.0, -1.0}) {
                        Point<3> p{};
                        p[i] = s1;
                        p[(i + 1) % 3] = s2;
                        add(p, 4.0 / 105.0);
                    }
                }
            }
            for (double s1 : {1.0, -1.0}) {
                for (double s2 : {1.0, -1.0}) {
                    for (double s3 : {1.0, -1.0}) {
                        add({s1, s2, s3}, 9.0 / 280.0);
                    }
                }
            }
        }
    } else {
        for (int i = 0; i < D; ++i) {
            for (double s : {1.0, -1.0}) {
                Point<D> p{};
                p[i] = s;
                rule.directions.push_back(p);
                rule.weights.push_back(1.0 / (2 * D));
            }
        }
    }
    return rule;
}

/// Ball outside of which a field is numerically zero.
template <int D>
struct Ball {
    Point<D> center{};
    double radius = 0.0;

    double distance_outside(const Point<D>& p) const { return norm(p - center) - radius; }
};

}  // namespace relfk
