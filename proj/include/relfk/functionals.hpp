/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "relfk/error.hpp"
#include "relfk/fields.hpp"
#include "relfk/geometry.hpp"
#include "relfk/levy.hpp"
#include "relfk/quadrature.hpp"
#include "relfk/random.hpp"
#include "relfk/subordinator.hpp"

namespace relfk {

// Complex functionals S = Re S + i Im S with weight e^{-S}. Re S = int V, Im S = magnetic phase.

struct QuadKnobs {
    int radial_nodes = 8;
    int directions = 0;  // 0: default rule for the dimension
    int line_order = 8;
    double line_panel = 0.5;
    int max_panels = 4096;
    // Small-ball term by its second-order closed form when truncation <= smooth_ratio * smooth_scale.
    bool closed_form_small_ball = true;
    double smooth_ratio = 1e-2;
};

struct ItoKnobs {
    double h = 1e-3;
    int v_substeps = 256;
    double far_factor = 8.0;  // steps of (distance / far_factor)^2 away from the support of A
    std::size_t max_points = std::size_t{1} << 24;
    double payoff_cutoff = 1e-30;
};

/// Nodes for int_{|y|<truncation} F(y) n^m(y) dy = sum_i weights[i] * avg_dir F(radii[i] dir) / radii[i],
/// where F(y) = G(y) . y. Radial variable r = truncation u^2 with Gauss-Legendre in u.
template <int D>
struct CorrectionRule {
    double truncation = 0.0;
    double mass = 0.0;
    std::vector<double> radii;
    std::vector<double> weights;
    DirectionRule<D> dirs;
    double half_moment = 0.0;  // (1/2d) int_{|y|<eps} |y|^2 n^m(dy)
};

template <int D>
CorrectionRule<D> make_correction_rule(double truncation, double m, const QuadKnobs& q) {
    if (!(truncation > 0.0)) throw UsageError("correction rule needs truncation > 0");
    CorrectionRule<D> rule;
    rule.truncation = truncation;
    rule.mass = m;
    rule.dirs = direction_rule<D>(q.directions);
    const auto& gl = quad::gauss_legendre(q.radial_nodes);
    const double area = sphere_area(D);
    for (int i = 0; i < gl.order(); ++i) {
        const double u = gl.nodes[i];
        const double r = truncation * u * u;
        // dr = 2 eps u du; |S| r^{D-1} n(r) dr; the extra r is the |y| of G(y) . y.
        rule.radii.push_back(r);
        rule.weights.push_back(2.0 * truncation * u * gl.weights[i] * area * std::pow(r, D) * levy_density(r, m, D));
        rule.half_moment += 0.5 * rule.weights.back() * r / D;
    }
    return rule;
}

/// int_{|y|<eps} |y|^{1+alpha} n^0(dy) = c_d eps^alpha / alpha; dominates every n^m.
inline double holder_moment(double eps, double alpha, int d) {
    return massless_tail_constant(d) * std::pow(eps, alpha) / alpha;
}

namespace detail {

// Fewest Gauss nodes n with (len / scale)^{2n} / (2n)! below 1e-14.
inline int short_line_order(double ratio) {
    double term = 1.0;
    for (int n = 1; n < 8; ++n) {
        term *= ratio * ratio / ((2.0 * n - 1.0) * (2.0 * n));
        if (term < 1e-14) return n;
    }
    return 8;
}

}  // namespace detail

/// int_0^1 A(p + theta y) d theta by composite Gauss-Legendre, clipped to the support of A.
template <int D>
Point<D> line_average(const FieldBundle<D>& f, const Point<D>& p, const Point<D>& y, const QuadKnobs& q) {
    Point<D> out{};
    if (f.A_zero) return out;
    double lo = 0.0;
    double hi = 1.0;
    const double len = norm(y);
    if (len == 0.0) return f.A(p);
    if (f.A_support && !f.A_affine) {
        // |p - c + theta y|^2 = R^2
        const Point<D> z = p - f.A_support->center;
        const double R = f.A_support->radius;
        const double b = dot(z, y) / (len * len);
        const double c = (norm2(z) - R * R) / (len * len);
        const double disc = b * b - c;
        if (disc <= 0.0) return out;
        const double root = std::sqrt(disc);
        lo = std::max(0.0, -b - root);
        hi = std::min(1.0, -b + root);
        if (!(hi > lo)) return out;
    }
    int panels = 1;
    int order = q.line_order;
    if (f.A_affine) {
        order = 1;
    } else {
        const double span = (hi - lo) * len;
        panels = static_cast<int>(std::min<double>(q.max_panels, std::ceil(span / q.line_panel)));
        panels = std::max(panels, 1);
        if (f.smooth_scale > 0.0) order = std::min(order, detail::short_line_order(span / panels / f.smooth_scale));
    }
    const auto& gl = quad::gauss_legendre(order);
    const double width = (hi - lo) / panels;
    for (int k = 0; k < panels; ++k) {
        const double a = lo + k * width;
        for (int i = 0; i < gl.order(); ++i) {
            const double theta = a + width * gl.nodes[i];
            out += (width * gl.weights[i]) * f.A(p + theta * y);
        }
    }
    return out;
}

enum class Discretization { midpoint = 1, line = 2 };

namespace detail {

// int_{|y|<eps} [G(p, y) - A(p)] . y n^m(dy), the A(p) term dropping out against symmetric directions.
template <int D>
double small_ball_term(const FieldBundle<D>& f, const Point<D>& p, const CorrectionRule<D>& rule,
                       Discretization kind, const QuadKnobs& q) {
    double total = 0.0;
    for (std::size_t i = 0; i < rule.radii.size(); ++i) {
        const double r = rule.radii[i];
        double avg = 0.0;
        for (std::size_t k = 0; k < rule.dirs.directions.size(); ++k) {
            const Point<D>& w = rule.dirs.directions[k];
            Point<D> a;
            if (kind == Discretization::midpoint) {
                a = f.A(p + (0.5 * r) * w);
            } else {
                a = line_average(f, p, r * w, q);
            }
            avg += rule.dirs.weights[k] * dot(a, w);
        }
        total += rule.weights[i] * avg;
    }
    return total;
}

template <int D>
std::complex<double> eval_jump_functional(const Point<D>& x, double t, const JumpPath<D>& path,
                                          const FieldBundle<D>& f, const CorrectionRule<D>& rule,
                                          const QuadKnobs& q, Discretization kind) {
    if (t < 0.0 || t > path.horizon * (1.0 + 1e-15)) {
        throw UsageError("functional evaluated at t outside [0, horizon]");
    }
    if (rule.truncation != path.truncation || rule.mass != path.mass) {
        throw UsageError("correction rule does not match the path truncation and mass");
    }
    const bool closed_form = q.closed_form_small_ball && f.divA && f.smooth_scale > 0.0 &&
                             rule.truncation <= q.smooth_ratio * f.smooth_scale;
    double re = 0.0;
    double jumps = 0.0;
    double corr = 0.0;
    Point<D> pos = x;
    double prev = 0.0;
    auto segment = [&](double end) {
        const double dur = end - prev;
        if (dur <= 0.0) return;
        if (!f.V_zero) re += dur * f.V(pos);
        if (!f.A_zero) {
            if (!f.A_support || f.A_affine || f.A_support->distance_outside(pos) <= rule.truncation) {
                // Odd orders cancel on the symmetric ball, leaving divA/2 times the second moment plus O(eps^3).
                corr += dur * (closed_form ? f.divA(pos) * rule.half_moment : small_ball_term(f, pos, rule, kind, q));
            }
        }
    };
    for (const auto& j : path.jumps) {
        if (j.time > t) break;
        segment(j.time);
        if (!f.A_zero) {
            const Point<D> a = kind == Discretization::midpoint ? f.A(pos + 0.5 * j.delta) : line_average(f, pos, j.delta, q);
            jumps += dot(a, j.delta);
        }
        pos += j.delta;
        prev = j.time;
    }
    segment(t);
    if (f.holder && corr != 0.0) {
        const double alpha = f.holder->alpha;
        const double k = kind == Discretization::midpoint ? std::pow(0.5, alpha) : 1.0 / (1.0 + alpha);
        const double bound = t * f.holder->constant * k * holder_moment(rule.truncation, alpha, D);
        if (std::abs(corr) > 1.05 * bound + 1e-300) {
            throw EstimationError("small-ball correction " + std::to_string(corr) + " exceeds its Hoelder bound " +
                                  std::to_string(bound) + "; check the field metadata");
        }
    }
    return {re, jumps + corr};
}

}  // namespace detail

/// S_1: jump sum of A(x + X(s-) + dX/2) . dX plus the ball correction with the midpoint rule.
/// The path's own truncation and mass select the correction ball |y| < truncation and n^mass.
template <int D>
std::complex<double> eval_S1(const Point<D>& x, double t, const JumpPath<D>& path, const FieldBundle<D>& f,
                             const CorrectionRule<D>& rule, const QuadKnobs& q = {}) {
    return detail::eval_jump_functional(x, t, path, f, rule, q, Discretization::midpoint);
}

template <int D>
std::complex<double> eval_S1(const Point<D>& x, double t, const JumpPath<D>& path, const FieldBundle<D>& f,
                             const QuadKnobs& q = {}) {
    return eval_S1(x, t, path, f, make_correction_rule<D>(path.truncation, path.mass, q), q);
}

/// S_2: as S_1 with the line average int_0^1 A(. + theta y) d theta in place of A(. + y/2).
template <int D>
std::complex<double> eval_S2(const Point<D>& x, double t, const JumpPath<D>& path, const FieldBundle<D>& f,
                             const CorrectionRule<D>& rule, const QuadKnobs& q = {}) {
    return detail::eval_jump_functional(x, t, path, f, rule, q, Discretization::line);
}

template <int D>
std::complex<double> eval_S2(const Point<D>& x, double t, const JumpPath<D>& path, const FieldBundle<D>& f,
                             const QuadKnobs& q = {}) {
    return eval_S2(x, t, path, f, make_correction_rule<D>(path.truncation, path.mass, q), q);
}

// ---------------------------------------------------------------------------------------
// j = 3

template <int D>
struct BrownianGrid {
    std::vector<double> times;
    std::vector<Point<D>> values;
};

/// Exact Gaussian increments on sorted `times` (times[0] == 0).
template <int D, class Engine>
BrownianGrid<D> make_brownian(const std::vector<double>& times, Engine& rng) {
    if (times.empty() || times.front() != 0.0) throw UsageError("make_brownian: times must start at 0");
    BrownianGrid<D> g;
    g.times = times;
    g.values.resize(times.size());
    NormalSource<Engine> normal(rng);
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double dt = times[k] - times[k - 1];
        if (!(dt > 0.0)) throw UsageError("make_brownian: times must be strictly increasing");
        const double sd = std::sqrt(dt);
        Point<D> v = g.values[k - 1];
        for (int i = 0; i < D; ++i) v[i] += sd * normal();
        g.values[k] = v;
    }
    return g;
}

/// Inserts Brownian-bridge points so that every step is <= h. Existing points are kept as is.
template <int D, class Engine>
BrownianGrid<D> refine_bridge(const BrownianGrid<D>& grid, double h, Engine& rng) {
    if (!(h > 0.0)) throw UsageError("refine_bridge requires h > 0");
    BrownianGrid<D> out;
    NormalSource<Engine> normal(rng);
    for (std::size_t k = 0; k + 1 < grid.times.size(); ++k) {
        double s = grid.times[k];
        const double b = grid.times[k + 1];
        Point<D> v = grid.values[k];
        const Point<D>& target = grid.values[k + 1];
        out.times.push_back(s);
        out.values.push_back(v);
        const int pieces = static_cast<int>(std::ceil((b - s) / h));
        const double step = (b - s) / pieces;
        for (int p = 1; p < pieces; ++p) {
            const double next = grid.times[k] + p * step;
            const double rest = b - s;
            const double frac = (next - s) / rest;
            const double sd = std::sqrt((next - s) * (b - next) / rest);
            for (int i = 0; i < D; ++i) v[i] += frac * (target[i] - v[i]) + sd * normal();
            s = next;
            out.times.push_back(s);
            out.values.push_back(v);
        }
    }
    out.times.push_back(grid.times.back());
    out.values.push_back(grid.values.back());
    return out;
}

/// Times s_i at which V is sampled for j = 3 (multiples of t / substeps merged with the jump
/// times of T, then t itself) and T(s_i). T is right-continuous: T(s_i) includes a jump at s_i.
struct SubordinatedTimes {
    std::vector<double> s;
    std::vector<double> T;
};

inline SubordinatedTimes subordinated_times(const SubPath& sub, double t, int substeps, bool with_v) {
    if (t < 0.0 || t > sub.horizon * (1.0 + 1e-15)) throw UsageError("subordinated_times: t outside [0, horizon]");
    SubordinatedTimes out;
    double jumps = 0.0;
    std::size_t next = 0;
    auto value = [&](double s) {
        while (next < sub.jumps.size() && sub.jumps[next].time <= s) {
            jumps += sub.jumps[next].size;
            ++next;
        }
        return sub.drift * s + jumps;
    };
    if (with_v && t > 0.0) {
        const int n = std::max(substeps, 1);
        std::size_t jk = 0;
        for (int i = 0; i < n; ++i) {
            const double grid = t * i / n;
            const double upper = t * (i + 1) / n;
            out.s.push_back(grid);
            out.T.push_back(value(grid));
            while (jk < sub.jumps.size() && sub.jumps[jk].time < upper) {
                if (sub.jumps[jk].time > grid) {
                    out.s.push_back(sub.jumps[jk].time);
                    out.T.push_back(value(sub.jumps[jk].time));
                }
                ++jk;
            }
        }
    }
    out.s.push_back(t);
    out.T.push_back(value(t));
    return out;
}

namespace detail {

template <int D>
double ito_increment(const FieldBundle<D>& f, const Point<D>& x, double t0, const Point<D>& b0, double t1,
                     const Point<D>& b1) {
    const Point<D> p0 = x + b0;
    const Point<D> p1 = x + b1;
    return dot(f.A(p0), b1 - b0) + 0.25 * (f.divA(p0) + f.divA(p1)) * (t1 - t0);
}

template <int D>
std::size_t locate(const std::vector<double>& times, double T) {
    auto it = std::lower_bound(times.begin(), times.end(), T);
    if (it == times.end() || *it != T) {
        throw UsageError("Brownian grid does not contain the subordinated time " + std::to_string(T));
    }
    return static_cast<std::size_t>(it - times.begin());
}

// As locate for a nondecreasing sequence of queries: gallops forward from `cursor`.
inline std::size_t locate_forward(const std::vector<double>& times, double T, std::size_t& cursor) {
    std::size_t lo = cursor;
    std::size_t step = 1;
    std::size_t hi = lo;
    while (hi < times.size() && times[hi] < T) {
        lo = hi;
        hi += step;
        step *= 2;
    }
    hi = std::min(hi, times.size());
    auto it = std::lower_bound(times.begin() + static_cast<std::ptrdiff_t>(lo),
                               times.begin() + static_cast<std::ptrdiff_t>(hi), T);
    if (it == times.end() || *it != T) {
        throw UsageError("Brownian grid does not contain the subordinated time " + std::to_string(T));
    }
    cursor = static_cast<std::size_t>(it - times.begin());
    return cursor;
}

}  // namespace detail

/// S_3 on an explicit grid: left-point Ito sum of A(x+B) . dB up to T(t) plus half the
/// trapezoid of divA, and Re S = sum over s_i of (s_{i+1} - s_i) V(x + B(T(s_i))).
template <int D>
std::complex<double> eval_S3(const Point<D>& x, double t, const BrownianGrid<D>& bm, const SubPath& sub,
                             const FieldBundle<D>& f, const ItoKnobs& k = {}) {
    if (!f.divA) throw UsageError("j = 3 requires divA");
    if (t == 0.0) return {0.0, 0.0};
    const auto st = subordinated_times(sub, t, k.v_substeps, !f.V_zero);
    const double Tend = st.T.back();
    const std::size_t end = detail::locate<D>(bm.times, Tend);
    double im = 0.0;
    if (!f.A_zero) {
        for (std::size_t i = 0; i < end; ++i) {
            im += detail::ito_increment(f, x, bm.times[i], bm.values[i], bm.times[i + 1], bm.values[i + 1]);
        }
    }
    double re = 0.0;
    if (!f.V_zero) {
        for (std::size_t i = 0; i + 1 < st.s.size(); ++i) {
            const std::size_t idx = detail::locate<D>(bm.times, st.T[i]);
            re += (st.s[i + 1] - st.s[i]) * f.V(x + bm.values[idx]);
        }
    }
    return {re, im};
}

/// Brownian values at skeleton times plus the cumulative Ito phase at each of them.
template <int D>
struct BrownianSkeleton {
    std::vector<double> times;
    std::vector<Point<D>> values;
    std::vector<double> phase;  // NaN past the filled range
    std::size_t points = 0;
    bool overflow = false;
};

/// Samples B exactly at the sorted, distinct skeleton times (times[0] == 0).
template <int D, class Engine>
BrownianSkeleton<D> brownian_skeleton(std::vector<double> times, Engine& rng) {
    BrownianSkeleton<D> sk;
    auto g = make_brownian<D>(times, rng);
    sk.times = std::move(g.times);
    sk.values = std::move(g.values);
    sk.phase.assign(sk.times.size(), std::numeric_limits<double>::quiet_NaN());
    sk.phase[0] = 0.0;
    sk.points = sk.times.size();
    return sk;
}

/// Fills every skeleton interval up to t_limit with bridge points and accumulates the Ito phase.
/// Step h inside the support of A; outside at distance D the step grows to (D/far_factor)^2,
/// also capped so the bridge drift moves less than D/far_factor. Pass `record` to keep the grid.
template <int D, class Engine>
void ito_fill(BrownianSkeleton<D>& sk, const Point<D>& x, const FieldBundle<D>& f, double t_limit,
              const ItoKnobs& k, Engine& rng, BrownianGrid<D>* record = nullptr) {
    if (!f.divA) throw UsageError("j = 3 requires divA");
    NormalSource<Engine> normal(rng);
    if (record) {
        record->times.assign(1, sk.times[0]);
        record->values.assign(1, sk.values[0]);
    }
    double phase = 0.0;
    std::size_t points = sk.times.size();
    for (std::size_t j = 0; j + 1 < sk.times.size() && sk.times[j] < t_limit; ++j) {
        const double b = sk.times[j + 1];
        const Point<D>& target = sk.values[j + 1];
        double s = sk.times[j];
        Point<D> v = sk.values[j];
        if (!f.A_zero) {
            double div_v = f.divA(x + v);
            while (s < b) {
                double step = k.h;
                if (f.A_support && !f.A_affine) {
                    const double dist = f.A_support->distance_outside(x + v);
                    if (dist > 0.0) {
                        const double reach = dist / k.far_factor;
                        step = std::max(step, reach * reach);
                        const double pull = norm(target - v) / (b - s);
                        if (pull > 0.0) step = std::min(step, std::max(k.h, reach / pull));
                    }
                }
                double next_t;
                Point<D> next_v;
                if (s + step >= b) {
                    next_t = b;
                    next_v = target;
                } else {
                    next_t = s + step;
                    const double rest = b - s;
                    const double frac = step / rest;
                    const double sd = std::sqrt(step * (b - next_t) / rest);
                    next_v = v;
                    for (int i = 0; i < D; ++i) next_v[i] += frac * (target[i] - v[i]) + sd * normal();
                    if (++points > k.max_points) {
                        sk.overflow = true;
                        sk.points = points;
                        return;
                    }
                }
                const double div_next = f.divA(x + next_v);
                phase += dot(f.A(x + v), next_v - v) + 0.25 * (div_v + div_next) * (next_t - s);
                div_v = div_next;
                if (record && next_t != b) {
                    record->times.push_back(next_t);
                    record->values.push_back(next_v);
                }
                s = next_t;
                v = next_v;
            }
        }
        sk.phase[j + 1] = phase;
        if (record) {
            record->times.push_back(b);
            record->values.push_back(target);
        }
    }
    sk.points = points;
}

/// S_3 from a filled skeleton and the clock samples st = subordinated_times(sub, t, ...).
template <int D>
std::complex<double> eval_S3(const Point<D>& x, const BrownianSkeleton<D>& sk, const SubordinatedTimes& st,
                             const FieldBundle<D>& f) {
    const std::size_t end = detail::locate<D>(sk.times, st.T.back());
    const double im = f.A_zero ? 0.0 : sk.phase[end];
    if (std::isnan(im)) throw UsageError("Brownian skeleton was not filled up to T(t)");
    double re = 0.0;
    if (!f.V_zero) {
        std::size_t cursor = 0;
        for (std::size_t i = 0; i + 1 < st.s.size(); ++i) {
            const std::size_t idx = detail::locate_forward(sk.times, st.T[i], cursor);
            re += (st.s[i + 1] - st.s[i]) * f.V(x + sk.values[idx]);
        }
    }
    return {re, im};
}

/// S_3 from a filled skeleton; the skeleton must contain subordinated_times(sub, t, ...).T.
template <int D>
std::complex<double> eval_S3(const Point<D>& x, double t, const BrownianSkeleton<D>& sk, const SubPath& sub,
                             const FieldBundle<D>& f, const ItoKnobs& k = {}) {
    if (t == 0.0) return {0.0, 0.0};
    return eval_S3(x, sk, subordinated_times(sub, t, k.v_substeps, !f.V_zero), f);
}

/// e^{-S}
inline std::complex<double> weight(std::complex<double> S) { return std::exp(-S); }

}  // namespace relfk
