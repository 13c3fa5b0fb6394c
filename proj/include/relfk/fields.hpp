/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relfk/error.hpp"
#include "relfk/geometry.hpp"
#include "relfk/random.hpp"

namespace relfk {

/// Local Hoelder bound |A(x) - A(y)| <= constant |x - y|^alpha.
struct Holder {
    double alpha = 1.0;
    double constant = 0.0;
};

template <int D>
struct FieldBundle {
    using Vector = std::function<Point<D>(const Point<D>&)>;
    using Scalar = std::function<double(const Point<D>&)>;

    Vector A;
    Scalar divA;  // required for j = 3
    Scalar V;     // V >= 0
    std::optional<Holder> holder;
    // A and divA are negligible (order 1e-12) outside this ball.
    std::optional<Ball<D>> A_support;
    bool A_zero = false;
    bool A_affine = false;
    bool V_zero = false;
    // Length over which A is C^3 with third derivatives of order sup|A| / smooth_scale^3; 0 if A is not C^3.
    double smooth_scale = 0.0;
    std::string description;
};

/// Gauge function chi with its derivatives. hessian_bound >= sup |D^2 chi| (operator norm).
template <int D>
struct Gauge {
    std::function<double(const Point<D>&)> chi;
    std::function<Point<D>(const Point<D>&)> grad;
    std::function<double(const Point<D>&)> laplacian;
    double hessian_bound = 0.0;
    std::optional<Ball<D>> support;
    bool quadratic = false;
    double smooth_scale = std::numeric_limits<double>::infinity();
    std::string description;
};

template <int D>
struct Payoff {
    std::function<std::complex<double>(const Point<D>&)> g;
    double sup = 1.0;  // >= sup |g|
    bool zero = false;
    bool real = true;
    std::string description;
};

/// Flat key=value parameters, dotted keys for families: A.family=gaussian_bump, A.w=1.
using ParamMap = std::map<std::string, std::string>;

namespace detail {

// Family name plus the parameters under `prefix`, in key order.
inline std::string describe(const ParamMap& params, const std::string& prefix, const std::string& family) {
    std::string s = prefix + "=" + family;
    for (const auto& [key, value] : params) {
        if (key.size() > prefix.size() + 1 && key.compare(0, prefix.size() + 1, prefix + ".") == 0 &&
            key != prefix + ".family") {
            s += " " + key + "=" + value;
        }
    }
    return s;
}

inline constexpr double kSupportFloor = 1e-12;

inline double parse_number(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw UsageError("field '" + key + "': not a number: '" + text + "'");
    }
    if (pos != text.size() || !std::isfinite(v)) {
        throw UsageError("field '" + key + "': not a finite number: '" + text + "'");
    }
    return v;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_number(key, item));
    }
    if (out.empty()) throw UsageError("field '" + key + "': empty list");
    return out;
}

class Params {
public:
    Params(const ParamMap& map, std::string prefix) : map_(map), prefix_(std::move(prefix)) {}

    std::string family(const std::string& fallback) const {
        auto it = map_.find(prefix_ + ".family");
        if (it == map_.end()) {
            it = map_.find(prefix_);
        }
        return it == map_.end() ? fallback : it->second;
    }

    double number(const std::string& name, double fallback) const {
        auto it = map_.find(key(name));
        return it == map_.end() ? fallback : parse_number(key(name), it->second);
    }

    template <int D>
    Point<D> point(const std::string& name, double fill) const {
        Point<D> p;
        p.fill(fill);
        auto it = map_.find(key(name));
        if (it == map_.end()) return p;
        auto v = parse_list(key(name), it->second);
        if (v.size() == 1) {
            p.fill(v[0]);
        } else if (v.size() == static_cast<std::size_t>(D)) {
            std::copy(v.begin(), v.end(), p.begin());
        } else {
            throw UsageError("field '" + key(name) + "': expected 1 or " + std::to_string(D) + " values");
        }
        return p;
    }

    std::vector<double> list(const std::string& name, std::vector<double> fallback) const {
        auto it = map_.find(key(name));
        return it == map_.end() ? fallback : parse_list(key(name), it->second);
    }

    std::string key(const std::string& name) const { return prefix_ + "." + name; }

private:
    const ParamMap& map_;
    std::string prefix_;
};

inline double positive(const std::string& key, double v) {
    if (!(v > 0.0)) throw UsageError("field '" + key + "' must be > 0");
    return v;
}

// Radius beyond which amp e^{-r^2/w^2} falls below kSupportFloor; amp absorbs derivative factors.
inline double gaussian_support_radius(double amp, double width) {
    return width * std::sqrt(std::log(std::max(std::abs(amp), 1.0) / kSupportFloor));
}

// Hoelder-alpha constant of a radial profile on [0, reach], estimated on a dense pair grid
// with 10% headroom. x -> profile(|x - c|) inherits it because | |x| - |y| | <= |x - y|.
template <class F>
double radial_holder_constant(F&& profile, double alpha, double reach) {
    double best = 0.0;
    constexpr int kBase = 400;
    constexpr int kSteps = 80;
    for (int i = 0; i <= kBase; ++i) {
        const double r = reach * i / kBase;
        const double fr = profile(r);
        for (int k = 0; k < kSteps; ++k) {
            const double delta = reach * std::pow(1e-7, static_cast<double>(k) / (kSteps - 1));
            best = std::max(best, std::abs(profile(r + delta) - fr) / std::pow(delta, alpha));
        }
    }
    return 1.1 * best;
}

template <int D>
Ball<D> enclosing(const Ball<D>& a, const Ball<D>& b) {
    const double dist = norm(b.center - a.center);
    if (dist + b.radius <= a.radius) return a;
    if (dist + a.radius <= b.radius) return b;
    const double radius = 0.5 * (dist + a.radius + b.radius);
    Ball<D> out;
    out.center = dist > 0.0 ? a.center + ((radius - a.radius) / dist) * (b.center - a.center) : a.center;
    out.radius = radius * (1.0 + 1e-12);
    return out;
}

}  // namespace detail

/// A families: zero, affine (A(x) = M x + b, M row-major), gaussian_bump (a e^{-|x-c|^2/w^2}),
/// hoelder (a |x-c|^alpha e^{-|x-c|^2/w^2}, alpha in (0, 1]).
/// V families: zero, harmonic (kappa |x|^2), bump (a e^{-|x-c|^2/w^2}, a >= 0).
template <int D>
FieldBundle<D> make_fields(const ParamMap& params) {
    FieldBundle<D> f;
    const detail::Params pa(params, "A");
    const std::string af = pa.family("zero");
    if (af == "zero") {
        f.A = [](const Point<D>&) { return Point<D>{}; };
        f.divA = [](const Point<D>&) { return 0.0; };
        f.A_zero = true;
        f.A_affine = true;
        f.smooth_scale = std::numeric_limits<double>::infinity();
        f.holder = Holder{1.0, 0.0};
        Ball<D> b;
        b.radius = 0.0;
        f.A_support = b;
    } else if (af == "affine") {
        const auto mv = pa.list("M", {1.0});
        std::vector<double> m(D * D, 0.0);
        if (mv.size() == 1) {
            for (int i = 0; i < D; ++i) m[i * D + i] = mv[0];
        } else if (mv.size() == static_cast<std::size_t>(D * D)) {
            m = mv;
        } else {
            throw UsageError("field 'A.M': expected 1 or " + std::to_string(D * D) + " values");
        }
        const Point<D> b0 = pa.point<D>("b", 0.0);
        f.A = [m, b0](const Point<D>& x) {
            Point<D> out = b0;
            for (int i = 0; i < D; ++i) {
                for (int k = 0; k < D; ++k) out[i] += m[i * D + k] * x[k];
            }
            return out;
        };
        double trace = 0.0;
        double frob = 0.0;
        for (int i = 0; i < D; ++i) trace += m[i * D + i];
        for (double v : m) frob += v * v;
        f.divA = [trace](const Point<D>&) { return trace; };
        f.A_affine = true;
        f.smooth_scale = std::numeric_limits<double>::infinity();
        f.holder = Holder{1.0, std::sqrt(frob)};
    } else if (af == "gaussian_bump" || af == "hoelder") {
        const Point<D> a = pa.point<D>("a", 1.0);
        const Point<D> c = pa.point<D>("c", 0.0);
        const double w = detail::positive(pa.key("w"), pa.number("w", 1.0));
        const double amp = norm(a);
        Ball<D> support;
        support.center = c;
        if (af == "gaussian_bump") {
            f.A = [a, c, w](const Point<D>& x) { return std::exp(-norm2(x - c) / (w * w)) * a; };
            f.divA = [a, c, w](const Point<D>& x) {
                const Point<D> z = x - c;
                return -2.0 / (w * w) * dot(a, z) * std::exp(-norm2(z) / (w * w));
            };
            f.holder = Holder{1.0, 1.1 * amp * std::sqrt(2.0) * std::exp(-0.5) / w};
            f.smooth_scale = w;
            support.radius = detail::gaussian_support_radius(amp * (1.0 + 2.0 / w), w);
        } else {
            const double alpha = pa.number("alpha", 0.5);
            if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("field 'A.alpha' must lie in (0, 1]");
            f.A = [a, c, w, alpha](const Point<D>& x) {
                const double r2 = norm2(x - c);
                return std::pow(r2, 0.5 * alpha) * std::exp(-r2 / (w * w)) * a;
            };
            f.divA = [a, c, w, alpha](const Point<D>& x) {
                const Point<D> z = x - c;
                const double r = norm(z);
                if (r == 0.0) return 0.0;  // integrable singularity for alpha < 1
                // grad [r^alpha e^{-r^2/w^2}] = (alpha r^{alpha-2} - 2 r^alpha / w^2) e^{-r^2/w^2} z
                const double s = (alpha * std::pow(r, alpha - 2.0) - 2.0 * std::pow(r, alpha) / (w * w)) *
                                 std::exp(-r * r / (w * w));
                return s * dot(a, z);
            };
            auto profile = [w, alpha](double r) { return std::pow(r, alpha) * std::exp(-r * r / (w * w)); };
            f.holder = Holder{alpha, amp * detail::radial_holder_constant(profile, alpha, 4.0 * w)};
            support.radius = detail::gaussian_support_radius(amp * (1.0 + 2.0 / w) * (1.0 + 10.0 * w), w);
        }
        f.A_support = support;
    } else {
        throw UsageError("field 'A.family': unknown family '" + af + "'");
    }

    const detail::Params pv(params, "V");
    const std::string vf = pv.family("zero");
    if (vf == "zero") {
        f.V = [](const Point<D>&) { return 0.0; };
        f.V_zero = true;
    } else if (vf == "harmonic") {
        const double kappa = pv.number("kappa", 1.0);
        if (!(kappa >= 0.0)) throw UsageError("field 'V.kappa' must be >= 0");
        f.V = [kappa](const Point<D>& x) { return kappa * norm2(x); };
        f.V_zero = kappa == 0.0;
    } else if (vf == "bump") {
        const double a = pv.number("a", 1.0);
        const Point<D> c = pv.point<D>("c", 0.0);
        const double w = detail::positive(pv.key("w"), pv.number("w", 1.0));
        if (!(a >= 0.0)) throw UsageError("field 'V.a' must be >= 0 (V >= 0 is required)");
        f.V = [a, c, w](const Point<D>& x) { return a * std::exp(-norm2(x - c) / (w * w)); };
        f.V_zero = a == 0.0;
    } else {
        throw UsageError("field 'V.family': unknown family '" + vf + "'");
    }
    f.description = detail::describe(params, "A", af) + " " + detail::describe(params, "V", vf);
    return f;
}

/// chi families: gaussian (a e^{-|x-c|^2/w^2}), quadratic (q |x-c|^2 / 2).
template <int D>
Gauge<D> make_gauge(const ParamMap& params) {
    const detail::Params pc(params, "chi");
    const std::string cf = pc.family("gaussian");
    const double a = pc.number("a", 1.0);
    const Point<D> c = pc.point<D>("c", 0.0);
    Gauge<D> g;
    if (cf == "gaussian") {
        const double w = detail::positive(pc.key("w"), pc.number("w", 1.0));
        const double w2 = w * w;
        g.chi = [a, c, w2](const Point<D>& x) { return a * std::exp(-norm2(x - c) / w2); };
        g.grad = [a, c, w2](const Point<D>& x) {
            const Point<D> z = x - c;
            return (-2.0 * a / w2 * std::exp(-norm2(z) / w2)) * z;
        };
        g.laplacian = [a, c, w2](const Point<D>& x) {
            const Point<D> z = x - c;
            const double r2 = norm2(z);
            return a * std::exp(-r2 / w2) * (4.0 * r2 / (w2 * w2) - 2.0 * D / w2);
        };
        g.hessian_bound = 2.0 * std::abs(a) / w2;
        g.smooth_scale = w;
        Ball<D> b;
        b.center = c;
        b.radius = detail::gaussian_support_radius(std::abs(a) * (1.0 + 4.0 / w2), w);
        g.support = b;
    } else if (cf == "quadratic") {
        const double q = pc.number("q", a);
        g.chi = [q, c](const Point<D>& x) { return 0.5 * q * norm2(x - c); };
        g.grad = [q, c](const Point<D>& x) { return q * (x - c); };
        g.laplacian = [q](const Point<D>&) { return q * D; };
        g.hessian_bound = std::abs(q);
        g.quadratic = true;
    } else {
        throw UsageError("field 'chi.family': unknown family '" + cf + "'");
    }
    g.description = detail::describe(params, "chi", cf);
    return g;
}

/// A -> A + grad chi, divA -> divA + Laplacian chi, V unchanged.
template <int D>
FieldBundle<D> gauge_shift(const FieldBundle<D>& f, const Gauge<D>& gauge) {
    FieldBundle<D> out = f;
    auto A = f.A;
    auto grad = gauge.grad;
    out.A = [A, grad](const Point<D>& x) { return A(x) + grad(x); };
    if (f.divA) {
        auto div = f.divA;
        auto lap = gauge.laplacian;
        out.divA = [div, lap](const Point<D>& x) { return div(x) + lap(x); };
    }
    out.A_zero = false;
    out.A_affine = f.A_affine && gauge.quadratic;
    out.smooth_scale = f.smooth_scale > 0.0 ? std::min(f.smooth_scale, gauge.smooth_scale) : 0.0;
    if (f.A_support && gauge.support) {
        out.A_support = f.A_support->radius > 0.0 ? detail::enclosing(*f.A_support, *gauge.support) : *gauge.support;
    } else {
        out.A_support.reset();
    }
    if (f.holder && f.holder->alpha == 1.0) {
        out.holder = Holder{1.0, f.holder->constant + 1.1 * gauge.hessian_bound};
    } else {
        out.holder.reset();
    }
    out.description = f.description + " +grad(" + gauge.description + ")";
    return out;
}

/// g families: one, zero, gaussian (a e^{-|y-c|^2/w^2}).
template <int D>
Payoff<D> make_payoff(const ParamMap& params) {
    const detail::Params pg(params, "g");
    const std::string gf = pg.family("one");
    Payoff<D> p;
    if (gf == "one") {
        p.g = [](const Point<D>&) { return std::complex<double>(1.0, 0.0); };
        p.sup = 1.0;
    } else if (gf == "zero") {
        p.g = [](const Point<D>&) { return std::complex<double>(0.0, 0.0); };
        p.sup = 0.0;
        p.zero = true;
    } else if (gf == "gaussian") {
        const double a = pg.number("a", 1.0);
        const Point<D> c = pg.point<D>("c", 0.0);
        const double w = detail::positive(pg.key("w"), pg.number("w", 1.0));
        p.g = [a, c, w](const Point<D>& y) { return std::complex<double>(a * std::exp(-norm2(y - c) / (w * w)), 0.0); };
        p.sup = std::abs(a);
        p.zero = a == 0.0;
    } else {
        throw UsageError("field 'g.family': unknown family '" + gf + "'");
    }
    p.description = detail::describe(params, "g", gf);
    return p;
}

/// y -> e^{sign i chi(y)} g(y).
template <int D>
Payoff<D> gauge_payoff(const Payoff<D>& p, const Gauge<D>& gauge, double sign) {
    Payoff<D> out = p;
    auto g = p.g;
    auto chi = gauge.chi;
    out.g = [g, chi, sign](const Point<D>& y) { return std::polar(1.0, sign * chi(y)) * g(y); };
    out.real = p.zero;
    out.description = p.description + " *exp(i chi)";
    return out;
}

/// Largest relative mismatch between divA and a central-difference divergence of A on
/// `probes` random points of the cube [-reach, reach]^D.
template <int D, class Engine>
double divergence_mismatch(const FieldBundle<D>& f, int probes, double reach, Engine& rng) {
    if (!f.divA) throw UsageError("divergence check requires divA");
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        Point<D> x;
        for (int i = 0; i < D; ++i) x[i] = reach * (2.0 * uniform_open(rng) - 1.0);
        double fd = 0.0;
        for (int i = 0; i < D; ++i) {
            const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
            Point<D> xp = x;
            Point<D> xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double ap = f.A(xp)[i];
            const double am = f.A(xm)[i];
            fd += (ap - am) / (2.0 * h);
        }
        const double exact = f.divA(x);
        worst = std::max(worst, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
    }
    return worst;
}

}  // namespace relfk
