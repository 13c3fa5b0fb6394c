/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "relfk/coupling.hpp"
#include "relfk/error.hpp"
#include "relfk/fields.hpp"
#include "relfk/functionals.hpp"
#include "relfk/levy.hpp"
#include "relfk/quadrature.hpp"
#include "relfk/random.hpp"
#include "relfk/subordinator.hpp"

namespace relfk {

enum class Mode { direct, coupled };

struct Knobs {
    double eps = 1e-3;
    double eps_t = 1e-4;
    QuadKnobs quad;
    ItoKnobs ito;
    Mode mode = Mode::coupled;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t block = 64;  // samples per reduction block; part of the result, not of scheduling
    double max_reject_fraction = 1e-3;
    std::shared_ptr<TransformCache> cache;  // shared ell_m tables; a private one is made if null
    std::string label;                       // extra text folded into the config digest
};

struct Estimate {
    std::complex<double> mean{0.0, 0.0};
    double stderr = 0.0;  // sqrt(se_re^2 + se_im^2)
    double se_re = 0.0;
    double se_im = 0.0;
    std::size_t n_samples = 0;
    std::size_t rejected = 0;
    std::uint64_t config_digest = 0;
};

struct SweepRow {
    double m = 0.0;
    Estimate estimate;
    Estimate paired_diff;  // E|v_m - v_0| (real)
    Estimate difference;   // E[v_m - v_0]
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& text, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace detail {

inline void require_mass_arg(double m) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw UsageError("mass must be finite and >= 0, got " + std::to_string(m));
}

struct Moments {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        n += 1.0;
        const double delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }

    // Chan et al. pairwise update; exact for identical constant data.
    void merge(const Moments& o) {
        if (o.n == 0.0) return;
        if (n == 0.0) {
            *this = o;
            return;
        }
        const double total = n + o.n;
        const double delta = o.mean - mean;
        mean += delta * (o.n / total);
        m2 += o.m2 + delta * delta * (n * o.n / total);
        n = total;
    }

    double se() const { return n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0; }
};

struct FoldResult {
    std::vector<Moments> moments;
    std::size_t rejected = 0;
};

// sample(index, out) fills `quantities` values and returns false to reject the sample.
// Blocks of `block` consecutive indices are accumulated independently and folded in index
// order, so the result does not depend on `workers`.
template <class Sample>
FoldResult parallel_fold(std::size_t n, std::size_t quantities, unsigned workers, std::size_t block,
                         Sample&& sample) {
    block = std::max<std::size_t>(block, 1);
    const std::size_t blocks = (n + block - 1) / block;
    std::vector<std::vector<Moments>> partial(blocks, std::vector<Moments>(quantities));
    std::vector<std::size_t> rejected(blocks, 0);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&] {
        std::vector<double> values(quantities);
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                const std::size_t lo = b * block;
                const std::size_t hi = std::min(n, lo + block);
                for (std::size_t i = lo; i < hi; ++i) {
                    bool ok = sample(i, values.data());
                    for (double v : values) ok = ok && std::isfinite(v);
                    if (!ok) {
                        ++rejected[b];
                        continue;
                    }
                    for (std::size_t q = 0; q < quantities; ++q) partial[b][q].add(values[q]);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next.store(blocks);
                return;
            }
        }
    };
    const unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(blocks)));
    if (w == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < w; ++k) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    FoldResult out;
    out.moments.resize(quantities);
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t q = 0; q < quantities; ++q) out.moments[q].merge(partial[b][q]);
        out.rejected += rejected[b];
    }
    return out;
}

inline Estimate complex_estimate(const Moments& re, const Moments& im, std::size_t rejected, std::uint64_t digest) {
    Estimate e;
    e.mean = {re.mean, im.mean};
    e.se_re = re.se();
    e.se_im = im.se();
    e.stderr = std::hypot(e.se_re, e.se_im);
    e.n_samples = static_cast<std::size_t>(re.n);
    e.rejected = rejected;
    e.config_digest = digest;
    return e;
}

inline constexpr std::uint64_t kTagJump = 0x4a554d50;
inline constexpr std::uint64_t kTagSub = 0x53554250;
inline constexpr std::uint64_t kTagBrown = 0x42524f57;

inline std::string real_text(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <int D>
std::string point_text(const Point<D>& x) {
    std::string s;
    for (int i = 0; i < D; ++i) s += (i ? "," : "") + real_text(x[i]);
    return s;
}

}  // namespace detail

/// Digest of every numerical knob that influences a result.
template <int D>
std::uint64_t config_digest(int j, const Point<D>& x, double t, const std::vector<double>& masses, std::size_t n,
                            const Knobs& k, const FieldBundle<D>& f, const Payoff<D>& g) {
    using detail::real_text;
    std::string s = "j=" + std::to_string(j) + ";d=" + std::to_string(D) + ";x=" + detail::point_text<D>(x) +
                    ";t=" + real_text(t) + ";n=" + std::to_string(n) + ";m=";
    for (double m : masses) s += real_text(m) + ",";
    s += ";eps=" + real_text(k.eps) + ";eps_t=" + real_text(k.eps_t) +
         ";radial=" + std::to_string(k.quad.radial_nodes) + ";dirs=" + std::to_string(k.quad.directions) +
         ";line=" + std::to_string(k.quad.line_order) + ";panel=" + real_text(k.quad.line_panel) +
         ";closed=" + std::to_string(k.quad.closed_form_small_ball) + ";ratio=" + real_text(k.quad.smooth_ratio) +
         ";h=" + real_text(k.ito.h) + ";substeps=" + std::to_string(k.ito.v_substeps) +
         ";far=" + real_text(k.ito.far_factor) + ";cap=" + std::to_string(k.ito.max_points) +
         ";mode=" + std::to_string(static_cast<int>(k.mode)) + ";seed=" + std::to_string(k.seed) +
         ";block=" + std::to_string(k.block) + ";" + f.description + ";" + g.description + ";" + k.label;
    return fnv1a(s);
}

/// Draws sample `index` and writes e^{-S^m} g(x + path^m(t)) for every mass in `masses`.
/// Coupled mode shares one base path (Phi_m / Psi_m), direct mode uses an independent path per mass.
template <int D>
class SampleEngine {
public:
    SampleEngine(int j, const Point<D>& x, double t, std::vector<double> masses, const FieldBundle<D>& f,
                 const Payoff<D>& g, const Knobs& k)
        : j_(j), x_(x), t_(t), masses_(std::move(masses)), f_(f), g_(g), k_(k) {
        if (j < 1 || j > 3) throw UsageError("j must be 1, 2 or 3");
        if (!(t > 0.0)) throw UsageError("SampleEngine requires t > 0");
        if (j == 3 && !f.divA) throw UsageError("j = 3 requires divA");
        if (!f.A || !f.V || !g.g) throw UsageError("field bundle and payoff must be complete");
        LevyConfig{D, 0.0, k.eps}.validate();
        if (!(k.eps_t > 0.0)) throw UsageError("eps_t must be > 0");
        auto cache = k.cache ? k.cache : std::make_shared<TransformCache>();
        for (double m : masses_) {
            detail::require_mass(m);
            PerMass pm;
            pm.m = m;
            if (j < 3) {
                if (k.mode == Mode::coupled && m > 0.0) {
                    pm.table = cache->get(m, D);
                    pm.rule = make_correction_rule<D>(pm.table->inverse(k.eps), m, k.quad);
                } else {
                    pm.rule = make_correction_rule<D>(k.eps, m, k.quad);
                }
            } else if (k.mode == Mode::coupled) {
                pm.drift = transformed_small_jump_mean(k.eps_t, m);
            }
            per_mass_.push_back(std::move(pm));
        }
    }

    std::size_t size() const { return masses_.size(); }

    /// false when the sample must be rejected (grid cap hit).
    bool operator()(std::size_t index, std::complex<double>* out) const {
        if (j_ < 3) return jump_sample(index, out);
        return brownian_sample(index, out);
    }

private:
    struct PerMass {
        double m = 0.0;
        std::shared_ptr<const EllTransform> table;
        CorrectionRule<D> rule;
        double drift = 0.0;
    };

    std::complex<double> jump_value(const JumpPath<D>& path, const CorrectionRule<D>& rule) const {
        const Point<D> end = x_ + path.end_position();
        const std::complex<double> gv = g_.g(end);
        if (gv == 0.0) return 0.0;
        const auto S = j_ == 1 ? eval_S1(x_, t_, path, f_, rule, k_.quad) : eval_S2(x_, t_, path, f_, rule, k_.quad);
        return weight(S) * gv;
    }

    bool jump_sample(std::size_t index, std::complex<double>* out) const {
        if (k_.mode == Mode::coupled) {
            Philox rng(k_.seed, stream_id(detail::kTagJump, index));
            const auto base = sample_path<D>(LevyConfig{D, 0.0, k_.eps}, t_, rng);
            for (std::size_t q = 0; q < per_mass_.size(); ++q) {
                const auto& pm = per_mass_[q];
                if (pm.m == 0.0) {
                    out[q] = jump_value(base, pm.rule);
                } else {
                    out[q] = jump_value(transform_path(base, *pm.table), pm.rule);
                }
            }
        } else {
            for (std::size_t q = 0; q < per_mass_.size(); ++q) {
                const auto& pm = per_mass_[q];
                Philox rng(k_.seed, stream_id(detail::kTagJump, index, q + 1));
                out[q] = jump_value(sample_path<D>(LevyConfig{D, pm.m, k_.eps}, t_, rng), pm.rule);
            }
        }
        return true;
    }

    // One Brownian path serves every subordinator in `subs`.
    bool brownian_values(const std::vector<SubPath>& subs, Philox& brng, std::complex<double>* out) const {
        std::vector<SubordinatedTimes> st;
        std::vector<double> times{0.0};
        for (const auto& s : subs) {
            st.push_back(subordinated_times(s, t_, k_.ito.v_substeps, !f_.V_zero));
            times.insert(times.end(), st.back().T.begin(), st.back().T.end());
        }
        std::sort(times.begin(), times.end());
        times.erase(std::unique(times.begin(), times.end()), times.end());
        auto sk = brownian_skeleton<D>(std::move(times), brng);
        std::vector<std::complex<double>> gv(subs.size());
        double limit = 0.0;
        for (std::size_t q = 0; q < subs.size(); ++q) {
            const double Tend = st[q].T.back();
            gv[q] = g_.g(x_ + sk.values[detail::locate<D>(sk.times, Tend)]);
            // Payoff below the cutoff: the sample contributes nothing whatever the phase is.
            if (std::abs(gv[q]) < k_.ito.payoff_cutoff) {
                gv[q] = 0.0;
            } else {
                limit = std::max(limit, Tend);
            }
        }
        if (limit > 0.0) {
            ito_fill(sk, x_, f_, limit, k_.ito, brng);
            if (sk.overflow) return false;
        }
        for (std::size_t q = 0; q < subs.size(); ++q) {
            out[q] = gv[q] == 0.0 ? std::complex<double>(0.0) : weight(eval_S3(x_, sk, st[q], f_)) * gv[q];
        }
        return true;
    }

    bool brownian_sample(std::size_t index, std::complex<double>* out) const {
        if (k_.mode == Mode::coupled) {
            Philox srng(k_.seed, stream_id(detail::kTagSub, index));
            const auto base = sample_sub_path(t_, k_.eps_t, srng);
            std::vector<SubPath> subs;
            for (const auto& pm : per_mass_) subs.push_back(transform_sub(base, pm.m, pm.drift));
            Philox brng(k_.seed, stream_id(detail::kTagBrown, index));
            return brownian_values(subs, brng, out);
        }
        for (std::size_t q = 0; q < per_mass_.size(); ++q) {
            const double m = per_mass_[q].m;
            Philox srng(k_.seed, stream_id(detail::kTagSub, index, q + 1));
            SubPath sub;
            if (f_.V_zero) {
                // Only T(t) matters: draw it exactly and carry it as a pure drift.
                sub.horizon = t_;
                sub.mass = m;
                sub.drift = sample_ig(t_, m, srng) / t_;
            } else {
                sub = sample_sub_path(t_, k_.eps_t, m, srng);
            }
            Philox brng(k_.seed, stream_id(detail::kTagBrown, index, q + 1));
            if (!brownian_values({sub}, brng, out + q)) return false;
        }
        return true;
    }

    int j_;
    Point<D> x_;
    double t_;
    std::vector<double> masses_;
    const FieldBundle<D>& f_;
    const Payoff<D>& g_;
    const Knobs& k_;
    std::vector<PerMass> per_mass_;
};

/// Sweep over `m_list` (made decreasing, 0 appended if missing). One base ensemble in coupled
/// mode; rows come out in decreasing m, the last one at m = 0.
template <int D>
std::vector<SweepRow> coupled_mass_sweep(int j, const Point<D>& x, double t, std::vector<double> m_list,
                                         const FieldBundle<D>& f, const Payoff<D>& g, std::size_t n,
                                         const Knobs& k) {
    if (n < 2) throw UsageError("n must be >= 2");
    for (double m : m_list) detail::require_mass_arg(m);
    std::sort(m_list.begin(), m_list.end(), std::greater<>());
    m_list.erase(std::unique(m_list.begin(), m_list.end()), m_list.end());
    if (m_list.empty() || m_list.back() != 0.0) m_list.push_back(0.0);
    const std::uint64_t digest = config_digest<D>(j, x, t, m_list, n, k, f, g);
    const std::size_t M = m_list.size();
    std::vector<SweepRow> rows(M);
    if (t == 0.0) {
        const auto gx = g.g(x);
        for (std::size_t q = 0; q < M; ++q) {
            rows[q].m = m_list[q];
            rows[q].estimate.mean = gx;
            rows[q].estimate.n_samples = n;
            rows[q].paired_diff.n_samples = n;
            rows[q].difference.n_samples = n;
            rows[q].estimate.config_digest = rows[q].paired_diff.config_digest = rows[q].difference.config_digest = digest;
        }
        return rows;
    }
    if (!(t > 0.0)) throw UsageError("t must be >= 0");
    SampleEngine<D> engine(j, x, t, m_list, f, g, k);
    // Per mass: Re v, Im v, |v - v0|, Re(v - v0), Im(v - v0).
    constexpr std::size_t kQ = 5;
    auto fold = detail::parallel_fold(n, M * kQ, k.workers, k.block, [&](std::size_t i, double* out) {
        std::vector<std::complex<double>> v(M);
        if (!engine(i, v.data())) return false;
        const auto v0 = v[M - 1];
        for (std::size_t q = 0; q < M; ++q) {
            const auto dv = v[q] - v0;
            out[q * kQ + 0] = v[q].real();
            out[q * kQ + 1] = v[q].imag();
            out[q * kQ + 2] = std::abs(dv);
            out[q * kQ + 3] = dv.real();
            out[q * kQ + 4] = dv.imag();
        }
        return true;
    });
    if (static_cast<double>(fold.rejected) > k.max_reject_fraction * static_cast<double>(n)) {
        throw EstimationError("rejected " + std::to_string(fold.rejected) + " of " + std::to_string(n) +
                              " samples (limit " + std::to_string(k.max_reject_fraction * 100.0) + "%)");
    }
    detail::Moments zero;
    zero.n = fold.moments[0].n;
    for (std::size_t q = 0; q < M; ++q) {
        const auto* mo = &fold.moments[q * kQ];
        rows[q].m = m_list[q];
        rows[q].estimate = detail::complex_estimate(mo[0], mo[1], fold.rejected, digest);
        rows[q].paired_diff = detail::complex_estimate(mo[2], zero, fold.rejected, digest);
        rows[q].difference = detail::complex_estimate(mo[3], mo[4], fold.rejected, digest);
    }
    return rows;
}

/// (e^{-t[H_j^m - m + V]} g)(x) by Monte Carlo.
template <int D>
Estimate estimate_semigroup(int j, const Point<D>& x, double t, double m, const FieldBundle<D>& f,
                            const Payoff<D>& g, std::size_t n, const Knobs& k) {
    if (n < 2) throw UsageError("n must be >= 2");
    detail::require_mass_arg(m);
    const std::uint64_t digest = config_digest<D>(j, x, t, {m}, n, k, f, g);
    if (t == 0.0) {
        Estimate e;
        e.mean = g.g(x);
        e.n_samples = n;
        e.config_digest = digest;
        return e;
    }
    if (!(t > 0.0)) throw UsageError("t must be >= 0");
    SampleEngine<D> engine(j, x, t, {m}, f, g, k);
    auto fold = detail::parallel_fold(n, 2, k.workers, k.block, [&](std::size_t i, double* out) {
        std::complex<double> v;
        if (!engine(i, &v)) return false;
        out[0] = v.real();
        out[1] = v.imag();
        return true;
    });
    if (static_cast<double>(fold.rejected) > k.max_reject_fraction * static_cast<double>(n)) {
        throw EstimationError("rejected " + std::to_string(fold.rejected) + " of " + std::to_string(n) +
                              " samples (limit " + std::to_string(k.max_reject_fraction * 100.0) + "%)");
    }
    return detail::complex_estimate(fold.moments[0], fold.moments[1], fold.rejected, digest);
}

/// Each step down the sweep (excluding the final m = 0 row) may rise by at most
/// `slack` joint standard errors.
inline bool decreasing_within(const std::vector<double>& mean, const std::vector<double>& se, double slack) {
    for (std::size_t k = 0; k + 1 < mean.size(); ++k) {
        if (mean[k + 1] > mean[k] + slack * std::hypot(se[k], se[k + 1])) return false;
    }
    return true;
}

struct L2Row {
    double m = 0.0;
    double l2 = 0.0;  // (sum_k w_k E|v_m - v_0|(x_k)^2)^{1/2}
    double l2_se = 0.0;
    double semigroup_diff = 0.0;  // (sum_k w_k |E[v_m - v_0](x_k)|^2)^{1/2}
    double semigroup_diff_se = 0.0;
};

/// Weighted L^2 over a finite grid of the per-point sweeps; independent streams per point,
/// delta-method standard errors.
template <int D>
std::vector<L2Row> l2_experiment(int j, const std::vector<Point<D>>& grid, const std::vector<double>& weights,
                                 double t, const std::vector<double>& m_list, const FieldBundle<D>& f,
                                 const Payoff<D>& g, std::size_t n, const Knobs& k) {
    if (grid.empty() || grid.size() != weights.size()) throw UsageError("l2_experiment: grid and weights must match");
    Knobs kk = k;
    if (!kk.cache) kk.cache = std::make_shared<TransformCache>();
    std::vector<std::vector<SweepRow>> sweeps;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        kk.seed = mix64(k.seed ^ mix64(0x4c32 + p));
        sweeps.push_back(coupled_mass_sweep<D>(j, grid[p], t, m_list, f, g, n, kk));
    }
    const std::size_t M = sweeps[0].size();
    std::vector<L2Row> out(M);
    for (std::size_t q = 0; q < M; ++q) {
        double s = 0.0;
        double sd = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) {
            const double mu = sweeps[p][q].paired_diff.mean.real();
            s += weights[p] * mu * mu;
            sd += weights[p] * std::norm(sweeps[p][q].difference.mean);
        }
        out[q].m = sweeps[0][q].m;
        out[q].l2 = std::sqrt(s);
        out[q].semigroup_diff = std::sqrt(sd);
        double v = 0.0;
        double vd = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) {
            const auto& row = sweeps[p][q];
            const double mu = row.paired_diff.mean.real();
            if (out[q].l2 > 0.0) v += std::pow(weights[p] * mu / out[q].l2 * row.paired_diff.stderr, 2);
            if (out[q].semigroup_diff > 0.0) {
                const auto dm = row.difference.mean;
                vd += std::pow(weights[p] * dm.real() / out[q].semigroup_diff * row.difference.se_re, 2) +
                      std::pow(weights[p] * dm.imag() / out[q].semigroup_diff * row.difference.se_im, 2);
            }
        }
        out[q].l2_se = std::sqrt(v);
        out[q].semigroup_diff_se = std::sqrt(vd);
    }
    return out;
}

/// int k_0^m(y, t) g(x + y) dy by nested adaptive quadrature (d <= 3), y = t tan(theta) radially.
template <int D>
double free_oracle(const Point<D>& x, double t, double m, const std::function<double(const Point<D>&)>& g,
                   double rel_tol = 1e-10) {
    static_assert(D >= 1 && D <= 3, "free_oracle supports d <= 3");
    if (!(t > 0.0)) throw UsageError("free_oracle requires t > 0");
    quad::Tolerance tol;
    tol.rel = rel_tol;
    tol.abs = 1e-15;
    tol.max_intervals = 4000;
    const double half_pi = 0.5 * std::numbers::pi;
    if constexpr (D == 1) {
        auto f = [&](double th) {
            const double y = t * std::tan(th);
            const double c = std::cos(th);
            return kernel(std::abs(y), t, m, 1) * g(Point<1>{x[0] + y}) * t / (c * c);
        };
        return quad::integrate(f, -half_pi, 0.0, tol).value + quad::integrate(f, 0.0, half_pi, tol).value;
    } else if constexpr (D == 2) {
        auto radial = [&](double th) {
            const double r = t * std::tan(th);
            const double c = std::cos(th);
            auto ang = [&](double phi) { return g(Point<2>{x[0] + r * std::cos(phi), x[1] + r * std::sin(phi)}); };
            const double inner = quad::integrate(ang, 0.0, 2.0 * std::numbers::pi, tol).value;
            return r * kernel(r, t, m, 2) * inner * t / (c * c);
        };
        return quad::integrate(radial, 0.0, half_pi, tol).value;
    } else {
        auto radial = [&](double th) {
            const double r = t * std::tan(th);
            const double c = std::cos(th);
            auto polar = [&](double vt) {
                auto az = [&](double phi) {
                    const double s = std::sin(vt);
                    return g(Point<3>{x[0] + r * s * std::cos(phi), x[1] + r * s * std::sin(phi), x[2] + r * std::cos(vt)});
                };
                return std::sin(vt) * quad::integrate(az, 0.0, 2.0 * std::numbers::pi, tol).value;
            };
            const double inner = quad::integrate(polar, 0.0, std::numbers::pi, tol).value;
            return r * r * kernel(r, t, m, 3) * inner * t / (c * c);
        };
        return quad::integrate(radial, 0.0, half_pi, tol).value;
    }
}

}  // namespace relfk
