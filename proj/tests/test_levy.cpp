/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <gtest/gtest.h>

#include "relfk/levy.hpp"

using namespace relfk;
constexpr double kPi = std::numbers::pi;

namespace {

// n^m from the Bessel form with Boost's K.
double density_oracle(double r, double m, int d) {
    const double nu = 0.5 * (d + 1);
    if (m == 0.0) return std::tgamma(nu) / std::pow(kPi, nu) / std::pow(r, d + 1);
    return 2.0 * std::pow(m / (2.0 * kPi), nu) * std::pow(r, -nu) * boost::math::cyl_bessel_k(nu, m * r);
}

double radial_integral(const std::function<double(double)>& f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-13);
}

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
double ks_distance(std::vector<double> x, const std::function<double(double)>& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
    }
    return d;
}

}  // namespace

TEST(Philox, Reproducible) {
    Philox a(42, 7), b(42, 7), c(42, 8), e(43, 7);
    bool differ_stream = false, differ_key = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        differ_stream |= x != c();
        differ_key |= x != e();
    }
    EXPECT_TRUE(differ_stream);
    EXPECT_TRUE(differ_key);
    EXPECT_NE(stream_id(1, 2, 3), stream_id(1, 3, 2));
}

TEST(Random, UniformAndNormalMoments) {
    Philox rng(1, 0);
    const int n = 200000;
    double su = 0, sz = 0, sz2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = uniform_open(rng);
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = standard_normal(rng);
        sz += z;
        sz2 += z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
    EXPECT_NEAR(sz / n, 0.0, 4 / std::sqrt(n));
    EXPECT_NEAR(sz2 / n, 1.0, 4 * std::sqrt(2.0 / n));
}

TEST(Random, PoissonMatchesLaw) {
    for (double mean : {0.3, 4.0, 9.99, 10.0, 37.5, 640.0}) {
        Philox rng(3, static_cast<std::uint64_t>(mean * 100));
        const int n = 40000;
        boost::math::poisson_distribution<> law(mean);
        // chi-square over bins of the exact law
        const auto lo = static_cast<std::int64_t>(boost::math::quantile(law, 0.001));
        const auto hi = static_cast<std::int64_t>(boost::math::quantile(law, 0.999));
        std::vector<double> counts(hi - lo + 3, 0.0);
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const auto k = poisson(rng, mean);
            ASSERT_GE(k, 0);
            s += k;
            s2 += double(k) * k;
            counts[std::clamp<std::int64_t>(k - lo + 1, 0, hi - lo + 2)] += 1.0;
        }
        EXPECT_NEAR(s / n, mean, 5 * std::sqrt(mean / n)) << mean;
        EXPECT_NEAR(s2 / n - (s / n) * (s / n), mean, 6 * mean * std::sqrt(2.0 / n) + 0.01) << mean;
        double chi2 = 0.0;
        int bins = 0;
        for (std::int64_t k = lo; k <= hi; ++k) {
            const double p = boost::math::pdf(law, static_cast<double>(k));
            if (p * n < 5) continue;
            chi2 += std::pow(counts[k - lo + 1] - n * p, 2) / (n * p);
            ++bins;
        }
        // generous bound: mean + 5 sd of chi-square(bins)
        EXPECT_LT(chi2, bins + 5 * std::sqrt(2.0 * bins)) << mean;
    }
    Philox rng(0, 0);
    EXPECT_EQ(poisson(rng, 0.0), 0);
}

TEST(LevyDensity, Examples) {
    EXPECT_NEAR(levy_density(1.0, 0.0, 1), 1.0 / kPi, 1e-15);
    EXPECT_NEAR(levy_density(1.0, 1.0, 1), 0.601907230197 / kPi, 1e-12);
    EXPECT_NEAR(levy_density(1.0, 1.0, 1), 0.191595, 1e-5);
    EXPECT_THROW(levy_density(0.0, 1.0, 1), DomainError);
    EXPECT_THROW(levy_density(1.0, -1.0, 1), DomainError);
}

TEST(LevyDensity, MatchesBoostAndIncreasesToMassless) {
    for (int d : {1, 2, 3}) {
        for (double r : {1e-4, 0.01, 0.3, 1.0, 4.0, 30.0}) {
            double prev = 0.0;
            for (double m : {2.0, 1.0, 0.5, 0.25, 0.0}) {
                const double v = levy_density(r, m, d);
                EXPECT_NEAR(v, density_oracle(r, m, d), 1e-12 * density_oracle(r, m, d));
                EXPECT_GT(v, prev);
                prev = v;
            }
        }
    }
    Point<2> y{{0.3, -0.4}};
    EXPECT_DOUBLE_EQ(levy_density<2>(y, 1.0), levy_density(0.5, 1.0, 2));
}

TEST(Kernel, Examples) {
    EXPECT_NEAR(kernel(0.0, 1.0, 0.0, 1), 1.0 / kPi, 1e-15);
    EXPECT_NEAR(kernel(0.0, 1.0, 0.0, 3), 1.0 / (kPi * kPi), 1e-15);
    EXPECT_THROW(kernel(1.0, 0.0, 1.0, 1), DomainError);
}

TEST(Kernel, IntegratesToOne) {
    for (int d : {1, 2, 3}) {
        for (double m : {0.0, 0.5, 1.0, 3.0}) {
            for (double t : {0.3, 1.0, 2.0}) {
                // radial integral |S^{d-1}| int r^{d-1} k dr with r = tan(theta)
                auto f = [&](double th) {
                    const double r = std::tan(th);
                    const double c = std::cos(th);
                    return sphere_area(d) * std::pow(r, d - 1) * kernel(r, t, m, d) / (c * c);
                };
                EXPECT_NEAR(radial_integral(f, 0.0, kPi / 2), 1.0, 1e-6) << d << " " << m << " " << t;
            }
        }
    }
}

TEST(Kernel, ScaledKernelIncreasesAsMassDecreases) {
    // e^{-mt} k_0^m is the kernel of e^{-t sqrt(-Delta + m^2)}; k_0^m itself has unit mass for every m.
    for (int d : {1, 2, 3}) {
        for (double r : {0.0, 0.5, 2.0, 10.0}) {
            double prev = 0.0;
            for (double m : {2.0, 1.0, 0.5, 0.25, 0.0}) {
                const double k = std::exp(-m) * kernel(r, 1.0, m, d);
                EXPECT_GT(k, prev);
                prev = k;
            }
        }
    }
    // far out k_0^m itself is ordered too
    double prev = 0.0;
    for (double m : {2.0, 1.0, 0.5, 0.25, 0.0}) {
        EXPECT_GT(kernel(5.0, 1.0, m, 1), prev);
        prev = kernel(5.0, 1.0, m, 1);
    }
}

TEST(TailMass, Examples) {
    EXPECT_NEAR(tail_mass(1.0, 0.0, 1), 2.0 / kPi, 1e-15);
    EXPECT_NEAR(tail_mass(0.001, 0.0, 1), 2000.0 / kPi, 1e-10);
    EXPECT_NEAR(massless_tail_constant(1), 2.0 / kPi, 1e-15);
    EXPECT_THROW(tail_mass(0.0, 0.0, 1), DomainError);
}

TEST(TailMass, MatchesQuadratureAndBelowMassless) {
    boost::math::quadrature::exp_sinh<double> es;
    for (int d : {1, 2, 3}) {
        for (double m : {0.0, 0.5, 1.0, 2.0}) {
            for (double rho : {1e-3, 0.1, 1.0, 10.0}) {
                auto f = [&](double r) { return sphere_area(d) * std::pow(r, d - 1) * density_oracle(r, m, d); };
                const double want = es.integrate(f, rho, INFINITY);
                EXPECT_NEAR(tail_mass(rho, m, d), want, 1e-9 * want) << d << " " << m << " " << rho;
                if (m > 0) {
                    EXPECT_LT(tail_mass(rho, m, d), tail_mass(rho, 0.0, d));
                }
            }
        }
    }
}

TEST(LevyMeasure, FractionalMomentFinite) {
    for (double m : {0.0, 0.5, 1.0}) {
        for (int d : {1, 2, 3}) {
            // int_{|y|<1} |y|^{1.5} n^m(dy), with n^0 giving c_d / 0.5 exactly
            // r = u^2 removes the r^{-1/2} singularity
            auto f = [&](double u) {
                const double r = u * u;
                return 2.0 * u * sphere_area(d) * std::pow(r, d + 0.5) * levy_density(r, m, d);
            };
            const double v = radial_integral(f, 0.0, 1.0);
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_LE(v, massless_tail_constant(d) / 0.5 * (1 + 1e-9));
            if (m == 0.0) {
                EXPECT_NEAR(v, massless_tail_constant(d) / 0.5, 1e-9);
            }
        }
    }
}

TEST(SamplePath, StructureAndValidation) {
    Philox rng(5, 0);
    const auto p = sample_path<2>(LevyConfig{2, 0.7, 0.05}, 2.0, rng);
    ASSERT_FALSE(p.jumps.empty());
    for (std::size_t i = 0; i < p.jumps.size(); ++i) {
        EXPECT_GE(norm(p.jumps[i].delta), 0.05);
        EXPECT_GT(p.jumps[i].time, 0.0);
        EXPECT_LE(p.jumps[i].time, 2.0);
        if (i) {
            EXPECT_LT(p.jumps[i - 1].time, p.jumps[i].time);
        }
    }
    EXPECT_EQ(p.position(0.0)[0], 0.0);
    EXPECT_EQ(p.horizon, 2.0);
    EXPECT_EQ(p.truncation, 0.05);
    EXPECT_EQ(p.mass, 0.7);
    EXPECT_THROW(sample_path<1>(LevyConfig{2, 0.0, 0.1}, 1.0, rng), UsageError);
    EXPECT_THROW(sample_path<1>(LevyConfig{1, 0.0, 1.5}, 1.0, rng), UsageError);
    EXPECT_THROW(sample_path<1>(LevyConfig{1, -1.0, 0.1}, 1.0, rng), UsageError);
    EXPECT_THROW(sample_path<1>(LevyConfig{1, 0.0, 0.1}, 0.0, rng), UsageError);
}

TEST(SamplePath, JumpCountMatchesTailMass) {
    for (double m : {0.0, 1.0}) {
        const double eps = 0.01;
        const double tmax = 0.5;
        const int n = 4000;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            Philox rng(11, stream_id(1, i));
            total += static_cast<double>(sample_path<3>(LevyConfig{3, m, eps}, tmax, rng).jumps.size());
        }
        const double rate = tail_mass(eps, m, 3);
        EXPECT_NEAR(total / n / tmax, rate, 3.0 * std::sqrt(rate / (n * tmax)) + 1e-9) << m;
    }
}

TEST(SamplePath, RadialLawOfJumps) {
    // jump sizes: P(R > r) = tail_mass(r) / tail_mass(eps)
    const double eps = 0.02, m = 1.5;
    std::vector<double> r;
    for (int i = 0; r.size() < 20000; ++i) {
        Philox rng(13, stream_id(2, i));
        for (const auto& j : sample_path<1>(LevyConfig{1, m, eps}, 1.0, rng).jumps) r.push_back(norm(j.delta));
    }
    const double tail = tail_mass(eps, m, 1);
    EXPECT_LT(ks_distance(r, [&](double x) { return 1.0 - tail_mass(x, m, 1) / tail; }), 0.015);
}

TEST(SamplePath, CharacteristicFunction) {
    const int n = 20000;
    const double eps = 1e-3, t = 1.0;
    for (double m : {0.0, 1.0}) {
        std::vector<std::complex<double>> acc(3);
        const double xi[3] = {0.5, 1.0, 2.0};
        for (int i = 0; i < n; ++i) {
            Philox rng(17, stream_id(3, i));
            const auto x = sample_path<1>(LevyConfig{1, m, eps}, t, rng).end_position()[0];
            for (int k = 0; k < 3; ++k) acc[k] += std::exp(std::complex<double>(0.0, xi[k] * x));
        }
        for (int k = 0; k < 3; ++k) {
            const double want = std::exp(-t * (std::sqrt(xi[k] * xi[k] + m * m) - m));
            // bias(eps) <= t xi^2 / 2 int_{|y|<eps} |y|^2 n^0 = t xi^2 eps / pi
            const double bias = t * xi[k] * xi[k] * eps / kPi;
            EXPECT_NEAR(std::abs(acc[k] / double(n) - want), 0.0, 3.0 / std::sqrt(n) + bias) << m << " " << xi[k];
        }
    }
}

TEST(SamplePath, MarginalMatchesKernel) {
    // |X(1)| against the radial CDF of k_0^m, N = 1e4, eps = 1e-4
    for (double m : {0.0, 1.0}) {
        std::vector<double> r;
        for (int i = 0; i < 10000; ++i) {
            Philox rng(19, stream_id(4, i));
            r.push_back(std::abs(sample_path<1>(LevyConfig{1, m, 1e-4}, 1.0, rng).end_position()[0]));
        }
        std::sort(r.begin(), r.end());
        // CDF accumulated along the sorted sample
        double cdf = 0.0, prev = 0.0, ks = 0.0;
        const double n = static_cast<double>(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            cdf += boost::math::quadrature::gauss<double, 20>::integrate(
                [&](double y) { return 2.0 * kernel(y, 1.0, m, 1); }, prev, r[i]);
            prev = r[i];
            ks = std::max({ks, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
        }
        EXPECT_LT(ks, 0.02) << m;
    }
}

TEST(SamplePath, DeterministicPerStream) {
    Philox a(23, 0), b(23, 0);
    const auto p = sample_path<1>(LevyConfig{1, 0.0, 0.1}, 1.0, a);
    const auto q = sample_path<1>(LevyConfig{1, 0.0, 0.1}, 1.0, b);
    ASSERT_EQ(p.jumps.size(), q.jumps.size());
    for (std::size_t i = 0; i < p.jumps.size(); ++i) EXPECT_EQ(p.jumps[i].delta[0], q.jumps[i].delta[0]);
}
