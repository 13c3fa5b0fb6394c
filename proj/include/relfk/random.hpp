/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace relfk {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (key, stream id); the block counter walks through
/// the stream. Two engines built from the same (key, stream) produce the same
/// sequence, so per-sample streams can be recreated on any worker.
class Philox {
public:
    using result_type = std::uint64_t;

    Philox(std::uint64_t key, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          stream_(stream) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (pos_ == 2) {
            refill();
        }
        return out_[pos_++];
    }

    std::uint64_t stream() const noexcept { return stream_; }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    void refill() noexcept {
        std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(counter_),
                                       static_cast<std::uint32_t>(counter_ >> 32),
                                       static_cast<std::uint32_t>(stream_),
                                       static_cast<std::uint32_t>(stream_ >> 32)};
        std::array<std::uint32_t, 2> k = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
            c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += kW0;
            k[1] += kW1;
        }
        out_[0] = (static_cast<std::uint64_t>(c[1]) << 32) | c[0];
        out_[1] = (static_cast<std::uint64_t>(c[3]) << 32) | c[2];
        ++counter_;
        pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> out_{};
    int pos_ = 2;
};

/// SplitMix64 finalizer; used to fold structured ids into one stream id.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Stream id for (purpose tag, sample index, sub-stream).
constexpr std::uint64_t stream_id(std::uint64_t tag, std::uint64_t index, std::uint64_t sub = 0) noexcept {
    return mix64(mix64(tag) ^ (index * 0x9E3779B97F4A7C15ull) ^ mix64(sub + 0x632BE59BD9B4E019ull));
}

/// Uniform on the open interval (0, 1), 53-bit resolution.
template <class Engine>
double uniform_open(Engine& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal by the Marsaglia polar method, one value per call.
template <class Engine>
double standard_normal(Engine& rng) {
    for (;;) {
        const double u = 2.0 * uniform_open(rng) - 1.0;
        const double v = 2.0 * uniform_open(rng) - 1.0;
        const double s = u * u + v * v;
        if (s < 1.0 && s > 0.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

/// Stateful wrapper that keeps the second polar-method normal.
template <class Engine>
class NormalSource {
public:
    explicit NormalSource(Engine& rng) : rng_(rng) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        for (;;) {
            const double u = 2.0 * uniform_open(rng_) - 1.0;
            const double v = 2.0 * uniform_open(rng_) - 1.0;
            const double s = u * u + v * v;
            if (s < 1.0 && s > 0.0) {
                const double f = std::sqrt(-2.0 * std::log(s) / s);
                spare_ = v * f;
                has_spare_ = true;
                return u * f;
            }
        }
    }

private:
    Engine& rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Poisson variate: inversion below mean 10, Hoermann's PTRS transformed rejection above.
template <class Engine>
std::int64_t poisson(Engine& rng, double mean) {
    if (!(mean > 0.0)) {
        return 0;
    }
    if (mean < 10.0) {
        const double u = uniform_open(rng);
        double p = std::exp(-mean);
        double cdf = p;
        std::int64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        const double u = uniform_open(rng) - 0.5;
        const double v = uniform_open(rng);
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) {
            return static_cast<std::int64_t>(k);
        }
        if (k < 0.0 || (us < 0.013 && v > us)) {
            continue;
        }
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + k * log_mean - std::lgamma(k + 1.0)) {
            return static_cast<std::int64_t>(k);
        }
    }
}

}  // namespace relfk
