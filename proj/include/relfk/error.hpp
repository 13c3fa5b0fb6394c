/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <stdexcept>
#include <string>

namespace relfk {

/// Argument outside the mathematical domain of a function (x <= 0 for K_nu, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller violated a documented precondition (mass mismatch, grid coverage, ...).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Adaptive quadrature or root finder failed to reach its tolerance.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double achieved)
        : std::runtime_error(what + " (achieved tolerance " + std::to_string(achieved) + ")"),
          achieved_(achieved) {}

    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

/// A sampler exceeded its iteration cap.
class SamplerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Monte Carlo run failed its own health checks (too many rejected samples).
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace relfk
