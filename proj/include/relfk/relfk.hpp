/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "relfk/error.hpp"
#include "relfk/random.hpp"
#include "relfk/quadrature.hpp"
#include "relfk/specfun.hpp"
#include "relfk/geometry.hpp"
#include "relfk/levy.hpp"
#include "relfk/subordinator.hpp"
#include "relfk/coupling.hpp"
#include "relfk/fields.hpp"
#include "relfk/functionals.hpp"
#include "relfk/estimator.hpp"
