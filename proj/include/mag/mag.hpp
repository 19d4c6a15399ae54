#pragma once

#include "mag/controller.hpp"
#include "mag/dual.hpp"
#include "mag/estimator.hpp"
#include "mag/io.hpp"
#include "mag/models.hpp"
#include "mag/partition.hpp"
#include "mag/polynomial.hpp"
#include "mag/problem.hpp"
#include "mag/run.hpp"
#include "mag/solver.hpp"
#include "mag/tableau.hpp"
#include "mag/trajectory.hpp"

namespace mag {

inline constexpr const char* version = "1.0.0";

}  // namespace mag
