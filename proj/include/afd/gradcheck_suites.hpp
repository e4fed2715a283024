// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference suites over every differentiable op, every loss, and
// the full distillation objective through both detectors.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afd/gradcheck.hpp"

namespace afd {

inline constexpr double kOpTolerance = 1e-6;
inline constexpr double kLossTolerance = 1e-4;
inline constexpr double kPipelineTolerance = 1e-4;
inline constexpr double kFiniteDiffStep = 1e-5;

std::vector<GradCheckResult> gradcheck_ops(std::uint64_t seed);
std::vector<GradCheckResult> gradcheck_losses(std::uint64_t seed);
/// Two-image micro-batch through teacher, student, masks (kept on the tape)
/// and every term of the objective.
std::vector<GradCheckResult> gradcheck_pipeline(std::uint64_t seed);

/// "ops", "losses" or "pipeline"; throws ConfigError otherwise.
std::vector<GradCheckResult> gradcheck_scope(const std::string& scope, std::uint64_t seed);

}  // namespace afd
