#pragma once

// Seeded finite-difference battery over tensor ops, layers/modules/losses
// and the full grid -> hand-loss pipeline. The error of a coordinate is
// |analytic - numeric| / max(|analytic| + |numeric|, 1e-6 * max(1, |f|)).

#include <cstdint>
#include <string>
#include <vector>

namespace deformer::gradcheck {

inline constexpr double kTolerance = 1e-4;

enum class Scope { Ops, Layers, EndToEnd };
std::string to_string(Scope scope);
// ops | layers | end2end; throws ConfigError otherwise.
Scope parse_scope(const std::string& name);

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

std::vector<std::string> check_names(Scope scope);
std::vector<CheckResult> run(Scope scope, std::uint64_t seed = 1);
CheckResult run_one(Scope scope, const std::string& name, std::uint64_t seed = 1);

}  // namespace deformer::gradcheck
