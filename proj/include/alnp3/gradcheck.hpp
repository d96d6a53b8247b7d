#pragma once

// Finite-difference verification of every training loss: full-coordinate
// checks on each loss's direct inputs plus sampled parameter coordinates
// through the whole model.

#include <cstdint>
#include <string>
#include <vector>

namespace alnp3::gradcheck {

inline constexpr double kTolerance = 1e-5;
inline constexpr double kStep = 1e-5;

// |analytic - numeric| / max(1, |analytic|).
double relative_error(double analytic, double numeric);

struct LossCheck {
  std::string loss;
  std::size_t configs = 0;
  std::size_t coordinates = 0;
  std::size_t violations = 0;
  double max_rel_error = 0.0;
};

struct Report {
  std::vector<LossCheck> losses;
  double seconds = 0.0;
  bool ok(std::size_t min_configs = 20) const;
};

// configs random configurations per loss, agent counts cycling 1, 2, 4.
Report run(std::uint64_t seed, std::size_t configs = 20);

std::string format(const Report& r);

}  // namespace alnp3::gradcheck
