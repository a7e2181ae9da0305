#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tailflow/ad/graph.hpp"

namespace tailflow::ad {

struct GradCheckEntry {
  std::string name;
  double max_rel_dev = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  /// Coordinates where f was non-finite at a perturbed point; skipped.
  std::vector<std::size_t> non_finite;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_dev = 0.0;
  bool pass = false;
};

/// Compares backward gradients of the scalar `f()` against central
/// differences with step `h`. The deviation of a coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, scale_floor); the floor
/// keeps gradients that are zero up to rounding from dominating the report.
GradCheckReport grad_check(const std::function<Var()>& f, std::span<const Parameter> params, double h,
                           double rtol, double scale_floor = 1e-4);

}  // namespace tailflow::ad
