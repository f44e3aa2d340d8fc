#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mdchain/numeric/graph.hpp"
#include "mdchain/rng.hpp"

namespace mdchain::num {

struct GradCheckEntry {
  std::string name;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<GradCheckEntry> per_parameter;
};

struct GradCheckOptions {
  double step = 1e-5;
  // When set, at most this many randomly chosen entries of each parameter
  // are perturbed.
  std::optional<std::size_t> entries_per_parameter;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients of a scalar loss against central finite
// differences. `build_loss` records the loss on the provided graph reading
// the current parameter values.
GradCheckResult grad_check(const std::function<ad::Var(ad::Graph&)>& build_loss,
                           const std::vector<ad::Parameter*>& params, const GradCheckOptions& options = {});

}  // namespace mdchain::num
