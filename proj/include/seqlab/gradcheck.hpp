#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "seqlab/tensor.hpp"

namespace seqlab {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::int64_t worst_flat_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t entries_checked = 0;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
  std::string describe() const;
};

// Central-difference check of reverse-mode gradients.
//
// `loss_fn` must rebuild the scalar loss from the current parameter values on
// every call and must be deterministic (fix any dropout masks beforehand).
// Each parameter entry is perturbed by +/- epsilon and the numeric slope
// (f(x+e) - f(x-e)) / 2e is compared against the analytic gradient with
// relative error |a - n| / max(1e-8, |a| + |n|).
//
// `max_entries_per_tensor` < 0 checks every entry; otherwise entries are
// sampled at a deterministic even stride.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<std::pair<std::string, Tensor>>& params,
                                double epsilon = 1e-5,
                                std::int64_t max_entries_per_tensor = -1);

}  // namespace seqlab
