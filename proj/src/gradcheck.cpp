#include "seqlab/gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace seqlab {

std::string GradCheckReport::describe() const {
  std::ostringstream os;
  os << "max rel error " << max_rel_error << " over " << entries_checked << " entries";
  if (worst_flat_index >= 0) {
    os << " (worst: " << worst_tensor << "[" << worst_flat_index << "], analytic "
       << worst_analytic << " vs numeric " << worst_numeric << ")";
  }
  return os.str();
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<std::pair<std::string, Tensor>>& params,
                                double epsilon, std::int64_t max_entries_per_tensor) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("check_gradients: epsilon must be positive");
  }
  for (const auto& [name, p] : params) {
    if (!p.defined() || !p.requires_grad()) {
      throw std::invalid_argument("check_gradients: parameter '" + name +
                                  "' does not track gradients");
    }
  }

  // Analytic pass.
  for (const auto& [name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  if (loss.size() != 1) {
    throw std::invalid_argument("check_gradients: loss_fn must return a scalar");
  }
  loss.backward();

  GradCheckReport report;
  for (const auto& [name, p] : params) {
    Tensor param = p;
    const std::vector<double> analytic = param.grad();  // copy: numeric passes reuse the graph
    const std::int64_t n = param.size();
    std::int64_t step = 1;
    if (max_entries_per_tensor > 0 && n > max_entries_per_tensor) {
      step = n / max_entries_per_tensor;
    }
    for (std::int64_t i = 0; i < n; i += step) {
      std::vector<double>& values = param.mutable_values();
      const double original = values[static_cast<std::size_t>(i)];
      double plus, minus;
      {
        NoGradGuard no_grad;
        values[static_cast<std::size_t>(i)] = original + epsilon;
        plus = loss_fn().item();
        values[static_cast<std::size_t>(i)] = original - epsilon;
        minus = loss_fn().item();
        values[static_cast<std::size_t>(i)] = original;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[static_cast<std::size_t>(i)];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = name;
        report.worst_flat_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace seqlab
