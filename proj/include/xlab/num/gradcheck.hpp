#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xlab/num/optim.hpp"

namespace xlab::num {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Minimum number of scalars checked; every tensor contributes at least two
  /// (or all of its elements when smaller).
  std::size_t samples = 200;
  std::uint64_t seed = 0;
};

struct GradCheckFailure {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_error = 0;
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty(); }
  std::string summary() const;
};

/// `loss(with_backward)` rebuilds the computation from the current parameter
/// values and returns the scalar loss; when `with_backward` is true it must
/// also run backward so gradients accumulate into each parameter's `grad`.
/// Compares against central differences with the error measure
/// |analytic - numeric| / max(1, |analytic|).
GradCheckReport grad_check(const std::function<double(bool with_backward)>& loss,
                           std::span<const ParamRef<double>> params,
                           const GradCheckOptions& options = {});

}  // namespace xlab::num
