#include "xlab/num/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xlab/common/random.hpp"

namespace xlab::num {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "checked " << checked << " scalars, max error " << max_error << ", " << failures.size()
     << " failures";
  for (std::size_t i = 0; i < failures.size() && i < 10; ++i) {
    const auto& f = failures[i];
    os << "\n  " << f.param << "[" << f.index << "]: analytic " << f.analytic << " numeric "
       << f.numeric;
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           std::span<const ParamRef<double>> params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) {
    p.tensor->ensure_grad();
    p.tensor->zero_grad();
  }
  loss(true);

  // (tensor, flat index) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor->size();
  Rng rng(options.seed);
  if (total <= options.samples) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t j = 0; j < params[t].tensor->size(); ++j) picks.emplace_back(t, j);
    }
  } else {
    for (std::size_t t = 0; t < params.size(); ++t) {
      const std::size_t n = params[t].tensor->size();
      for (std::size_t r = 0; r < std::min<std::size_t>(2, n); ++r) {
        picks.emplace_back(t, rng.index(n));
      }
    }
    while (picks.size() < options.samples) {
      std::uint64_t flat = rng.index(total);
      std::size_t t = 0;
      while (flat >= params[t].tensor->size()) flat -= params[t].tensor->size(), ++t;
      picks.emplace_back(t, static_cast<std::size_t>(flat));
    }
    std::sort(picks.begin(), picks.end());
    picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  }

  GradCheckReport report;
  for (auto [t, j] : picks) {
    auto& tensor = *params[t].tensor;
    const double analytic = tensor.grad[j];
    const double orig = tensor.data[j];
    tensor.data[j] = orig + options.eps;
    const double up = loss(false);
    tensor.data[j] = orig - options.eps;
    const double down = loss(false);
    tensor.data[j] = orig;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    ++report.checked;
    report.max_error = std::max(report.max_error, err);
    if (!(err < options.tol)) report.failures.push_back({params[t].name, j, analytic, numeric});
  }
  return report;
}

}  // namespace xlab::num
