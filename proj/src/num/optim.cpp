#include "xlab/num/optim.hpp"

#include <cmath>

#include "xlab/num/kernels.hpp"

namespace xlab::num {

template <class T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state) {
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->shape);
      state.v.emplace_back(p.tensor->shape);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state holds " +
                                std::to_string(state.m.size()) + " moments for " +
                                std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = *params[i].tensor;
    if (state.m[i].shape != t.shape) {
      throw std::invalid_argument("adam_step: moment shape " + shape_str(state.m[i].shape) +
                                  " does not match parameter " + params[i].name + " " +
                                  shape_str(t.shape));
    }
    for (T g : t.grad) {
      if (!std::isfinite(g)) {
        throw NonFiniteError("adam_step: non-finite gradient in parameter " + params[i].name,
                             params[i].name);
      }
    }
  }
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.lr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = *params[i].tensor;
    if (t.grad.empty()) continue;
    T* m = state.m[i].data.data();
    T* v = state.v[i].data.data();
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double g = t.grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps);
      t.data[j] = static_cast<T>(t.data[j] - update);
    }
  }
}

template <class T>
double clip_grad_norm(std::span<const ParamRef<T>> params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    const auto& g = p.tensor->grad;
    if (!g.empty()) sq += static_cast<double>(kernels<T>().sum_sq(g.data(), g.size()));
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0 && std::isfinite(norm)) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& p : params) {
      auto& g = p.tensor->grad;
      if (!g.empty()) kernels<T>().scale(factor, g.data(), g.size());
    }
  }
  return norm;
}

template void adam_step<float>(std::span<const ParamRef<float>>, AdamState<float>&);
template void adam_step<double>(std::span<const ParamRef<double>>, AdamState<double>&);
template double clip_grad_norm<float>(std::span<const ParamRef<float>>, double);
template double clip_grad_norm<double>(std::span<const ParamRef<double>>, double);

}  // namespace xlab::num
