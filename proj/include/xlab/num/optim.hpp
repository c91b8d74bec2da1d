#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlab/num/tensor.hpp"

namespace xlab::num {

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::string param)
      : std::runtime_error(what), param_(std::move(param)) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

template <class T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update with bias correction, reading gradients from each
/// tensor's `grad`. Parameters without a gradient buffer are skipped but still
/// count toward the step. Moments are allocated lazily on the first call.
/// Throws NonFiniteError, before touching any parameter, if a gradient holds a
/// NaN or infinity.
template <class T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::span<const ParamRef<T>> params, double max_norm);

template <class T>
void zero_grads(std::span<const ParamRef<T>> params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace xlab::num
