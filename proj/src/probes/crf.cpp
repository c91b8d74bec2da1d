#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "xlab/probes/probes.hpp"

namespace xlab::probes {

namespace {

template <class T>
T log_sum_exp(const T* v, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

template <class T>
std::size_t check_shapes(const CrfTransitions<T>& crf, std::size_t emission_size) {
  const std::size_t K = crf.tags;
  if (K == 0 || crf.transitions.size() != K * K || crf.start.size() != K || crf.end.size() != K) {
    throw std::invalid_argument("crf: inconsistent parameter sizes for " + std::to_string(K) + " tags");
  }
  if (emission_size == 0 || emission_size % K != 0) {
    throw std::invalid_argument("crf: emissions must be a non-empty [L, " + std::to_string(K) + "] matrix");
  }
  return emission_size / K;
}

// alpha[t*K + j]: log-sum of all prefixes ending in tag j at t.
template <class T>
std::vector<T> forward_scores(const CrfTransitions<T>& crf, std::span<const T> e, std::size_t L) {
  const std::size_t K = crf.tags;
  std::vector<T> alpha(L * K), tmp(K);
  for (std::size_t j = 0; j < K; ++j) alpha[j] = crf.start[j] + e[j];
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < K; ++i) tmp[i] = alpha[(t - 1) * K + i] + crf.transitions[i * K + j];
      alpha[t * K + j] = log_sum_exp(tmp.data(), K) + e[t * K + j];
    }
  }
  return alpha;
}

template <class T>
std::vector<T> backward_scores(const CrfTransitions<T>& crf, std::span<const T> e, std::size_t L) {
  const std::size_t K = crf.tags;
  std::vector<T> beta(L * K), tmp(K);
  for (std::size_t i = 0; i < K; ++i) beta[(L - 1) * K + i] = crf.end[i];
  for (std::size_t t = L - 1; t-- > 0;) {
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        tmp[j] = crf.transitions[i * K + j] + e[(t + 1) * K + j] + beta[(t + 1) * K + j];
      }
      beta[t * K + i] = log_sum_exp(tmp.data(), K);
    }
  }
  return beta;
}

template <class T>
T final_log_z(const CrfTransitions<T>& crf, const std::vector<T>& alpha, std::size_t L) {
  const std::size_t K = crf.tags;
  std::vector<T> tmp(K);
  for (std::size_t j = 0; j < K; ++j) tmp[j] = alpha[(L - 1) * K + j] + crf.end[j];
  return log_sum_exp(tmp.data(), K);
}

}  // namespace

template <class T>
T crf_log_partition(const CrfTransitions<T>& crf, std::span<const T> emissions) {
  const std::size_t L = check_shapes(crf, emissions.size());
  return final_log_z(crf, forward_scores(crf, emissions, L), L);
}

template <class T>
T crf_path_score(const CrfTransitions<T>& crf, std::span<const T> e, std::span<const int> tags) {
  const std::size_t L = check_shapes(crf, e.size()), K = crf.tags;
  if (tags.size() != L) throw std::invalid_argument("crf: tag sequence length differs from emissions");
  for (int t : tags) {
    if (t < 0 || static_cast<std::size_t>(t) >= K) throw std::out_of_range("crf: tag " + std::to_string(t));
  }
  auto at = [](int v) { return static_cast<std::size_t>(v); };
  T s = crf.start[at(tags[0])] + crf.end[at(tags[L - 1])];
  for (std::size_t t = 0; t < L; ++t) {
    s += e[t * K + at(tags[t])];
    if (t > 0) s += crf.transitions[at(tags[t - 1]) * K + at(tags[t])];
  }
  return s;
}

template <class T>
CrfPath<T> crf_viterbi(const CrfTransitions<T>& crf, std::span<const T> e) {
  const std::size_t L = check_shapes(crf, e.size()), K = crf.tags;
  std::vector<T> delta(L * K);
  std::vector<int> back(L * K, 0);
  for (std::size_t j = 0; j < K; ++j) delta[j] = crf.start[j] + e[j];
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      T best = -std::numeric_limits<T>::infinity();
      int arg = 0;
      for (std::size_t i = 0; i < K; ++i) {
        const T s = delta[(t - 1) * K + i] + crf.transitions[i * K + j];
        if (s > best) best = s, arg = static_cast<int>(i);
      }
      delta[t * K + j] = best + e[t * K + j];
      back[t * K + j] = arg;
    }
  }
  CrfPath<T> path;
  path.score = -std::numeric_limits<T>::infinity();
  int last = 0;
  for (std::size_t j = 0; j < K; ++j) {
    const T s = delta[(L - 1) * K + j] + crf.end[j];
    if (s > path.score) path.score = s, last = static_cast<int>(j);
  }
  path.tags.assign(L, 0);
  path.tags[L - 1] = last;
  for (std::size_t t = L - 1; t > 0; --t) path.tags[t - 1] = back[t * K + static_cast<std::size_t>(path.tags[t])];
  return path;
}

template <class T>
num::Var<T> crf_nll(num::Var<T> emissions, num::Var<T> transitions, num::Var<T> start, num::Var<T> end,
                    std::span<const int> tags) {
  auto& g = emissions.graph();
  CrfTransitions<T> crf;
  crf.tags = start.value().size();
  crf.transitions = transitions.value().data;
  crf.start = start.value().data;
  crf.end = end.value().data;
  const auto& ev = emissions.value().data;
  const std::span<const T> e(ev);
  const std::size_t L = check_shapes(crf, ev.size()), K = crf.tags;
  if (emissions.value().cols() != K) throw num::ShapeError("crf_nll: emissions must have one column per tag");

  const auto alpha = forward_scores(crf, e, L);
  const T log_z = final_log_z(crf, alpha, L);
  const T gold = crf_path_score(crf, e, tags);
  const bool rg = g.requires_grad(emissions) || g.requires_grad(transitions) || g.requires_grad(start) ||
                  g.requires_grad(end);

  std::vector<int> saved(tags.begin(), tags.end());
  return g.op(num::Tensor<T>({1}, log_z - gold), rg,
              [=, crf = std::move(crf), saved = std::move(saved)](num::Graph<T>& gr, num::Var<T> self) {
                const T d = gr.grad(self)[0];
                const auto& evals = emissions.value().data;
                const std::span<const T> es(evals);
                const auto beta = backward_scores(crf, es, L);
                // Unary and pairwise marginals minus the gold indicators.
                if (gr.requires_grad(emissions)) {
                  auto& de = gr.grad(emissions);
                  for (std::size_t t = 0; t < L; ++t) {
                    for (std::size_t j = 0; j < K; ++j) de[t * K + j] += d * std::exp(alpha[t * K + j] + beta[t * K + j] - log_z);
                    de[t * K + static_cast<std::size_t>(saved[t])] -= d;
                  }
                }
                if (gr.requires_grad(start)) {
                  auto& ds = gr.grad(start);
                  for (std::size_t j = 0; j < K; ++j) ds[j] += d * std::exp(alpha[j] + beta[j] - log_z);
                  ds[static_cast<std::size_t>(saved[0])] -= d;
                }
                if (gr.requires_grad(end)) {
                  auto& dn = gr.grad(end);
                  for (std::size_t j = 0; j < K; ++j) {
                    dn[j] += d * std::exp(alpha[(L - 1) * K + j] + crf.end[j] - log_z);
                  }
                  dn[static_cast<std::size_t>(saved[L - 1])] -= d;
                }
                if (gr.requires_grad(transitions)) {
                  auto& dt = gr.grad(transitions);
                  for (std::size_t t = 0; t + 1 < L; ++t) {
                    for (std::size_t i = 0; i < K; ++i) {
                      for (std::size_t j = 0; j < K; ++j) {
                        const T lp = alpha[t * K + i] + crf.transitions[i * K + j] + es[(t + 1) * K + j] +
                                     beta[(t + 1) * K + j] - log_z;
                        dt[i * K + j] += d * std::exp(lp);
                      }
                    }
                    dt[static_cast<std::size_t>(saved[t]) * K + static_cast<std::size_t>(saved[t + 1])] -= d;
                  }
                }
              });
}

#define XLAB_INSTANTIATE_CRF(T)                                                                          \
  template T crf_log_partition<T>(const CrfTransitions<T>&, std::span<const T>);                         \
  template CrfPath<T> crf_viterbi<T>(const CrfTransitions<T>&, std::span<const T>);                      \
  template T crf_path_score<T>(const CrfTransitions<T>&, std::span<const T>, std::span<const int>);      \
  template num::Var<T> crf_nll<T>(num::Var<T>, num::Var<T>, num::Var<T>, num::Var<T>, std::span<const int>);

XLAB_INSTANTIATE_CRF(float)
XLAB_INSTANTIATE_CRF(double)

}  // namespace xlab::probes
