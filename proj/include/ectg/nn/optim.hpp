#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ectg/nn/layers.hpp"

namespace ectg::nn {

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place.
/// Throws NonFiniteError (leaving everything untouched) if any gradient is
/// NaN or infinite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

/// Adam over every tensor of a ParameterSet. Tensors that received no
/// gradient in a step are skipped, including their moment estimates.
class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig cfg);
  void step();
  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
};

/// Largest relative discrepancy between reverse-mode and central-difference
/// gradients over `probes` randomly chosen coordinates:
///   |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
/// Probes where |g_ad| + |g_fd| < 1e-7 (structurally zero gradients such as
/// a key bias under softmax shift invariance) count as exact agreement.
/// `loss` must be deterministic and return a scalar tensor.
double grad_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                  std::size_t probes, Rng& rng, double eps = 1e-5);

double grad_check(const std::function<Tensor()>& loss, const ParameterSet& params,
                  std::size_t probes, Rng& rng, double eps = 1e-5);

}  // namespace ectg::nn
