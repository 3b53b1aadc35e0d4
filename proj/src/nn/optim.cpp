#include "ectg/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace ectg::nn {
namespace {

constexpr double kNoiseFloor = 1e-7;

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NonFiniteError("adam_step: non-finite gradient");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state/parameter size mismatch");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(const ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, t] : params.entries()) {
    params_.push_back(t);
    states_.emplace_back();
  }
}

void Adam::step() {
  // Validate everything first so a bad gradient cannot leave a half-applied update.
  for (const auto& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NonFiniteError("Adam: non-finite gradient");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].grad().empty()) continue;
    adam_step(params_[i].mutable_values(), params_[i].grad(), states_[i], cfg_);
  }
  ++steps_;
}

double grad_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                  std::size_t probes, Rng& rng, double eps) {
  for (auto p : params) p.zero_grad();
  const Tensor base = loss();
  if (!std::isfinite(base.item())) throw NonFiniteError("grad_check: loss is not finite");
  base.backward();

  std::vector<std::vector<double>> analytic;
  std::size_t total = 0;
  for (const auto& p : params) {
    std::vector<double> g(p.size(), 0.0);
    if (!p.grad().empty()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
    total += p.size();
  }
  if (total == 0) return 0.0;

  auto eval = [&]() {
    NoGradGuard guard;
    const double v = loss().item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: loss is not finite");
    return v;
  };

  double worst = 0.0;
  for (std::size_t probe = 0; probe < probes; ++probe) {
    std::size_t flat = rng.below(total);
    std::size_t which = 0;
    while (flat >= params[which].size()) {
      flat -= params[which].size();
      ++which;
    }
    Tensor p = params[which];
    double& x = p.mutable_values()[flat];
    const double saved = x;
    x = saved + eps;
    const double up = eval();
    x = saved - eps;
    const double down = eval();
    x = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double ad = analytic[which][flat];
    // Both sides below the finite-difference noise floor: nothing to compare.
    if (std::abs(ad) + std::abs(fd) < kNoiseFloor) continue;
    const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  for (auto p : params) p.zero_grad();
  return worst;
}

double grad_check(const std::function<Tensor()>& loss, const ParameterSet& params,
                  std::size_t probes, Rng& rng, double eps) {
  std::vector<Tensor> ts;
  for (const auto& e : params.entries()) ts.push_back(e.second);
  return grad_check(loss, ts, probes, rng, eps);
}

}  // namespace ectg::nn
