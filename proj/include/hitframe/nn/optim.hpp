#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/nn/params.hpp"

namespace hitframe::nn {

struct AdamSlot {
  Tensor mw, vw, mb, vb;
};

struct AdamState {
  std::map<std::string, AdamSlot> slots;
  std::int64_t t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update with L2 regularization folded into the gradient
// (g <- g + weight_decay * p) before the moment updates.
inline void adam_step(ParameterSet& params, const ParamGrads& grads, AdamState& state, double lr,
                      double weight_decay, const AdamConfig& cfg = {}) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
    require_same_shape(p, g, "adam_step gradient");
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g.values[i] + weight_decay * p.values[i];
      m.values[i] = cfg.beta1 * m.values[i] + (1.0 - cfg.beta1) * gi;
      v.values[i] = cfg.beta2 * v.values[i] + (1.0 - cfg.beta2) * gi * gi;
      double mhat = m.values[i] / bc1;
      double vhat = v.values[i] / bc2;
      p.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  };
  for (auto& [name, p] : params.items) {
    auto git = grads.find(name);
    require(git != grads.end(), Errc::bad_argument, "adam_step: missing gradient for " + name);
    auto sit = state.slots.find(name);
    if (sit == state.slots.end())
      sit = state.slots
                .emplace(name, AdamSlot{Tensor::zeros(p.w.shape), Tensor::zeros(p.w.shape),
                                        Tensor::zeros(p.b.shape), Tensor::zeros(p.b.shape)})
                .first;
    update(p.w, git->second.w, sit->second.mw, sit->second.vw);
    update(p.b, git->second.b, sit->second.mb, sit->second.vb);
  }
}

// Step schedule: lr(e) = base * decay^(number of milestones <= e)
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_factor = 0.1;
  std::vector<int> milestones;

  void validate() const {
    require(base_lr > 0.0, Errc::bad_config, "LrSchedule: base_lr must be positive");
    require(decay_factor > 0.0 && decay_factor <= 1.0, Errc::bad_config,
            "LrSchedule: decay_factor must be in (0,1]");
  }

  double lr(int epoch) const {
    validate();
    std::size_t hits = 0;
    for (int m : milestones)
      if (m <= epoch) ++hits;
    return base_lr * std::pow(decay_factor, static_cast<double>(hits));
  }
};

}  // namespace hitframe::nn
