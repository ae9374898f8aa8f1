#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "hitframe/common.hpp"
#include "hitframe/nn/tape.hpp"

namespace hitframe::nn {

// Weight/bias pair. Normalization layers reuse it as gamma/beta.
struct Affine {
  Tensor w;
  Tensor b;
};

// Named parameter collection; map keeps iteration order stable for
// checkpointing and optimizer sweeps.
struct ParameterSet {
  std::map<std::string, Affine> items;

  void add(std::string name, Affine p) {
    auto [it, fresh] = items.emplace(std::move(name), std::move(p));
    require(fresh, Errc::bad_argument, "duplicate parameter " + it->first);
  }
  bool has(const std::string& name) const { return items.count(name) != 0; }
  Affine& at(const std::string& name) {
    auto it = items.find(name);
    require(it != items.end(), Errc::bad_argument, "unknown parameter " + name);
    return it->second;
  }
  const Affine& at(const std::string& name) const {
    auto it = items.find(name);
    require(it != items.end(), Errc::bad_argument, "unknown parameter " + name);
    return it->second;
  }
  std::size_t size() const { return items.size(); }
};

using ParamGrads = std::map<std::string, Affine>;

struct StagedAffine {
  NodeId w = 0;
  NodeId b = 0;
};

using StagedParams = std::map<std::string, StagedAffine>;

inline StagedParams stage(Tape& t, const ParameterSet& params, bool needs_grad) {
  StagedParams out;
  for (const auto& [name, p] : params.items)
    out.emplace(name, StagedAffine{t.leaf(p.w, needs_grad), t.leaf(p.b, needs_grad)});
  return out;
}

inline ParamGrads collect_grads(Tape& t, const StagedParams& staged) {
  ParamGrads out;
  for (const auto& [name, s] : staged) out.emplace(name, Affine{t.grad(s.w), t.grad(s.b)});
  return out;
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

inline Tensor uniform_tensor(Rng& rng, Shape shape, double bound) {
  Tensor out = Tensor::zeros(std::move(shape));
  for (double& v : out.values) v = rng.uniform(-bound, bound);
  return out;
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias
inline Affine init_linear(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return {uniform_tensor(rng, {fan_in, fan_out}, bound), Tensor::zeros({fan_out})};
}

inline Affine init_conv3x3(Rng& rng, std::size_t in_ch, std::size_t out_ch) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * 9));
  return {uniform_tensor(rng, {out_ch, in_ch, 3, 3}, bound), Tensor::zeros({out_ch})};
}

// gamma = 1, beta = 0
inline Affine init_norm(std::size_t width) {
  return {Tensor::full({width}, 1.0), Tensor::zeros({width})};
}

}  // namespace hitframe::nn
