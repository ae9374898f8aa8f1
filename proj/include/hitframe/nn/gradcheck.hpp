#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/nn/tape.hpp"

namespace hitframe::nn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of a scalar-valued graph builder. `build` receives
// a fresh tape plus leaf ids for each input and must return a scalar node.
inline GradCheckResult grad_check(
    const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
    std::vector<Tensor> inputs, double eps = 1e-5) {
  require(!inputs.empty(), Errc::bad_argument, "grad_check: no inputs");

  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const Tensor& in : inputs) ids.push_back(tape.leaf(in, true));
  NodeId root = build(tape, ids);
  require(tape.val(root).numel() == 1, Errc::shape_mismatch, "grad_check: root must be scalar");
  tape.backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (NodeId id : ids) analytic.push_back(tape.grad(id));

  auto eval = [&](const std::vector<Tensor>& pts) {
    Tape t2;
    std::vector<NodeId> ids2;
    ids2.reserve(pts.size());
    for (const Tensor& in : pts) ids2.push_back(t2.leaf(in, false));
    return t2.val(build(t2, ids2)).values[0];
  };

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double saved = inputs[i].values[j];
      inputs[i].values[j] = saved + eps;
      double fp = eval(inputs);
      inputs[i].values[j] = saved - eps;
      double fm = eval(inputs);
      inputs[i].values[j] = saved;
      double num = (fp - fm) / (2.0 * eps);
      double ana = analytic[i].values[j];
      double rel = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_input = i;
        res.worst_index = j;
        res.analytic = ana;
        res.numeric = num;
      }
    }
  }
  return res;
}

}  // namespace hitframe::nn
