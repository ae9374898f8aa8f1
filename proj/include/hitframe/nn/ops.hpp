#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/nn/tape.hpp"

namespace hitframe::nn {

// ---------------------------------------------------------------------------
// elementwise / structural
// ---------------------------------------------------------------------------

inline NodeId add(Tape& t, NodeId a, NodeId b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "add");
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] += B.values[i];
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a, b](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.values[i] += g.values[i];
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.values[i] += g.values[i];
    }
  });
}

inline NodeId scale(Tape& t, NodeId a, double c) {
  Tensor out = t.val(a);
  for (double& v : out.values) v *= c;
  if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a, c](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.values[i] += c * g.values[i];
  });
}

inline NodeId relu(Tape& t, NodeId a) {
  Tensor out = t.val(a);
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.val(a);
    Tensor& ga = tp.grad(a);
    // derivative at exactly 0 is 0
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x.values[i] > 0.0) ga.values[i] += g.values[i];
  });
}

inline NodeId reshape(Tape& t, NodeId a, Shape shape) {
  const Tensor& A = t.val(a);
  require(shape_numel(shape) == A.numel(), Errc::shape_mismatch,
          "reshape " + shape_str(A.shape) + " -> " + shape_str(shape));
  Tensor out(std::move(shape), A.values);
  if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.values[i] += g.values[i];
  });
}

// scalar projection sum_i w_i * x_i; the test harness uses this to reduce
// tensor-valued ops to a scalar for finite differencing
inline NodeId weighted_sum(Tape& t, NodeId a, Tensor w) {
  const Tensor& A = t.val(a);
  require_same_shape(A, w, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) s += A.values[i] * w.values[i];
  if (!t.needs_grad(a)) return t.push(Tensor::scalar(s), false, nullptr);
  return t.push(Tensor::scalar(s), true, [a, w = std::move(w)](Tape& tp, NodeId self) {
    double g = tp.grad(self).values[0];
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.values[i] += g * w.values[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline NodeId matmul(Tape& t, NodeId a, NodeId b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[0], Errc::shape_mismatch,
          "matmul " + shape_str(A.shape) + " x " + shape_str(B.shape));
  const std::size_t n = A.shape[0], k = A.shape[1], m = B.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = A(i, p);
      if (av == 0.0) continue;
      const double* brow = &B.values[p * m];
      double* orow = &out.values[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a, b, n, k, m](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.val(a);
    const Tensor& B = tp.val(b);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* grow = &g.values[i * m];
          const double* brow = &B.values[p * m];
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
          ga(i, p) += s;
        }
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double av = A(i, p);
          if (av == 0.0) continue;
          const double* grow = &g.values[i * m];
          double* gbrow = &gb.values[p * m];
          for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
        }
    }
  });
}

// A * B^T without materializing the transpose
inline NodeId matmul_nt(Tape& t, NodeId a, NodeId b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[1], Errc::shape_mismatch,
          "matmul_nt " + shape_str(A.shape) + " x " + shape_str(B.shape));
  const std::size_t n = A.shape[0], k = A.shape[1], m = B.shape[0];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double* arow = &A.values[i * k];
      const double* brow = &B.values[j * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a, b, n, k, m](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.val(a);
    const Tensor& B = tp.val(b);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          double gv = g(i, j);
          if (gv == 0.0) continue;
          const double* brow = &B.values[j * k];
          double* garow = &ga.values[i * k];
          for (std::size_t p = 0; p < k; ++p) garow[p] += gv * brow[p];
        }
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          double gv = g(i, j);
          if (gv == 0.0) continue;
          const double* arow = &A.values[i * k];
          double* gbrow = &gb.values[j * k];
          for (std::size_t p = 0; p < k; ++p) gbrow[p] += gv * arow[p];
        }
    }
  });
}

inline NodeId add_rowvec(Tape& t, NodeId x, NodeId b) {
  const Tensor& X = t.val(x);
  const Tensor& B = t.val(b);
  require(X.rank() == 2 && B.rank() == 1 && X.shape[1] == B.shape[0], Errc::shape_mismatch,
          "add_rowvec " + shape_str(X.shape) + " + " + shape_str(B.shape));
  const std::size_t n = X.shape[0], m = X.shape[1];
  Tensor out = X;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) += B.values[j];
  bool ng = t.needs_grad(x) || t.needs_grad(b);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [x, b, n, m](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (std::size_t i = 0; i < g.numel(); ++i) gx.values[i] += g.values[i];
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb.values[j] += g(i, j);
    }
  });
}

// y = xW + b
inline NodeId affine(Tape& t, NodeId x, NodeId w, NodeId b) {
  return add_rowvec(t, matmul(t, x, w), b);
}

inline NodeId slice_cols(Tape& t, NodeId a, std::size_t c0, std::size_t c1) {
  const Tensor& A = t.val(a);
  require(A.rank() == 2 && c0 < c1 && c1 <= A.shape[1], Errc::shape_mismatch,
          "slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
              shape_str(A.shape));
  const std::size_t n = A.shape[0], m = A.shape[1], w = c1 - c0;
  Tensor out = Tensor::zeros({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = A(i, c0 + j);
  if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a, c0, n, w, m](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) ga.values[i * m + c0 + j] += g(i, j);
  });
}

inline NodeId concat_cols(Tape& t, const std::vector<NodeId>& parts) {
  require(!parts.empty(), Errc::bad_argument, "concat_cols: no parts");
  const std::size_t n = t.val(parts[0]).shape[0];
  std::size_t total = 0;
  bool ng = false;
  for (NodeId p : parts) {
    const Tensor& P = t.val(p);
    require(P.rank() == 2 && P.shape[0] == n, Errc::shape_mismatch, "concat_cols: row mismatch");
    total += P.shape[1];
    ng = ng || t.needs_grad(p);
  }
  Tensor out = Tensor::zeros({n, total});
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& P = t.val(p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < P.shape[1]; ++j) out(i, off + j) = P(i, j);
    off += P.shape[1];
  }
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [parts, n, total](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (NodeId p : parts) {
      const std::size_t w = tp.val(p).shape[1];
      if (tp.needs_grad(p)) {
        Tensor& gp = tp.grad(p);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) gp(i, j) += g.values[i * total + off + j];
      }
      off += w;
    }
  });
}

// ---------------------------------------------------------------------------
// softmax and attention masking
// ---------------------------------------------------------------------------

inline NodeId softmax_rows(Tape& t, NodeId a) {
  const Tensor& A = t.val(a);
  require(A.rank() == 2, Errc::shape_mismatch, "softmax_rows expects a matrix");
  const std::size_t n = A.shape[0], m = A.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, A(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double e = std::exp(A(i, j) - mx);
      out(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < m; ++j) out(i, j) /= z;
  }
  if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [a, n, m](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.val(self);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < m; ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

// Adds a large negative bias to masked key columns so softmax assigns them
// exactly zero weight (exp underflows). Pass-through gradient.
inline NodeId add_key_mask(Tape& t, NodeId scores, const std::vector<bool>& key_mask) {
  const Tensor& S = t.val(scores);
  require(S.rank() == 2 && S.shape[1] == key_mask.size(), Errc::shape_mismatch,
          "add_key_mask: mask length " + std::to_string(key_mask.size()) + " vs " +
              shape_str(S.shape));
  constexpr double kMaskBias = -1e30;
  Tensor out = S;
  for (std::size_t i = 0; i < S.shape[0]; ++i)
    for (std::size_t j = 0; j < S.shape[1]; ++j)
      if (key_mask[j]) out(i, j) += kMaskBias;
  if (!t.needs_grad(scores)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [scores](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    Tensor& gs = tp.grad(scores);
    for (std::size_t i = 0; i < g.numel(); ++i) gs.values[i] += g.values[i];
  });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

inline constexpr double kNormEps = 1e-5;

inline NodeId layer_norm(Tape& t, NodeId x, NodeId gamma, NodeId beta, double eps = kNormEps) {
  const Tensor& X = t.val(x);
  const Tensor& G = t.val(gamma);
  const Tensor& B = t.val(beta);
  require(X.rank() == 2 && G.rank() == 1 && B.rank() == 1 && G.shape[0] == X.shape[1] &&
              B.shape[0] == X.shape[1],
          Errc::shape_mismatch, "layer_norm shapes");
  const std::size_t n = X.shape[0], m = X.shape[1];
  Tensor out = Tensor::zeros({n, m});
  Tensor xhat = Tensor::zeros({n, m});
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += X(i, j);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double d = X(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(m);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat(i, j) = (X(i, j) - mu) * inv[i];
      out(i, j) = G.values[j] * xhat(i, j) + B.values[j];
    }
  }
  bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [x, gamma, beta, n, m, xhat = std::move(xhat), inv = std::move(inv)](
                    Tape& tp, NodeId self) {
                  const Tensor& g = tp.grad(self);
                  const Tensor& G = tp.val(gamma);
                  if (tp.needs_grad(gamma)) {
                    Tensor& gg = tp.grad(gamma);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) gg.values[j] += g(i, j) * xhat(i, j);
                  }
                  if (tp.needs_grad(beta)) {
                    Tensor& gb = tp.grad(beta);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) gb.values[j] += g(i, j);
                  }
                  if (tp.needs_grad(x)) {
                    Tensor& gx = tp.grad(x);
                    for (std::size_t i = 0; i < n; ++i) {
                      double mean_h = 0.0, mean_hx = 0.0;
                      for (std::size_t j = 0; j < m; ++j) {
                        double h = g(i, j) * G.values[j];
                        mean_h += h;
                        mean_hx += h * xhat(i, j);
                      }
                      mean_h /= static_cast<double>(m);
                      mean_hx /= static_cast<double>(m);
                      for (std::size_t j = 0; j < m; ++j) {
                        double h = g(i, j) * G.values[j];
                        gx(i, j) += inv[i] * (h - mean_h - xhat(i, j) * mean_hx);
                      }
                    }
                  }
                });
}

// Running statistics owned by the model, updated on training-mode forwards.
struct BnStats {
  Tensor running_mean;
  Tensor running_var;
  bool initialized = false;
};

inline NodeId batch_norm2d(Tape& t, NodeId x, NodeId gamma, NodeId beta, BnStats& stats,
                           bool training, double momentum = 0.1, double eps = kNormEps) {
  const Tensor& X = t.val(x);
  require(X.rank() == 4, Errc::shape_mismatch, "batch_norm2d expects NCHW");
  const std::size_t N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
  const Tensor& G = t.val(gamma);
  const Tensor& B = t.val(beta);
  require(G.rank() == 1 && G.shape[0] == C && B.rank() == 1 && B.shape[0] == C,
          Errc::shape_mismatch, "batch_norm2d gamma/beta");
  const std::size_t plane = H * W;
  const std::size_t cnt = N * plane;

  std::vector<double> mean(C, 0.0), var(C, 0.0), inv(C, 0.0);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      double mu = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = &X.values[(n * C + c) * plane];
        for (std::size_t i = 0; i < plane; ++i) mu += p[i];
      }
      mu /= static_cast<double>(cnt);
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = &X.values[(n * C + c) * plane];
        for (std::size_t i = 0; i < plane; ++i) {
          double d = p[i] - mu;
          v += d * d;
        }
      }
      v /= static_cast<double>(cnt);
      mean[c] = mu;
      var[c] = v;
    }
    if (!stats.initialized) {
      stats.running_mean = Tensor::zeros({C});
      stats.running_var = Tensor::full({C}, 1.0);
      stats.initialized = true;
    }
    for (std::size_t c = 0; c < C; ++c) {
      double unbiased = cnt > 1 ? var[c] * static_cast<double>(cnt) / static_cast<double>(cnt - 1)
                                : var[c];
      stats.running_mean.values[c] = (1.0 - momentum) * stats.running_mean.values[c] + momentum * mean[c];
      stats.running_var.values[c] = (1.0 - momentum) * stats.running_var.values[c] + momentum * unbiased;
    }
  } else {
    require(stats.initialized, Errc::missing_running_stats,
            "batch_norm2d eval mode before any training step");
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.running_mean.values[c];
      var[c] = stats.running_var.values[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out = Tensor::zeros(X.shape);
  Tensor xhat = Tensor::zeros(X.shape);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = &X.values[(n * C + c) * plane];
      double* xh = &xhat.values[(n * C + c) * plane];
      double* o = &out.values[(n * C + c) * plane];
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean[c]) * inv[c];
        o[i] = G.values[c] * xh[i] + B.values[c];
      }
    }

  bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(
      std::move(out), true,
      [x, gamma, beta, N, C, plane, cnt, training, xhat = std::move(xhat), inv = std::move(inv)](
          Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& G = tp.val(gamma);
        if (tp.needs_grad(gamma)) {
          Tensor& gg = tp.grad(gamma);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
              const double* gp = &g.values[(n * C + c) * plane];
              const double* xh = &xhat.values[(n * C + c) * plane];
              double s = 0.0;
              for (std::size_t i = 0; i < plane; ++i) s += gp[i] * xh[i];
              gg.values[c] += s;
            }
        }
        if (tp.needs_grad(beta)) {
          Tensor& gb = tp.grad(beta);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
              const double* gp = &g.values[(n * C + c) * plane];
              double s = 0.0;
              for (std::size_t i = 0; i < plane; ++i) s += gp[i];
              gb.values[c] += s;
            }
        }
        if (tp.needs_grad(x)) {
          Tensor& gx = tp.grad(x);
          if (training) {
            // batch statistics participate in the gradient
            for (std::size_t c = 0; c < C; ++c) {
              double sum_h = 0.0, sum_hx = 0.0;
              for (std::size_t n = 0; n < N; ++n) {
                const double* gp = &g.values[(n * C + c) * plane];
                const double* xh = &xhat.values[(n * C + c) * plane];
                for (std::size_t i = 0; i < plane; ++i) {
                  double h = gp[i] * G.values[c];
                  sum_h += h;
                  sum_hx += h * xh[i];
                }
              }
              double mean_h = sum_h / static_cast<double>(cnt);
              double mean_hx = sum_hx / static_cast<double>(cnt);
              for (std::size_t n = 0; n < N; ++n) {
                const double* gp = &g.values[(n * C + c) * plane];
                const double* xh = &xhat.values[(n * C + c) * plane];
                double* gxp = &gx.values[(n * C + c) * plane];
                for (std::size_t i = 0; i < plane; ++i) {
                  double h = gp[i] * G.values[c];
                  gxp[i] += inv[c] * (h - mean_h - xh[i] * mean_hx);
                }
              }
            }
          } else {
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t c = 0; c < C; ++c) {
                const double* gp = &g.values[(n * C + c) * plane];
                double* gxp = &gx.values[(n * C + c) * plane];
                for (std::size_t i = 0; i < plane; ++i)
                  gxp[i] += gp[i] * G.values[c] * inv[c];
              }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// convolution / pooling
// ---------------------------------------------------------------------------

// 3x3 convolution, padding 1, stride 1
inline NodeId conv2d_3x3(Tape& t, NodeId x, NodeId w, NodeId b) {
  const Tensor& X = t.val(x);
  const Tensor& Wt = t.val(w);
  const Tensor& B = t.val(b);
  require(X.rank() == 4, Errc::shape_mismatch, "conv2d expects NCHW input");
  require(Wt.rank() == 4 && Wt.shape[2] == 3 && Wt.shape[3] == 3, Errc::shape_mismatch,
          "conv2d expects KxCx3x3 kernel, got " + shape_str(Wt.shape));
  require(Wt.shape[1] == X.shape[1], Errc::shape_mismatch, "conv2d channel mismatch");
  require(B.rank() == 1 && B.shape[0] == Wt.shape[0], Errc::shape_mismatch, "conv2d bias");
  const std::size_t N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
  const std::size_t K = Wt.shape[0];
  Tensor out = Tensor::zeros({N, K, H, W});

  auto run_fwd = [&](Tensor& dst) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < K; ++k) {
        double* op = &dst.values[(n * K + k) * H * W];
        for (std::size_t i = 0; i < H * W; ++i) op[i] = B.values[k];
        for (std::size_t c = 0; c < C; ++c) {
          const double* xp = &X.values[(n * C + c) * H * W];
          const double* kw = &Wt.values[(k * C + c) * 9];
          for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const double wv = kw[di * 3 + dj];
              if (wv == 0.0) continue;
              // output (i,j) reads input (i+di-1, j+dj-1)
              const std::ptrdiff_t oi0 = std::max<std::ptrdiff_t>(0, 1 - static_cast<std::ptrdiff_t>(di));
              const std::ptrdiff_t oi1 = std::min<std::ptrdiff_t>(H, H + 1 - di);
              const std::ptrdiff_t oj0 = std::max<std::ptrdiff_t>(0, 1 - static_cast<std::ptrdiff_t>(dj));
              const std::ptrdiff_t oj1 = std::min<std::ptrdiff_t>(W, W + 1 - dj);
              for (std::ptrdiff_t i = oi0; i < oi1; ++i) {
                const double* xrow = xp + (i + di - 1) * W + (dj - 1);
                double* orow = op + i * W;
                for (std::ptrdiff_t j = oj0; j < oj1; ++j) orow[j] += wv * xrow[j];
              }
            }
        }
      }
  };
  run_fwd(out);

  bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true, [x, w, b, N, C, H, W, K](Tape& tp, NodeId self) {
    const Tensor& g = tp.grad(self);
    const Tensor& X = tp.val(x);
    const Tensor& Wt = tp.val(w);
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
          const double* gp = &g.values[(n * K + k) * H * W];
          double s = 0.0;
          for (std::size_t i = 0; i < H * W; ++i) s += gp[i];
          gb.values[k] += s;
        }
    }
    const bool need_x = tp.needs_grad(x);
    const bool need_w = tp.needs_grad(w);
    if (!need_x && !need_w) return;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < K; ++k) {
        const double* gp = &g.values[(n * K + k) * H * W];
        for (std::size_t c = 0; c < C; ++c) {
          const double* xp = &X.values[(n * C + c) * H * W];
          const double* kw = &Wt.values[(k * C + c) * 9];
          double* gxp = need_x ? &tp.grad(x).values[(n * C + c) * H * W] : nullptr;
          double* gwp = need_w ? &tp.grad(w).values[(k * C + c) * 9] : nullptr;
          for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const std::ptrdiff_t oi0 = std::max<std::ptrdiff_t>(0, 1 - static_cast<std::ptrdiff_t>(di));
              const std::ptrdiff_t oi1 = std::min<std::ptrdiff_t>(H, H + 1 - di);
              const std::ptrdiff_t oj0 = std::max<std::ptrdiff_t>(0, 1 - static_cast<std::ptrdiff_t>(dj));
              const std::ptrdiff_t oj1 = std::min<std::ptrdiff_t>(W, W + 1 - dj);
              const double wv = kw[di * 3 + dj];
              double wacc = 0.0;
              for (std::ptrdiff_t i = oi0; i < oi1; ++i) {
                const double* grow = gp + i * W;
                const double* xrow = xp + (i + di - 1) * W + (dj - 1);
                if (need_x && wv != 0.0) {
                  double* gxrow = gxp + (i + di - 1) * W + (dj - 1);
                  for (std::ptrdiff_t j = oj0; j < oj1; ++j) gxrow[j] += wv * grow[j];
                }
                if (need_w)
                  for (std::ptrdiff_t j = oj0; j < oj1; ++j) wacc += grow[j] * xrow[j];
              }
              if (need_w) gwp[di * 3 + dj] += wacc;
            }
        }
      }
  });
}

// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
// Ties resolve to the first element in scan order.
inline NodeId maxpool2x2(Tape& t, NodeId x) {
  const Tensor& X = t.val(x);
  require(X.rank() == 4, Errc::shape_mismatch, "maxpool2x2 expects NCHW");
  const std::size_t N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
  require(H >= 2 && W >= 2, Errc::shape_mismatch, "maxpool2x2 needs spatial dims >= 2");
  const std::size_t OH = H / 2, OW = W / 2;
  Tensor out = Tensor::zeros({N, C, OH, OW});
  std::vector<std::uint32_t> arg(out.numel());
  std::size_t oidx = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* xp = &X.values[(n * C + c) * H * W];
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          std::size_t best = (2 * i) * W + 2 * j;
          double bv = xp[best];
          const std::size_t cand[3] = {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j,
                                       (2 * i + 1) * W + 2 * j + 1};
          for (std::size_t q : cand)
            if (xp[q] > bv) {
              bv = xp[q];
              best = q;
            }
          out.values[oidx] = bv;
          arg[oidx] = static_cast<std::uint32_t>(best);
          ++oidx;
        }
    }
  if (!t.needs_grad(x)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [x, N, C, H, W, OH, OW, arg = std::move(arg)](Tape& tp, NodeId self) {
                  const Tensor& g = tp.grad(self);
                  Tensor& gx = tp.grad(x);
                  std::size_t oidx = 0;
                  for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                      double* gxp = &gx.values[(n * C + c) * H * W];
                      for (std::size_t i = 0; i < OH * OW; ++i, ++oidx)
                        gxp[arg[oidx]] += g.values[oidx];
                    }
                });
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

// Counter-based stream: every dropout call draws a fresh key so masks are a
// pure function of (seed, call index, element index).
struct DropoutRng {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
  std::uint64_t next_key() { return mix_key(seed, counter++); }
};

inline double unit_from_bits(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

inline NodeId dropout(Tape& t, NodeId x, double rate, DropoutRng& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, Errc::bad_config,
          "dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const Tensor& X = t.val(x);
  const std::uint64_t key = rng.next_key();
  std::vector<char> keep(X.numel());
  const double inv_keep = 1.0 / (1.0 - rate);
  Tensor out = X;
  for (std::size_t i = 0; i < X.numel(); ++i) {
    keep[i] = unit_from_bits(mix_key(key, i)) >= rate ? 1 : 0;
    out.values[i] = keep[i] ? out.values[i] * inv_keep : 0.0;
  }
  if (!t.needs_grad(x)) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [x, inv_keep, keep = std::move(keep)](Tape& tp, NodeId self) {
                  const Tensor& g = tp.grad(self);
                  Tensor& gx = tp.grad(x);
                  for (std::size_t i = 0; i < g.numel(); ++i)
                    if (keep[i]) gx.values[i] += g.values[i] * inv_keep;
                });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace detail {
inline double row_logsumexp(const double* row, std::size_t c) {
  double mx = row[0];
  for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
  return mx + std::log(s);
}
}  // namespace detail

// Sum over rows of -log softmax(logits)[label].
inline NodeId softmax_cross_entropy(Tape& t, NodeId logits, const std::vector<int>& labels) {
  const Tensor& Z = t.val(logits);
  require(Z.rank() == 2, Errc::shape_mismatch, "cross entropy expects NxC logits");
  const std::size_t n = Z.shape[0], c = Z.shape[1];
  require(labels.size() == n, Errc::shape_mismatch, "labels length mismatch");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < c, Errc::label_out_of_range,
            "label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &Z.values[i * c];
    loss += detail::row_logsumexp(row, c) - row[labels[i]];
  }
  if (!t.needs_grad(logits)) return t.push(Tensor::scalar(loss), false, nullptr);
  return t.push(Tensor::scalar(loss), true, [logits, labels, n, c](Tape& tp, NodeId self) {
    const double g = tp.grad(self).values[0];
    const Tensor& Z = tp.val(logits);
    Tensor& gz = tp.grad(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &Z.values[i * c];
      double mx = row[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
      for (std::size_t j = 0; j < c; ++j) {
        double p = std::exp(row[j] - mx) / z;
        gz.values[i * c + j] += g * (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0));
      }
    }
  });
}

// Mean of per-row cross entropy over rows whose label != ignore_index.
// Ignored rows receive exactly zero gradient.
inline NodeId masked_cross_entropy(Tape& t, NodeId logits, const std::vector<int>& labels,
                                   int ignore_index) {
  const Tensor& Z = t.val(logits);
  require(Z.rank() == 2, Errc::shape_mismatch, "masked cross entropy expects NxC logits");
  const std::size_t n = Z.shape[0], c = Z.shape[1];
  require(labels.size() == n, Errc::shape_mismatch, "labels length mismatch");
  std::size_t cnt = 0;
  for (int y : labels) {
    if (y == ignore_index) continue;
    require(y >= 0 && static_cast<std::size_t>(y) < c, Errc::label_out_of_range,
            "label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
    ++cnt;
  }
  require(cnt > 0, Errc::empty_mask, "all positions carry the ignore index");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == ignore_index) continue;
    const double* row = &Z.values[i * c];
    loss += detail::row_logsumexp(row, c) - row[labels[i]];
  }
  loss /= static_cast<double>(cnt);
  if (!t.needs_grad(logits)) return t.push(Tensor::scalar(loss), false, nullptr);
  return t.push(Tensor::scalar(loss), true,
                [logits, labels, ignore_index, n, c, cnt](Tape& tp, NodeId self) {
                  const double g = tp.grad(self).values[0] / static_cast<double>(cnt);
                  const Tensor& Z = tp.val(logits);
                  Tensor& gz = tp.grad(logits);
                  for (std::size_t i = 0; i < n; ++i) {
                    if (labels[i] == ignore_index) continue;
                    const double* row = &Z.values[i * c];
                    double mx = row[0];
                    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                    double z = 0.0;
                    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
                    for (std::size_t j = 0; j < c; ++j) {
                      double p = std::exp(row[j] - mx) / z;
                      gz.values[i * c + j] +=
                          g * (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0));
                    }
                  }
                });
}

}  // namespace hitframe::nn
