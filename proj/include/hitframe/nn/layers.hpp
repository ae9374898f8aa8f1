#pragma once

#include <cmath>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/nn/ops.hpp"
#include "hitframe/nn/params.hpp"

namespace hitframe::nn {

// conv3x3 -> maxpool 2x2 -> batch norm -> relu
inline NodeId conv_block(Tape& t, NodeId x, const StagedAffine& conv, const StagedAffine& norm,
                         BnStats& stats, bool training) {
  NodeId c = conv2d_3x3(t, x, conv.w, conv.b);
  NodeId p = maxpool2x2(t, c);
  NodeId n = batch_norm2d(t, p, norm.w, norm.b, stats, training);
  return relu(t, n);
}

struct AttentionParams {
  StagedAffine q, k, v, o;
};

// Scaled dot-product attention over rows of x [F x d_model]. key_mask marks
// frames that no query may attend to (padding).
inline NodeId multi_head_attention(Tape& t, NodeId x, const AttentionParams& p,
                                   std::size_t n_heads, const std::vector<bool>& key_mask) {
  const Tensor& X = t.val(x);
  require(X.rank() == 2, Errc::shape_mismatch, "attention expects FxD input");
  const std::size_t d_model = X.shape[1];
  require(n_heads > 0 && d_model % n_heads == 0, Errc::bad_config,
          "d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(n_heads) +
              " heads");
  require(key_mask.size() == X.shape[0], Errc::shape_mismatch, "attention key mask length");
  const std::size_t d_head = d_model / n_heads;

  NodeId q = affine(t, x, p.q.w, p.q.b);
  NodeId k = affine(t, x, p.k.w, p.k.b);
  NodeId v = affine(t, x, p.v.w, p.v.b);

  std::vector<NodeId> heads;
  heads.reserve(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
  for (std::size_t h = 0; h < n_heads; ++h) {
    NodeId qh = slice_cols(t, q, h * d_head, (h + 1) * d_head);
    NodeId kh = slice_cols(t, k, h * d_head, (h + 1) * d_head);
    NodeId vh = slice_cols(t, v, h * d_head, (h + 1) * d_head);
    NodeId scores = scale(t, matmul_nt(t, qh, kh), inv_sqrt);
    NodeId masked = add_key_mask(t, scores, key_mask);
    NodeId attn = softmax_rows(t, masked);
    heads.push_back(matmul(t, attn, vh));
  }
  NodeId cat = concat_cols(t, heads);
  return affine(t, cat, p.o.w, p.o.b);
}

// affine -> relu -> affine
inline NodeId ffn(Tape& t, NodeId x, const StagedAffine& fc1, const StagedAffine& fc2) {
  return affine(t, relu(t, affine(t, x, fc1.w, fc1.b)), fc2.w, fc2.b);
}

struct EncoderParams {
  AttentionParams attn;
  StagedAffine ffn1, ffn2;
  StagedAffine ln1, ln2;
};

// Post-norm encoder layer:
//   y1 = LN(x + Dropout(Attention(x)))
//   y  = LN(y1 + Dropout(FFN(y1)))
inline NodeId encoder_layer(Tape& t, NodeId x, const EncoderParams& p, std::size_t n_heads,
                            const std::vector<bool>& key_mask, double dropout_rate,
                            DropoutRng& rng, bool training) {
  NodeId a = multi_head_attention(t, x, p.attn, n_heads, key_mask);
  a = dropout(t, a, dropout_rate, rng, training);
  NodeId y1 = layer_norm(t, add(t, x, a), p.ln1.w, p.ln1.b);
  NodeId f = ffn(t, y1, p.ffn1, p.ffn2);
  f = dropout(t, f, dropout_rate, rng, training);
  return layer_norm(t, add(t, y1, f), p.ln2.w, p.ln2.b);
}

}  // namespace hitframe::nn
