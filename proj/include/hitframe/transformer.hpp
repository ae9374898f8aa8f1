#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/geometry.hpp"
#include "hitframe/io/binary.hpp"
#include "hitframe/io/jsonl.hpp"
#include "hitframe/kseq.hpp"
#include "hitframe/nn/layers.hpp"
#include "hitframe/nn/optim.hpp"
#include "hitframe/nn/params.hpp"
#include "hitframe/tensor.hpp"

namespace hitframe::dir {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct TransformerConfig {
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t layers = 8;
  std::size_t d_ff = 2048;
  std::size_t max_len = 600;
  std::size_t classes = 4;
  double dropout = 0.1;
  std::size_t proj_hidden = 128;
  bool chunked_inference = false;

  void validate() const {
    require(d_model >= 2 && d_model % 2 == 0, Errc::bad_config,
            "d_model must be even to split across the two players");
    require(heads >= 1 && d_model % heads == 0, Errc::bad_config,
            "d_model must be divisible by head count");
    require(layers >= 1, Errc::bad_config, "at least one encoder layer required");
    require(d_ff >= 1, Errc::bad_config, "feed-forward width must be positive");
    require(max_len >= 1, Errc::bad_config, "max sequence length must be positive");
    require(classes == 4, Errc::bad_config, "direction labeling is strictly four-class");
    require(dropout >= 0.0 && dropout < 1.0, Errc::bad_config, "dropout must lie in [0,1)");
    require(proj_hidden >= 1, Errc::bad_config, "projection hidden width must be positive");
  }

  static TransformerConfig desk() {
    TransformerConfig cfg;
    cfg.d_model = 16;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.d_ff = 32;
    cfg.max_len = 120;
    cfg.proj_hidden = 16;
    cfg.dropout = 0.0;
    return cfg;
  }

  static TransformerConfig full_scale() { return TransformerConfig{}; }
};

inline io::Json transformer_to_json(const TransformerConfig& cfg) {
  io::Json j;
  j["d_model"] = cfg.d_model;
  j["heads"] = cfg.heads;
  j["layers"] = cfg.layers;
  j["d_ff"] = cfg.d_ff;
  j["max_len"] = cfg.max_len;
  j["classes"] = cfg.classes;
  j["dropout"] = cfg.dropout;
  j["proj_hidden"] = cfg.proj_hidden;
  j["chunked_inference"] = cfg.chunked_inference;
  return j;
}

inline TransformerConfig transformer_from_json(const io::Json& j) {
  TransformerConfig cfg;
  try {
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.d_ff = j.at("d_ff").get<std::size_t>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
    cfg.classes = j.at("classes").get<std::size_t>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.proj_hidden = j.at("proj_hidden").get<std::size_t>();
    cfg.chunked_inference = j.at("chunked_inference").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("transformer config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

struct DirectionModel {
  TransformerConfig cfg;
  nn::ParameterSet params;
  geom::KeypointStats stats;  // embedded normalization, identity until trained
};

inline std::string enc_name(std::size_t i, const char* part) {
  return "enc" + std::to_string(i) + "." + part;
}

inline DirectionModel init_direction_model(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DirectionModel model;
  model.cfg = cfg;
  model.stats.mean.fill(0.0);
  model.stats.stddev.fill(1.0);
  Rng rng(mix_key(seed, 0xd14));
  const std::size_t half = cfg.d_model / 2;
  const std::size_t coords = 2 * geom::SkeletonKeypoints::kCount;
  for (const char* side : {"bottom", "top"}) {
    model.params.add(std::string("proj.") + side + ".fc1",
                     nn::init_linear(rng, coords, cfg.proj_hidden));
    model.params.add(std::string("proj.") + side + ".fc2",
                     nn::init_linear(rng, cfg.proj_hidden, half));
  }
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    for (const char* part : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      model.params.add(enc_name(i, part), nn::init_linear(rng, cfg.d_model, cfg.d_model));
    }
    model.params.add(enc_name(i, "ffn1"), nn::init_linear(rng, cfg.d_model, cfg.d_ff));
    model.params.add(enc_name(i, "ffn2"), nn::init_linear(rng, cfg.d_ff, cfg.d_model));
    model.params.add(enc_name(i, "ln1"), nn::init_norm(cfg.d_model));
    model.params.add(enc_name(i, "ln2"), nn::init_norm(cfg.d_model));
  }
  model.params.add("head", nn::init_linear(rng, cfg.d_model, cfg.classes));
  return model;
}

// ---------------------------------------------------------------------------
// forward graph
// ---------------------------------------------------------------------------

namespace detail {

inline void flatten_skeleton(const geom::SkeletonKeypoints& s, double* out) {
  for (std::size_t i = 0; i < geom::SkeletonKeypoints::kCount; ++i) {
    out[2 * i] = s.pts[i].x;
    out[2 * i + 1] = s.pts[i].y;
  }
}

inline nn::Tensor player_matrix(const std::vector<geom::PlayerKeypointPair>& pairs, bool bottom) {
  const std::size_t coords = 2 * geom::SkeletonKeypoints::kCount;
  nn::Tensor m = nn::Tensor::zeros({pairs.size(), coords});
  for (std::size_t f = 0; f < pairs.size(); ++f) {
    const geom::SkeletonKeypoints& s = bottom ? pairs[f].bottom_player : pairs[f].top_player;
    flatten_skeleton(s, m.values.data() + f * coords);
  }
  return m;
}

}  // namespace detail

// Per frame, each player's 34 coordinates pass through an independent pair of
// affine+ReLU stages; the two d_model/2 outputs concatenate bottom-first.
inline nn::NodeId playerwise_projection(nn::Tape& t, nn::NodeId bottom, nn::NodeId top,
                                        const nn::StagedParams& staged, std::size_t d_model) {
  require(d_model % 2 == 0, Errc::bad_config, "d_model must be even to split across players");
  auto branch = [&](nn::NodeId x, const std::string& side) {
    nn::NodeId h = nn::relu(t, nn::affine(t, x, staged.at("proj." + side + ".fc1").w,
                                          staged.at("proj." + side + ".fc1").b));
    return nn::relu(t, nn::affine(t, h, staged.at("proj." + side + ".fc2").w,
                                  staged.at("proj." + side + ".fc2").b));
  };
  nn::NodeId lo = branch(bottom, "bottom");
  nn::NodeId hi = branch(top, "top");
  return nn::concat_cols(t, {lo, hi});
}

inline nn::Tensor sinusoidal_encoding(std::size_t frames, std::size_t d_model) {
  nn::Tensor pe = nn::Tensor::zeros({frames, d_model});
  for (std::size_t pos = 0; pos < frames; ++pos) {
    for (std::size_t i = 0; i + 1 < d_model; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe.values[pos * d_model + i] = std::sin(static_cast<double>(pos) / rate);
      pe.values[pos * d_model + i + 1] = std::cos(static_cast<double>(pos) / rate);
    }
  }
  return pe;
}

// Builds the full per-sequence graph: projection, positional encoding,
// encoder stack with key-padding mask, per-frame classification head.
inline nn::NodeId transformer_logits(nn::Tape& t, nn::NodeId bottom, nn::NodeId top,
                                     const std::vector<bool>& pad_mask,
                                     const nn::StagedParams& staged, const TransformerConfig& cfg,
                                     bool training, nn::DropoutRng& drop) {
  const std::size_t frames = t.val(bottom).shape[0];
  require(frames <= cfg.max_len, Errc::length_exceeded,
          "sequence length " + std::to_string(frames) + " exceeds configured maximum " +
              std::to_string(cfg.max_len));
  require(pad_mask.size() == frames, Errc::shape_mismatch,
          "pad mask length does not match frame count");
  nn::NodeId h = playerwise_projection(t, bottom, top, staged, cfg.d_model);
  h = nn::add(t, h, t.leaf(sinusoidal_encoding(frames, cfg.d_model)));
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    nn::EncoderParams enc;
    enc.attn = {staged.at(enc_name(i, "attn.q")), staged.at(enc_name(i, "attn.k")),
                staged.at(enc_name(i, "attn.v")), staged.at(enc_name(i, "attn.o"))};
    enc.ffn1 = staged.at(enc_name(i, "ffn1"));
    enc.ffn2 = staged.at(enc_name(i, "ffn2"));
    enc.ln1 = staged.at(enc_name(i, "ln1"));
    enc.ln2 = staged.at(enc_name(i, "ln2"));
    h = nn::encoder_layer(t, h, enc, cfg.heads, pad_mask, cfg.dropout, drop, training);
  }
  return nn::affine(t, h, staged.at("head").w, staged.at("head").b);
}

// Inference-style batch forward: one graph per sequence, stacked to N×F×C.
// Every sequence must already be padded to the same length.
inline nn::Tensor transformer_forward(DirectionModel& model,
                                      const std::vector<std::vector<geom::PlayerKeypointPair>>& batch,
                                      const std::vector<std::vector<bool>>& pad_masks,
                                      bool training = false) {
  require(!batch.empty(), Errc::empty_input, "batch has no sequences");
  require(batch.size() == pad_masks.size(), Errc::shape_mismatch,
          "mask count does not match batch size");
  const std::size_t frames = batch.front().size();
  for (const auto& seq : batch) {
    require(seq.size() == frames, Errc::shape_mismatch, "batch sequences must share one length");
  }
  nn::Tensor out = nn::Tensor::zeros({batch.size(), frames, model.cfg.classes});
  nn::DropoutRng drop{mix_key(0xf02d, 0), 0};
  for (std::size_t b = 0; b < batch.size(); ++b) {
    nn::Tape t;
    nn::StagedParams staged = nn::stage(t, model.params, false);
    nn::NodeId bottom = t.leaf(detail::player_matrix(batch[b], true));
    nn::NodeId top = t.leaf(detail::player_matrix(batch[b], false));
    nn::NodeId logits =
        transformer_logits(t, bottom, top, pad_masks[b], staged, model.cfg, training, drop);
    const auto& vals = t.val(logits).values;
    std::copy(vals.begin(), vals.end(),
              out.values.begin() + b * frames * model.cfg.classes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct DirectionTrainConfig {
  int epochs = 100;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  nn::LrSchedule schedule{1e-5, 0.1, {70}};

  void validate() const {
    require(epochs >= 0, Errc::bad_config, "epochs must be non-negative");
    require(weight_decay >= 0.0, Errc::bad_config, "weight decay must be non-negative");
    schedule.validate();
  }

  static DirectionTrainConfig desk() {
    DirectionTrainConfig cfg;
    cfg.epochs = 50;
    cfg.schedule = nn::LrSchedule{3e-4, 0.1, {40}};
    return cfg;
  }

  static DirectionTrainConfig full_scale() { return DirectionTrainConfig{}; }
};

inline geom::KeypointStats compute_keypoint_stats(const std::vector<KSeqRecord>& records) {
  require(!records.empty(), Errc::empty_input, "no records to compute statistics from");
  const std::size_t coords = 2 * geom::SkeletonKeypoints::kCount;
  std::array<double, 34> sum{};
  std::array<double, 34> sq{};
  double count = 0.0;
  std::array<double, 34> row{};
  for (const auto& r : records) {
    for (const auto& pair : r.pairs) {
      for (const geom::SkeletonKeypoints* s : {&pair.bottom_player, &pair.top_player}) {
        detail::flatten_skeleton(*s, row.data());
        for (std::size_t k = 0; k < coords; ++k) {
          sum[k] += row[k];
          sq[k] += row[k] * row[k];
        }
        count += 1.0;
      }
    }
  }
  require(count > 0.0, Errc::empty_input, "records contain no frames");
  geom::KeypointStats stats;
  for (std::size_t k = 0; k < coords; ++k) {
    stats.mean[k] = sum[k] / count;
    const double var = std::max(0.0, sq[k] / count - stats.mean[k] * stats.mean[k]);
    stats.stddev[k] = std::max(std::sqrt(var), 1e-6);
  }
  return stats;
}

struct PaddedSequence {
  std::vector<geom::PlayerKeypointPair> pairs;  // normalized, padded with zeros
  std::vector<int> labels;                      // Pad code on padded tail
  std::vector<bool> mask;                       // true on padded tail
};

inline PaddedSequence pad_record(const KSeqRecord& record, const geom::KeypointStats& stats,
                                 std::size_t max_len) {
  record.validate();
  require(record.labeled(), Errc::bad_argument,
          "training record " + record.rally_id + " has no labels");
  require(record.pairs.size() <= max_len, Errc::length_exceeded,
          "rally " + record.rally_id + " has " + std::to_string(record.pairs.size()) +
              " frames, exceeding the configured maximum " + std::to_string(max_len));
  PaddedSequence out;
  out.pairs.resize(max_len);
  out.labels.assign(max_len, static_cast<int>(DirectionToken::Pad));
  out.mask.assign(max_len, true);
  for (std::size_t f = 0; f < record.pairs.size(); ++f) {
    out.pairs[f] = geom::normalize_pair(record.pairs[f], stats);
    out.labels[f] = static_cast<int>(record.labels[f]);
    out.mask[f] = false;
  }
  return out;
}

struct DirectionTrainResult {
  DirectionModel model;
  std::vector<double> epoch_losses;  // mean per-rally masked loss per epoch
};

inline DirectionTrainResult train_direction_model(const std::vector<KSeqRecord>& records,
                                                  const TransformerConfig& cfg,
                                                  const DirectionTrainConfig& train_cfg) {
  cfg.validate();
  train_cfg.validate();
  require(!records.empty(), Errc::empty_input, "no training records");

  DirectionTrainResult result;
  result.model = init_direction_model(cfg, train_cfg.seed);
  result.model.stats = compute_keypoint_stats(records);

  std::vector<PaddedSequence> padded;
  padded.reserve(records.size());
  for (const auto& r : records) padded.push_back(pad_record(r, result.model.stats, cfg.max_len));

  nn::AdamState adam;
  nn::DropoutRng drop{mix_key(train_cfg.seed, 0xd20), 0};
  const std::size_t n = padded.size();

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const double lr = train_cfg.schedule.lr(epoch);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(mix_key(train_cfg.seed, static_cast<std::uint64_t>(epoch) + 1, 0x0d));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t step = 0; step < n; ++step) {
      const PaddedSequence& seq = padded[order[step]];
      nn::Tape t;
      nn::StagedParams staged = nn::stage(t, result.model.params, true);
      nn::NodeId bottom = t.leaf(detail::player_matrix(seq.pairs, true));
      nn::NodeId top = t.leaf(detail::player_matrix(seq.pairs, false));
      nn::NodeId logits = transformer_logits(t, bottom, top, seq.mask, staged, cfg, true, drop);
      nn::NodeId loss = nn::masked_cross_entropy(t, logits, seq.labels,
                                                 static_cast<int>(DirectionToken::Pad));
      loss_sum += t.val(loss).values[0];
      t.backward(loss);
      nn::ParamGrads grads = nn::collect_grads(t, staged);
      nn::adam_step(result.model.params, grads, adam, lr, train_cfg.weight_decay);
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(n));
  }
  return result;
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

// Per-frame argmax over the three real classes; the Pad logit is never a
// candidate, so the output never contains Pad. Ties resolve to the lowest
// token code.
inline DirectionSequence predict_directions(const std::vector<geom::PlayerKeypointPair>& pairs,
                                            DirectionModel& model, const std::string& rally_id) {
  require(!pairs.empty(), Errc::empty_input, "cannot predict on an empty sequence");
  const std::size_t frames = pairs.size();
  if (!model.cfg.chunked_inference) {
    require(frames <= model.cfg.max_len, Errc::length_exceeded,
            "rally " + rally_id + " has " + std::to_string(frames) +
                " frames, exceeding the configured maximum " + std::to_string(model.cfg.max_len));
  }

  DirectionSequence seq;
  seq.rally_id = rally_id;
  seq.tokens.reserve(frames);
  nn::DropoutRng drop{0, 0};
  for (std::size_t at = 0; at < frames; at += model.cfg.max_len) {
    const std::size_t len = std::min(model.cfg.max_len, frames - at);
    std::vector<geom::PlayerKeypointPair> chunk(len);
    for (std::size_t f = 0; f < len; ++f) {
      chunk[f] = geom::normalize_pair(pairs[at + f], model.stats);
    }
    nn::Tape t;
    nn::StagedParams staged = nn::stage(t, model.params, false);
    nn::NodeId bottom = t.leaf(detail::player_matrix(chunk, true));
    nn::NodeId top = t.leaf(detail::player_matrix(chunk, false));
    std::vector<bool> mask(len, false);
    nn::NodeId logits = transformer_logits(t, bottom, top, mask, staged, model.cfg, false, drop);
    const nn::Tensor& vals = t.val(logits);
    for (std::size_t f = 0; f < len; ++f) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < 3; ++c) {
        if (vals.values[f * model.cfg.classes + c] > vals.values[f * model.cfg.classes + best]) {
          best = c;
        }
      }
      seq.tokens.push_back(static_cast<DirectionToken>(best));
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

inline constexpr const char* kDirectionKind = "direction-transformer";

inline void save_direction_model(const std::string& path, const DirectionModel& model) {
  io::Checkpoint ck;
  ck.kind = kDirectionKind;
  ck.meta["config"] = transformer_to_json(model.cfg).dump();
  for (const auto& [name, p] : model.params.items) {
    ck.tensors.emplace("param." + name + ".w", p.w);
    ck.tensors.emplace("param." + name + ".b", p.b);
  }
  nn::Tensor mean = nn::Tensor::zeros({34});
  nn::Tensor stddev = nn::Tensor::zeros({34});
  for (std::size_t k = 0; k < 34; ++k) {
    mean.values[k] = model.stats.mean[k];
    stddev.values[k] = model.stats.stddev[k];
  }
  ck.tensors.emplace("stats.mean", std::move(mean));
  ck.tensors.emplace("stats.std", std::move(stddev));
  io::save_checkpoint(path, ck);
}

inline DirectionModel load_direction_model(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  require(ck.kind == kDirectionKind, Errc::parse_failure,
          path + " holds a '" + ck.kind + "' checkpoint, expected direction-transformer");
  DirectionModel model;
  try {
    model.cfg = transformer_from_json(io::Json::parse(ck.meta.at("config")));
  } catch (const std::out_of_range&) {
    fail(Errc::parse_failure, path + ": checkpoint is missing config metadata");
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, path + ": " + e.what());
  }
  DirectionModel reference = init_direction_model(model.cfg, 0);
  for (const auto& [name, p] : reference.params.items) {
    auto w = ck.tensors.find("param." + name + ".w");
    auto b = ck.tensors.find("param." + name + ".b");
    require(w != ck.tensors.end() && b != ck.tensors.end(), Errc::parse_failure,
            path + ": checkpoint is missing parameter " + name);
    require(w->second.shape == p.w.shape && b->second.shape == p.b.shape, Errc::shape_mismatch,
            path + ": parameter " + name + " has unexpected shape");
    model.params.add(name, nn::Affine{w->second, b->second});
  }
  auto mean = ck.tensors.find("stats.mean");
  auto stddev = ck.tensors.find("stats.std");
  require(mean != ck.tensors.end() && stddev != ck.tensors.end(), Errc::parse_failure,
          path + ": checkpoint is missing keypoint statistics");
  require(mean->second.shape == nn::Shape{34} && stddev->second.shape == nn::Shape{34},
          Errc::shape_mismatch, path + ": keypoint statistics have unexpected shape");
  for (std::size_t k = 0; k < 34; ++k) {
    model.stats.mean[k] = mean->second.values[k];
    model.stats.stddev[k] = stddev->second.values[k];
  }
  model.stats.validate();
  return model;
}

}  // namespace hitframe::dir
