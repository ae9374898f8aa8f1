#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/io/binary.hpp"
#include "hitframe/io/jsonl.hpp"
#include "hitframe/nn/layers.hpp"
#include "hitframe/nn/optim.hpp"
#include "hitframe/nn/params.hpp"
#include "hitframe/rally.hpp"
#include "hitframe/tensor.hpp"

namespace hitframe::angle {

// ---------------------------------------------------------------------------
// frames and preprocessing
// ---------------------------------------------------------------------------

// Channel-major RGB intensities in [0,1].
struct RgbFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // 3*height*width, CHW

  void validate() const {
    require(height >= 1 && width >= 1, Errc::shape_mismatch, "empty frame");
    require(values.size() == 3 * height * width, Errc::shape_mismatch,
            "frame value count does not match 3xHxW");
    for (double v : values) {
      require(v >= 0.0 && v <= 1.0, Errc::out_of_range, "frame intensity outside [0,1]");
    }
  }
};

inline RgbFrame frame_from_chw8(const std::uint8_t* chw, std::size_t height, std::size_t width) {
  RgbFrame f;
  f.height = height;
  f.width = width;
  f.values.resize(3 * height * width);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = chw[i] / 255.0;
  return f;
}

inline RgbFrame frame_from_rgb8(const std::uint8_t* hwc, std::size_t height, std::size_t width) {
  RgbFrame f;
  f.height = height;
  f.width = width;
  f.values.resize(3 * height * width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        f.values[(c * height + i) * width + j] = hwc[(i * width + j) * 3 + c] / 255.0;
      }
    }
  }
  return f;
}

struct PreprocessConfig {
  std::size_t resize_h = 216;
  std::size_t resize_w = 384;
  std::size_t crop = 216;
  std::array<double, 3> channel_means = {0.485, 0.456, 0.406};
  std::array<double, 3> channel_stds = {0.229, 0.224, 0.225};

  void validate() const {
    require(crop >= 1, Errc::bad_config, "crop must be at least 1");
    require(crop <= std::min(resize_h, resize_w), Errc::bad_config,
            "crop must not exceed the resize target");
    for (double s : channel_stds) {
      require(s > 0.0, Errc::bad_config, "channel stds must be positive");
    }
  }
};

inline io::Json preprocess_to_json(const PreprocessConfig& cfg) {
  io::Json j;
  j["resize_h"] = cfg.resize_h;
  j["resize_w"] = cfg.resize_w;
  j["crop"] = cfg.crop;
  j["channel_means"] = cfg.channel_means;
  j["channel_stds"] = cfg.channel_stds;
  return j;
}

inline PreprocessConfig preprocess_from_json(const io::Json& j) {
  PreprocessConfig cfg;
  try {
    cfg.resize_h = j.at("resize_h").get<std::size_t>();
    cfg.resize_w = j.at("resize_w").get<std::size_t>();
    cfg.crop = j.at("crop").get<std::size_t>();
    cfg.channel_means = j.at("channel_means").get<std::array<double, 3>>();
    cfg.channel_stds = j.at("channel_stds").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("preprocess config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// Bilinear resize with half-pixel sample centers, then center crop, then
// per-channel z-score normalization.
inline nn::Tensor preprocess(const RgbFrame& frame, const PreprocessConfig& cfg) {
  frame.validate();
  cfg.validate();
  require(frame.height >= 2 && frame.width >= 2, Errc::bad_argument,
          "frame must be at least 2x2 for resizing");

  const std::size_t rh = cfg.resize_h;
  const std::size_t rw = cfg.resize_w;
  std::vector<double> resized(3 * rh * rw);
  const double sy = static_cast<double>(frame.height) / static_cast<double>(rh);
  const double sx = static_cast<double>(frame.width) / static_cast<double>(rw);
  for (std::size_t c = 0; c < 3; ++c) {
    const double* src = frame.values.data() + c * frame.height * frame.width;
    double* dst = resized.data() + c * rh * rw;
    for (std::size_t r = 0; r < rh; ++r) {
      double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(frame.height - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, frame.height - 1);
      const double wy = fy - static_cast<double>(y0);
      for (std::size_t col = 0; col < rw; ++col) {
        double fx = (static_cast<double>(col) + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(frame.width - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, frame.width - 1);
        const double wx = fx - static_cast<double>(x0);
        const double top = src[y0 * frame.width + x0] * (1.0 - wx) + src[y0 * frame.width + x1] * wx;
        const double bot = src[y1 * frame.width + x0] * (1.0 - wx) + src[y1 * frame.width + x1] * wx;
        dst[r * rw + col] = top * (1.0 - wy) + bot * wy;
      }
    }
  }

  const std::size_t row_off = (rh - cfg.crop) / 2;
  const std::size_t col_off = (rw - cfg.crop) / 2;
  nn::Tensor out = nn::Tensor::zeros({3, cfg.crop, cfg.crop});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < cfg.crop; ++r) {
      for (std::size_t col = 0; col < cfg.crop; ++col) {
        const double v = resized[(c * rh + row_off + r) * rw + col_off + col];
        out.values[(c * cfg.crop + r) * cfg.crop + col] =
            (v - cfg.channel_means[c]) / cfg.channel_stds[c];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// model configuration
// ---------------------------------------------------------------------------

struct SaCnnConfig {
  std::size_t input_hw = 216;
  std::vector<std::size_t> channels = {16, 32, 64};
  std::size_t fc_width = 128;
  std::size_t classes = 2;
  bool faithful_relu_head = false;

  std::size_t blocks() const { return channels.size(); }

  std::size_t spatial_out() const {
    std::size_t hw = input_hw;
    for (std::size_t i = 0; i < blocks(); ++i) hw /= 2;
    return hw;
  }

  std::size_t flat_width() const { return channels.back() * spatial_out() * spatial_out(); }

  void validate() const {
    require(!channels.empty(), Errc::bad_config, "at least one conv block required");
    require(classes == 2, Errc::bad_config, "shot-angle classifier is strictly two-class");
    require(fc_width >= 1, Errc::bad_config, "fc width must be positive");
    std::size_t hw = input_hw;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      require(channels[i] >= 1, Errc::bad_config, "block channels must be positive");
      require(hw >= 2 && hw % 2 == 0, Errc::bad_config,
              "input edge must halve cleanly through every pooling stage");
      hw /= 2;
    }
  }

  static SaCnnConfig desk() {
    SaCnnConfig cfg;
    cfg.input_hw = 32;
    cfg.channels = {4, 8, 16};
    cfg.fc_width = 32;
    return cfg;
  }

  static SaCnnConfig full_scale() { return SaCnnConfig{}; }
};

inline io::Json sacnn_to_json(const SaCnnConfig& cfg) {
  io::Json j;
  j["input_hw"] = cfg.input_hw;
  j["channels"] = cfg.channels;
  j["fc_width"] = cfg.fc_width;
  j["classes"] = cfg.classes;
  j["faithful_relu_head"] = cfg.faithful_relu_head;
  return j;
}

inline SaCnnConfig sacnn_from_json(const io::Json& j) {
  SaCnnConfig cfg;
  try {
    cfg.input_hw = j.at("input_hw").get<std::size_t>();
    cfg.channels = j.at("channels").get<std::vector<std::size_t>>();
    cfg.fc_width = j.at("fc_width").get<std::size_t>();
    cfg.classes = j.at("classes").get<std::size_t>();
    cfg.faithful_relu_head = j.at("faithful_relu_head").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("classifier config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

struct SaCnnModel {
  SaCnnConfig cfg;
  nn::ParameterSet params;
  std::vector<nn::BnStats> bn_stats;
};

inline std::string block_conv_name(std::size_t i) { return "block" + std::to_string(i) + ".conv"; }
inline std::string block_norm_name(std::size_t i) { return "block" + std::to_string(i) + ".norm"; }

inline SaCnnModel init_sacnn(const SaCnnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SaCnnModel model;
  model.cfg = cfg;
  Rng rng(mix_key(seed, 0x5ac7));
  std::size_t in_ch = 3;
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    model.params.add(block_conv_name(i), nn::init_conv3x3(rng, in_ch, cfg.channels[i]));
    model.params.add(block_norm_name(i), nn::init_norm(cfg.channels[i]));
    in_ch = cfg.channels[i];
  }
  model.params.add("fc", nn::init_linear(rng, cfg.flat_width(), cfg.fc_width));
  model.params.add("head", nn::init_linear(rng, cfg.fc_width, cfg.classes));
  model.bn_stats.resize(cfg.blocks());
  return model;
}

// ---------------------------------------------------------------------------
// forward passes
// ---------------------------------------------------------------------------

inline nn::NodeId sacnn_logits(nn::Tape& t, nn::NodeId x, const nn::StagedParams& staged,
                               const SaCnnConfig& cfg, std::vector<nn::BnStats>& bn_stats,
                               bool training) {
  require(bn_stats.size() == cfg.blocks(), Errc::shape_mismatch,
          "running-stat slot count does not match block count");
  const nn::Shape& in_shape = t.val(x).shape;
  require(in_shape.size() == 4 && in_shape[1] == 3 && in_shape[2] == cfg.input_hw &&
              in_shape[3] == cfg.input_hw,
          Errc::shape_mismatch, "batch shape does not match classifier config");
  nn::NodeId h = x;
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    h = nn::conv_block(t, h, staged.at(block_conv_name(i)), staged.at(block_norm_name(i)),
                       bn_stats[i], training);
  }
  const std::size_t n = t.val(h).shape[0];
  h = nn::reshape(t, h, {n, cfg.flat_width()});
  h = nn::relu(t, nn::affine(t, h, staged.at("fc").w, staged.at("fc").b));
  h = nn::affine(t, h, staged.at("head").w, staged.at("head").b);
  if (cfg.faithful_relu_head) h = nn::relu(t, h);
  return h;
}

inline nn::Tensor sacnn_forward(SaCnnModel& model, const nn::Tensor& batch, bool training = false) {
  nn::Tape t;
  nn::StagedParams staged = nn::stage(t, model.params, false);
  nn::NodeId x = t.leaf(batch);
  nn::NodeId logits = sacnn_logits(t, x, staged, model.cfg, model.bn_stats, training);
  return t.val(logits);
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct AngleDataset {
  std::vector<nn::Tensor> frames;  // each 3×hw×hw, already preprocessed
  std::vector<int> labels;         // 0 = Other, 1 = High

  void validate(const SaCnnConfig& cfg) const {
    require(!frames.empty(), Errc::empty_input, "dataset has no frames");
    require(frames.size() == labels.size(), Errc::shape_mismatch,
            "frame and label counts differ");
    const nn::Shape want{3, cfg.input_hw, cfg.input_hw};
    for (const auto& f : frames) {
      require(f.shape == want, Errc::shape_mismatch, "frame shape does not match config");
    }
    for (int l : labels) {
      require(l == 0 || l == 1, Errc::label_out_of_range, "labels must be 0 or 1");
    }
  }
};

struct AngleTrainConfig {
  int epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double weight_decay = 0.1;
  nn::LrSchedule schedule{1e-3, 0.1, {6, 12, 18}};

  void validate() const {
    require(epochs >= 0, Errc::bad_config, "epochs must be non-negative");
    require(batch_size >= 1, Errc::bad_config, "batch size must be positive");
    require(weight_decay >= 0.0, Errc::bad_config, "weight decay must be non-negative");
    schedule.validate();
  }
};

struct AngleTrainResult {
  SaCnnModel model;
  std::vector<double> epoch_losses;  // mean per-sample loss per epoch
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(key);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  return idx;
}

inline nn::Tensor stack_frames(const std::vector<nn::Tensor>& frames,
                               const std::vector<std::size_t>& which) {
  const nn::Shape& one = frames[which.front()].shape;
  nn::Shape shape{which.size()};
  shape.insert(shape.end(), one.begin(), one.end());
  nn::Tensor out = nn::Tensor::zeros(shape);
  const std::size_t stride = nn::shape_numel(one);
  for (std::size_t b = 0; b < which.size(); ++b) {
    const auto& src = frames[which[b]].values;
    std::copy(src.begin(), src.end(), out.values.begin() + b * stride);
  }
  return out;
}

}  // namespace detail

inline AngleTrainResult train_sacnn(const AngleDataset& dataset, const SaCnnConfig& cfg,
                                    const AngleTrainConfig& train_cfg) {
  cfg.validate();
  train_cfg.validate();
  dataset.validate(cfg);
  bool has0 = false;
  bool has1 = false;
  for (int l : dataset.labels) (l == 0 ? has0 : has1) = true;
  require(has0 && has1, Errc::degenerate_data, "training set must contain both classes");

  AngleTrainResult result;
  result.model = init_sacnn(cfg, train_cfg.seed);
  nn::AdamState adam;
  const std::size_t n = dataset.frames.size();

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const double lr = train_cfg.schedule.lr(epoch);
    const auto order = detail::shuffled_indices(
        n, mix_key(train_cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += train_cfg.batch_size) {
      const std::size_t b1 = std::min(n, b0 + train_cfg.batch_size);
      std::vector<std::size_t> which(order.begin() + b0, order.begin() + b1);
      std::vector<int> labels(which.size());
      for (std::size_t i = 0; i < which.size(); ++i) labels[i] = dataset.labels[which[i]];

      nn::Tape t;
      nn::StagedParams staged = nn::stage(t, result.model.params, true);
      nn::NodeId x = t.leaf(detail::stack_frames(dataset.frames, which));
      nn::NodeId logits =
          sacnn_logits(t, x, staged, cfg, result.model.bn_stats, true);
      nn::NodeId loss = nn::softmax_cross_entropy(t, logits, labels);
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
// stream classification
// ---------------------------------------------------------------------------

inline rally::AngleStream classify_stream(const std::vector<nn::Tensor>& frames, SaCnnModel& model,
                                          const std::string& video_id, double fps = 30.0) {
  rally::AngleStream stream;
  stream.video_id = video_id;
  stream.fps = fps;
  stream.tokens.reserve(frames.size());
  constexpr std::size_t kChunk = 16;
  for (std::size_t at = 0; at < frames.size(); at += kChunk) {
    std::vector<std::size_t> which;
    for (std::size_t i = at; i < std::min(frames.size(), at + kChunk); ++i) which.push_back(i);
    nn::Tensor logits = sacnn_forward(model, detail::stack_frames(frames, which), false);
    for (std::size_t b = 0; b < which.size(); ++b) {
      const double other = logits.values[b * model.cfg.classes + 0];
      const double high = logits.values[b * model.cfg.classes + 1];
      stream.tokens.push_back(high > other ? rally::ShotAngleToken::High
                                           : rally::ShotAngleToken::Other);
    }
  }
  return stream;
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

inline constexpr const char* kSaCnnKind = "shot-angle-cnn";

inline void save_sacnn(const std::string& path, const SaCnnModel& model,
                       const PreprocessConfig& pp) {
  io::Checkpoint ck;
  ck.kind = kSaCnnKind;
  ck.meta["config"] = sacnn_to_json(model.cfg).dump();
  ck.meta["preprocess"] = preprocess_to_json(pp).dump();
  for (const auto& [name, p] : model.params.items) {
    ck.tensors.emplace("param." + name + ".w", p.w);
    ck.tensors.emplace("param." + name + ".b", p.b);
  }
  for (std::size_t i = 0; i < model.bn_stats.size(); ++i) {
    const auto& s = model.bn_stats[i];
    ck.meta["bn." + std::to_string(i) + ".initialized"] = s.initialized ? "1" : "0";
    if (s.initialized) {
      ck.tensors.emplace("bn." + std::to_string(i) + ".mean", s.running_mean);
      ck.tensors.emplace("bn." + std::to_string(i) + ".var", s.running_var);
    }
  }
  io::save_checkpoint(path, ck);
}

struct LoadedSaCnn {
  SaCnnModel model;
  PreprocessConfig preprocess;
};

inline LoadedSaCnn load_sacnn(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  require(ck.kind == kSaCnnKind, Errc::parse_failure,
          path + " holds a '" + ck.kind + "' checkpoint, expected shot-angle-cnn");
  LoadedSaCnn out;
  try {
    out.model.cfg = sacnn_from_json(io::Json::parse(ck.meta.at("config")));
    out.preprocess = preprocess_from_json(io::Json::parse(ck.meta.at("preprocess")));
  } catch (const std::out_of_range&) {
    fail(Errc::parse_failure, path + ": checkpoint is missing config metadata");
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, path + ": " + e.what());
  }
  SaCnnModel reference = init_sacnn(out.model.cfg, 0);
  for (const auto& [name, p] : reference.params.items) {
    auto w = ck.tensors.find("param." + name + ".w");
    auto b = ck.tensors.find("param." + name + ".b");
    require(w != ck.tensors.end() && b != ck.tensors.end(), Errc::parse_failure,
            path + ": checkpoint is missing parameter " + name);
    require(w->second.shape == p.w.shape && b->second.shape == p.b.shape, Errc::shape_mismatch,
            path + ": parameter " + name + " has unexpected shape");
    out.model.params.add(name, nn::Affine{w->second, b->second});
  }
  out.model.bn_stats.resize(out.model.cfg.blocks());
  for (std::size_t i = 0; i < out.model.bn_stats.size(); ++i) {
    auto flag = ck.meta.find("bn." + std::to_string(i) + ".initialized");
    if (flag != ck.meta.end() && flag->second == "1") {
      auto mean = ck.tensors.find("bn." + std::to_string(i) + ".mean");
      auto var = ck.tensors.find("bn." + std::to_string(i) + ".var");
      require(mean != ck.tensors.end() && var != ck.tensors.end(), Errc::parse_failure,
              path + ": checkpoint is missing running stats for block " + std::to_string(i));
      out.model.bn_stats[i].running_mean = mean->second;
      out.model.bn_stats[i].running_var = var->second;
      out.model.bn_stats[i].initialized = true;
    }
  }
  return out;
}

}  // namespace hitframe::angle
