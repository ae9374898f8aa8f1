#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "hitframe/angle_cnn.hpp"
#include "hitframe/nn/gradcheck.hpp"
#include "hitframe/synth.hpp"
#include "test_util.hpp"

using namespace hitframe;
using namespace hitframe::angle;

namespace {

RgbFrame constant_frame(std::size_t h, std::size_t w, double v) {
  RgbFrame f;
  f.height = h;
  f.width = w;
  f.values.assign(3 * h * w, v);
  return f;
}

RgbFrame keyed_frame(std::size_t h, std::size_t w, std::uint64_t key) {
  RgbFrame f;
  f.height = h;
  f.width = w;
  f.values.resize(3 * h * w);
  Rng rng(mix_key(key, 0xf3a3e));
  for (double& v : f.values) v = rng.uniform();
  return f;
}

// Mirrors the synthetic generator's image recipe so [angle] tests can build
// labeled desk-scale datasets without touching the filesystem.
AngleDataset patterned_dataset(std::size_t count, std::uint64_t seed) {
  synth::SynthConfig scfg;
  scfg.image_hw = 32;
  PreprocessConfig pp;
  pp.resize_h = 32;
  pp.resize_w = 32;
  pp.crop = 32;
  AngleDataset out;
  for (std::size_t i = 0; i < count; ++i) {
    const bool high = i % 2 == 1;
    std::vector<std::uint8_t> img = synth::angle_image(scfg, mix_key(seed, i), high);
    out.frames.push_back(preprocess(frame_from_chw8(img.data(), 32, 32), pp));
    out.labels.push_back(high ? 1 : 0);
  }
  return out;
}

}  // namespace

TEST_CASE("preprocess resizes, crops, and normalizes to the configured shape", "[angle]") {
  PreprocessConfig pp;
  nn::Tensor out = preprocess(keyed_frame(1080, 1920, 1), pp);
  REQUIRE(out.shape == nn::Shape{3, 216, 216});

  // Any input resolution at or above 2x2 lands on the same output shape.
  for (std::size_t hw : {4, 37, 215, 216, 500}) {
    REQUIRE(preprocess(keyed_frame(hw, hw + 3, hw), pp).shape == nn::Shape{3, 216, 216});
  }
}

TEST_CASE("preprocess maps constant images through the z-score", "[angle]") {
  PreprocessConfig pp;
  const double v = 0.75;
  nn::Tensor out = preprocess(constant_frame(64, 48, v), pp);
  for (std::size_t c = 0; c < 3; ++c) {
    const double want = (v - pp.channel_means[c]) / pp.channel_stds[c];
    const std::size_t plane = 216 * 216;
    for (std::size_t i = 0; i < plane; i += 997) {
      REQUIRE_THAT(out.values[c * plane + i], Catch::Matchers::WithinAbs(want, 1e-12));
    }
  }
}

TEST_CASE("preprocess at native resize resolution keeps the center columns", "[angle]") {
  // 216x384 input skips resampling, so the crop must select columns 84..299.
  // Marker oracle: encode the column index in every pixel, then check edges.
  PreprocessConfig pp;
  RgbFrame f;
  f.height = 216;
  f.width = 384;
  f.values.resize(3 * 216 * 384);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < 216; ++r) {
      for (std::size_t col = 0; col < 384; ++col) {
        f.values[(c * 216 + r) * 384 + col] = double(col) / 1000.0;
      }
    }
  }
  nn::Tensor out = preprocess(f, pp);
  auto undo = [&](double z, std::size_t c) { return z * pp.channel_stds[c] + pp.channel_means[c]; };
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t plane = 216 * 216;
    REQUIRE_THAT(undo(out.values[c * plane + 0], c), Catch::Matchers::WithinAbs(0.084, 1e-9));
    REQUIRE_THAT(undo(out.values[c * plane + 215], c), Catch::Matchers::WithinAbs(0.299, 1e-9));
  }
}

TEST_CASE("preprocess rejects degenerate frames", "[angle]") {
  PreprocessConfig pp;
  REQUIRE_ERR(preprocess(constant_frame(1, 50, 0.5), pp), Errc::bad_argument);
  REQUIRE_ERR(preprocess(constant_frame(50, 1, 0.5), pp), Errc::bad_argument);

  RgbFrame bad = constant_frame(8, 8, 0.5);
  bad.values[3] = 1.5;
  REQUIRE_ERR(preprocess(bad, pp), Errc::out_of_range);

  PreprocessConfig zero_std;
  zero_std.channel_stds = {1.0, 0.0, 1.0};
  REQUIRE_ERR(preprocess(constant_frame(8, 8, 0.5), zero_std), Errc::bad_config);
}

TEST_CASE("forward pass produces one logit row per frame", "[angle]") {
  SaCnnConfig cfg = SaCnnConfig::desk();
  SaCnnModel model = init_sacnn(cfg, 1);
  nn::Tensor batch = nn::Tensor::zeros({8, 3, 32, 32});
  Rng rng(2);
  for (double& v : batch.values) v = rng.normal();
  REQUIRE_ERR(sacnn_forward(model, batch), Errc::missing_running_stats);
  nn::Tensor logits = sacnn_forward(model, batch, true);
  REQUIRE(logits.shape == nn::Shape{8, 2});
  logits = sacnn_forward(model, batch);
  REQUIRE(logits.shape == nn::Shape{8, 2});

  nn::Tensor bad = nn::Tensor::zeros({2, 3, 16, 16});
  REQUIRE_ERR(sacnn_forward(model, bad), Errc::shape_mismatch);
}

TEST_CASE("zero parameters collapse logits to the head bias and ties pick Other", "[angle]") {
  SaCnnConfig cfg = SaCnnConfig::desk();
  SaCnnModel model = init_sacnn(cfg, 1);
  for (auto& [name, p] : model.params.items) {
    std::fill(p.w.values.begin(), p.w.values.end(), 0.0);
    std::fill(p.b.values.begin(), p.b.values.end(), 0.0);
  }
  model.params.at("head").b.values = {0.25, 0.25};

  std::vector<nn::Tensor> frames;
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    nn::Tensor f = nn::Tensor::zeros({3, 32, 32});
    for (double& v : f.values) v = rng.normal();
    frames.push_back(std::move(f));
  }
  nn::Tensor batch = nn::Tensor::zeros({3, 3, 32, 32});
  for (int i = 0; i < 3; ++i) {
    std::copy(frames[i].values.begin(), frames[i].values.end(),
              batch.values.begin() + i * 3 * 32 * 32);
  }
  // Eval mode requires running statistics, so seed them with one training pass.
  sacnn_forward(model, batch, true);
  nn::Tensor logits = sacnn_forward(model, batch);
  for (double v : logits.values) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(0.25, 1e-12));

  // Exact ties resolve to class 0, which classify_stream maps to Other.
  rally::AngleStream stream = classify_stream(frames, model, "tie");
  REQUIRE(stream.tokens.size() == 3);
  for (auto t : stream.tokens) REQUIRE(t == rally::ShotAngleToken::Other);

  // Bias favoring class 1 flips every frame to High.
  model.params.at("head").b.values = {0.0, 1.0};
  stream = classify_stream(frames, model, "high");
  for (auto t : stream.tokens) REQUIRE(t == rally::ShotAngleToken::High);
}

TEST_CASE("tiny cnn end-to-end gradients match finite differences", "[angle]") {
  SaCnnConfig cfg;
  cfg.input_hw = 8;
  cfg.channels = {2};
  cfg.fc_width = 4;
  SaCnnModel ref = init_sacnn(cfg, 7);
  const std::vector<int> labels = {1, 0};

  std::vector<nn::Tensor> inputs;
  nn::Tensor x = nn::Tensor::zeros({2, 3, 8, 8});
  Rng rng(5);
  for (double& v : x.values) v = rng.normal();
  inputs.push_back(x);
  const std::vector<std::string> names = {block_conv_name(0), block_norm_name(0), "fc", "head"};
  for (const std::string& name : names) {
    inputs.push_back(ref.params.at(name).w);
    inputs.push_back(ref.params.at(name).b);
  }

  auto build = [&](nn::Tape& t, const std::vector<nn::NodeId>& ids) {
    nn::StagedParams staged;
    for (std::size_t k = 0; k < names.size(); ++k) {
      staged.emplace(names[k], nn::StagedAffine{ids[1 + 2 * k], ids[2 + 2 * k]});
    }
    std::vector<nn::BnStats> stats(1);
    nn::NodeId logits = sacnn_logits(t, ids[0], staged, cfg, stats, true);
    return nn::softmax_cross_entropy(t, logits, labels);
  };
  nn::GradCheckResult res = nn::grad_check(build, inputs);
  INFO("worst " << res.worst_input << "/" << res.worst_index << " analytic " << res.analytic
                << " numeric " << res.numeric);
  REQUIRE(res.max_rel_err <= 1e-5);
}

TEST_CASE("published learning-rate schedule decays at epochs 6, 12, 18", "[angle]") {
  AngleTrainConfig cfg;
  REQUIRE(cfg.epochs == 20);
  REQUIRE(cfg.weight_decay == 0.1);
  for (int e = 0; e <= 5; ++e) REQUIRE_THAT(cfg.schedule.lr(e), Catch::Matchers::WithinRel(1e-3, 1e-12));
  for (int e = 6; e <= 11; ++e) REQUIRE_THAT(cfg.schedule.lr(e), Catch::Matchers::WithinRel(1e-4, 1e-12));
  for (int e = 12; e <= 17; ++e) REQUIRE_THAT(cfg.schedule.lr(e), Catch::Matchers::WithinRel(1e-5, 1e-12));
  for (int e = 18; e <= 19; ++e) REQUIRE_THAT(cfg.schedule.lr(e), Catch::Matchers::WithinRel(1e-6, 1e-12));
}

TEST_CASE("zero training epochs leave the initialization untouched", "[angle]") {
  AngleDataset data = patterned_dataset(4, 11);
  AngleTrainConfig tc;
  tc.epochs = 0;
  tc.seed = 9;
  AngleTrainResult res = train_sacnn(data, SaCnnConfig::desk(), tc);
  SaCnnModel fresh = init_sacnn(SaCnnConfig::desk(), 9);
  for (const auto& [name, p] : fresh.params.items) {
    REQUIRE(res.model.params.at(name).w.values == p.w.values);
    REQUIRE(res.model.params.at(name).b.values == p.b.values);
  }
  REQUIRE(res.epoch_losses.empty());
}

TEST_CASE("single-class datasets are rejected", "[angle]") {
  AngleDataset data = patterned_dataset(4, 13);
  std::fill(data.labels.begin(), data.labels.end(), 1);
  AngleTrainConfig tc;
  tc.epochs = 1;
  REQUIRE_ERR(train_sacnn(data, SaCnnConfig::desk(), tc), Errc::degenerate_data);
}

TEST_CASE("memorization loss is non-increasing across epochs", "[angle]") {
  AngleDataset data = patterned_dataset(16, 17);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    AngleTrainConfig tc;
    tc.epochs = 6;
    tc.seed = seed;
    tc.batch_size = 16;
    AngleTrainResult res = train_sacnn(data, SaCnnConfig::desk(), tc);
    REQUIRE(res.epoch_losses.size() == 6);
    for (std::size_t e = 1; e < res.epoch_losses.size(); ++e) {
      REQUIRE(res.epoch_losses[e] <= res.epoch_losses[e - 1] + 1e-9);
    }
  }
}

TEST_CASE("desk training separates the two synthetic patterns", "[angle]") {
  AngleDataset train = patterned_dataset(64, 19);
  AngleDataset test = patterned_dataset(32, 23);
  AngleTrainConfig tc;
  tc.epochs = 3;
  tc.seed = 4;
  AngleTrainResult res = train_sacnn(train, SaCnnConfig::desk(), tc);

  rally::AngleStream pred = classify_stream(test.frames, res.model, "held-out");
  REQUIRE(pred.tokens.size() == test.frames.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.tokens.size(); ++i) {
    const auto want = test.labels[i] == 1 ? rally::ShotAngleToken::High
                                          : rally::ShotAngleToken::Other;
    correct += pred.tokens[i] == want;
  }
  REQUIRE(double(correct) / double(pred.tokens.size()) >= 0.95);

  // Same checkpoint, same frames: the stream is a pure function.
  rally::AngleStream again = classify_stream(test.frames, res.model, "held-out");
  REQUIRE(again.tokens == pred.tokens);
}

TEST_CASE("training is deterministic for a fixed seed", "[angle]") {
  AngleDataset data = patterned_dataset(12, 29);
  AngleTrainConfig tc;
  tc.epochs = 2;
  tc.seed = 21;
  AngleTrainResult a = train_sacnn(data, SaCnnConfig::desk(), tc);
  AngleTrainResult b = train_sacnn(data, SaCnnConfig::desk(), tc);
  REQUIRE(a.epoch_losses == b.epoch_losses);
  for (const auto& [name, p] : a.model.params.items) {
    REQUIRE(b.model.params.at(name).w.values == p.w.values);
    REQUIRE(b.model.params.at(name).b.values == p.b.values);
  }
}

TEST_CASE("checkpoint save and load reproduce the exact logits", "[angle]") {
  namespace fs = std::filesystem;
  AngleDataset data = patterned_dataset(8, 31);
  AngleTrainConfig tc;
  tc.epochs = 1;
  tc.seed = 2;
  AngleTrainResult res = train_sacnn(data, SaCnnConfig::desk(), tc);

  PreprocessConfig pp;
  pp.resize_h = 32;
  pp.resize_w = 32;
  pp.crop = 32;
  const std::string path = (fs::temp_directory_path() / "hitframe_angle.ckpt").string();
  save_sacnn(path, res.model, pp);
  LoadedSaCnn loaded = load_sacnn(path);
  REQUIRE(loaded.preprocess.crop == 32);
  REQUIRE(loaded.model.cfg.input_hw == res.model.cfg.input_hw);

  nn::Tensor batch = nn::Tensor::zeros({4, 3, 32, 32});
  for (std::size_t i = 0; i < 4; ++i) {
    std::copy(data.frames[i].values.begin(), data.frames[i].values.end(),
              batch.values.begin() + i * 3 * 32 * 32);
  }
  nn::Tensor before = sacnn_forward(res.model, batch);
  nn::Tensor after = sacnn_forward(loaded.model, batch);
  REQUIRE(before.values == after.values);

  // A checkpoint of a different kind is refused.
  io::Checkpoint stranger;
  stranger.kind = "direction-transformer";
  const std::string other = (fs::temp_directory_path() / "hitframe_stranger.ckpt").string();
  io::save_checkpoint(other, stranger);
  REQUIRE_ERR(load_sacnn(other), Errc::parse_failure);
}
