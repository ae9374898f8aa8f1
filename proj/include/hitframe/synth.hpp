#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/detector.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/geometry.hpp"
#include "hitframe/io/binary.hpp"
#include "hitframe/io/jsonl.hpp"
#include "hitframe/kseq.hpp"
#include "hitframe/rally.hpp"

namespace hitframe::synth {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

inline geom::CourtKeypoints default_court() {
  geom::CourtKeypoints c;
  c.upper_left = {760.0, 300.0};
  c.upper_right = {1160.0, 300.0};
  c.middle_left = {700.0, 520.0};
  c.middle_right = {1220.0, 520.0};
  c.bottom_left = {600.0, 900.0};
  c.bottom_right = {1320.0, 900.0};
  return c;
}

enum class ImageMode { none, all, test_only };

inline const char* image_mode_name(ImageMode m) {
  switch (m) {
    case ImageMode::none: return "none";
    case ImageMode::all: return "all";
    case ImageMode::test_only: return "test-only";
  }
  fail(Errc::bad_argument, "unknown image mode");
}

inline ImageMode image_mode_from(const std::string& s) {
  if (s == "none") return ImageMode::none;
  if (s == "all") return ImageMode::all;
  if (s == "test-only") return ImageMode::test_only;
  fail(Errc::parse_failure, "unknown image mode '" + s + "'");
}

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t rallies = 10;
  double fps = 30.0;
  std::size_t run_min = 6;
  std::size_t run_max = 14;
  std::size_t runs_min = 3;
  std::size_t runs_max = 9;
  std::size_t lead_min = 4;
  std::size_t lead_max = 10;
  std::size_t tail_min = 4;
  std::size_t tail_max = 10;
  std::size_t gap_min = 6;
  std::size_t gap_max = 16;
  double noise_std = 0.5;
  std::size_t distractors_max = 2;
  geom::CourtKeypoints court = default_court();
  double train_ratio = 0.8;
  ImageMode images = ImageMode::none;
  std::size_t image_hw = 32;

  std::size_t train_count() const {
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(rallies) * train_ratio));
  }

  void validate() const {
    require(rallies >= 1 && rallies <= 9999, Errc::bad_config,
            "rally count must lie in [1, 9999]");
    require(fps > 0.0, Errc::bad_config, "fps must be positive");
    require(run_min >= 1 && run_min <= run_max, Errc::bad_config,
            "direction run range must satisfy 1 <= min <= max");
    require(runs_min >= 1 && runs_min <= runs_max, Errc::bad_config,
            "run count range must satisfy 1 <= min <= max");
    require(lead_min >= 1 && lead_min <= lead_max, Errc::bad_config,
            "lead range must satisfy 1 <= min <= max");
    require(tail_min >= 1 && tail_min <= tail_max, Errc::bad_config,
            "tail range must satisfy 1 <= min <= max");
    require(gap_min >= 1 && gap_min <= gap_max, Errc::bad_config,
            "gap range must satisfy 1 <= min <= max");
    require(noise_std >= 0.0, Errc::bad_config, "noise std must be non-negative");
    require(train_ratio >= 0.0 && train_ratio <= 1.0, Errc::bad_config,
            "train ratio must lie in [0,1]");
    require(image_hw >= 16 && image_hw % 8 == 0, Errc::bad_config,
            "image edge must be a multiple of 8 and at least 16");
    court.validate();
  }
};

inline io::Json court_to_json(const geom::CourtKeypoints& c) {
  io::Json j;
  j["upper_left"] = io::Json::array({c.upper_left.x, c.upper_left.y});
  j["upper_right"] = io::Json::array({c.upper_right.x, c.upper_right.y});
  j["middle_left"] = io::Json::array({c.middle_left.x, c.middle_left.y});
  j["middle_right"] = io::Json::array({c.middle_right.x, c.middle_right.y});
  j["bottom_left"] = io::Json::array({c.bottom_left.x, c.bottom_left.y});
  j["bottom_right"] = io::Json::array({c.bottom_right.x, c.bottom_right.y});
  return j;
}

inline geom::CourtKeypoints court_from_json(const io::Json& j) {
  auto pt = [&](const char* name) {
    const io::Json& p = j.at(name);
    require(p.is_array() && p.size() == 2, Errc::parse_failure,
            std::string("court point ") + name + " must be an [x, y] pair");
    return geom::Point2{p[0].get<double>(), p[1].get<double>()};
  };
  geom::CourtKeypoints c;
  try {
    c.upper_left = pt("upper_left");
    c.upper_right = pt("upper_right");
    c.middle_left = pt("middle_left");
    c.middle_right = pt("middle_right");
    c.bottom_left = pt("bottom_left");
    c.bottom_right = pt("bottom_right");
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("court geometry: ") + e.what());
  }
  return c;
}

inline io::Json synth_to_json(const SynthConfig& cfg) {
  io::Json j;
  j["seed"] = cfg.seed;
  j["rallies"] = cfg.rallies;
  j["fps"] = cfg.fps;
  j["run_min"] = cfg.run_min;
  j["run_max"] = cfg.run_max;
  j["runs_min"] = cfg.runs_min;
  j["runs_max"] = cfg.runs_max;
  j["lead_min"] = cfg.lead_min;
  j["lead_max"] = cfg.lead_max;
  j["tail_min"] = cfg.tail_min;
  j["tail_max"] = cfg.tail_max;
  j["gap_min"] = cfg.gap_min;
  j["gap_max"] = cfg.gap_max;
  j["noise_std"] = cfg.noise_std;
  j["distractors_max"] = cfg.distractors_max;
  j["court"] = court_to_json(cfg.court);
  j["train_ratio"] = cfg.train_ratio;
  j["images"] = image_mode_name(cfg.images);
  j["image_hw"] = cfg.image_hw;
  return j;
}

inline SynthConfig synth_from_json(const io::Json& j) {
  SynthConfig cfg;
  try {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.rallies = j.at("rallies").get<std::size_t>();
    cfg.fps = j.at("fps").get<double>();
    cfg.run_min = j.at("run_min").get<std::size_t>();
    cfg.run_max = j.at("run_max").get<std::size_t>();
    cfg.runs_min = j.at("runs_min").get<std::size_t>();
    cfg.runs_max = j.at("runs_max").get<std::size_t>();
    cfg.lead_min = j.at("lead_min").get<std::size_t>();
    cfg.lead_max = j.at("lead_max").get<std::size_t>();
    cfg.tail_min = j.at("tail_min").get<std::size_t>();
    cfg.tail_max = j.at("tail_max").get<std::size_t>();
    cfg.gap_min = j.at("gap_min").get<std::size_t>();
    cfg.gap_max = j.at("gap_max").get<std::size_t>();
    cfg.noise_std = j.at("noise_std").get<double>();
    cfg.distractors_max = j.at("distractors_max").get<std::size_t>();
    cfg.court = court_from_json(j.at("court"));
    cfg.train_ratio = j.at("train_ratio").get<double>();
    cfg.images = image_mode_from(j.at("images").get<std::string>());
    cfg.image_hw = j.at("image_hw").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// rally structure
// ---------------------------------------------------------------------------

struct SynthRally {
  std::string rally_id;
  std::string video_id;
  rally::RallySegment segment;
  dir::DirectionSequence directions;
  std::vector<geom::PlayerKeypointPair> pairs;
  std::vector<long long> hits_local;
  std::vector<long long> hits_global;
};

namespace detail {

struct RallyPlan {
  std::size_t gap_before = 0;
  std::size_t lead = 0;
  std::size_t tail = 0;
  std::vector<std::size_t> run_lengths;
  dir::DirectionToken first_run = dir::DirectionToken::B;
  double center_x = 960.0;

  std::size_t span() const {
    std::size_t s = lead + tail;
    for (std::size_t r : run_lengths) s += r;
    return s;
  }
};

inline RallyPlan plan_rally(const SynthConfig& cfg, std::size_t index) {
  RallyPlan plan;
  Rng rs(mix_key(cfg.seed, index, 0xA11));
  plan.lead = rs.range(cfg.lead_min, cfg.lead_max);
  plan.tail = rs.range(cfg.tail_min, cfg.tail_max);
  const std::size_t runs = rs.range(cfg.runs_min, cfg.runs_max);
  plan.first_run = rs.below(2) == 0 ? dir::DirectionToken::B : dir::DirectionToken::U;
  plan.run_lengths.resize(runs);
  for (auto& r : plan.run_lengths) r = rs.range(cfg.run_min, cfg.run_max);
  plan.center_x = 960.0 + rs.uniform(-60.0, 60.0);
  Rng rg(mix_key(cfg.seed, index, 0x6A9));
  plan.gap_before = rg.range(cfg.gap_min, cfg.gap_max);
  return plan;
}

// COCO-ordered template offsets as fractions of player height, x then y.
inline const std::array<geom::Point2, 17>& skeleton_template() {
  static const std::array<geom::Point2, 17> kTemplate = {{
      {0.00, -0.45},  {-0.03, -0.48}, {0.03, -0.48},  {-0.06, -0.46}, {0.06, -0.46},
      {-0.13, -0.30}, {0.13, -0.30},  {-0.18, -0.12}, {0.18, -0.12},  {-0.20, 0.02},
      {0.20, 0.02},   {-0.09, 0.00},  {0.09, 0.00},   {-0.10, 0.25},  {0.10, 0.25},
      {-0.09, 0.50},  {0.09, 0.50},
  }};
  return kTemplate;
}

constexpr std::size_t kLeftWrist = 9;
constexpr std::size_t kRightWrist = 10;

inline geom::SkeletonKeypoints place_skeleton(double cx, double cy, double height,
                                              double wrist_raise, double wrist_spike) {
  geom::SkeletonKeypoints s;
  const auto& tpl = skeleton_template();
  for (std::size_t k = 0; k < geom::SkeletonKeypoints::kCount; ++k) {
    s.pts[k].x = cx + tpl[k].x * height;
    s.pts[k].y = cy + tpl[k].y * height;
  }
  s.pts[kLeftWrist].y += wrist_raise * height;
  s.pts[kRightWrist].y += (wrist_raise + wrist_spike) * height;
  return s;
}

// Poses for one frame of a rally. The direction signal is a persistent wrist
// raise on the player the shuttle is flying away from, a decaying spike right
// after their hit, and a small lunge toward the net.
inline geom::PlayerKeypointPair pose_pair(const RallyPlan& plan, dir::DirectionToken tok,
                                          std::size_t run_pos, std::size_t frame_in_rally) {
  const double sway = 4.0 * std::sin(2.0 * 3.14159265358979323846 *
                                     static_cast<double>(frame_in_rally) / 40.0);
  const double spike =
      run_pos < 3 ? -0.12 * std::pow(0.5, static_cast<double>(run_pos)) : 0.0;

  double bottom_raise = 0.0, bottom_spike = 0.0, bottom_lunge = 0.0;
  double top_raise = 0.0, top_spike = 0.0, top_lunge = 0.0;
  if (tok == dir::DirectionToken::U) {
    bottom_raise = -0.50;
    bottom_spike = spike;
    bottom_lunge = -12.0;
  } else if (tok == dir::DirectionToken::B) {
    top_raise = -0.50;
    top_spike = spike;
    top_lunge = 8.0;
  }

  geom::PlayerKeypointPair pair;
  pair.bottom_player = place_skeleton(plan.center_x + sway, 670.0 + bottom_lunge, 260.0,
                                      bottom_raise, bottom_spike);
  pair.top_player = place_skeleton(plan.center_x - sway, 400.0 + top_lunge, 140.0,
                                   top_raise, top_spike);
  return pair;
}

inline void add_noise(geom::SkeletonKeypoints& s, const SynthConfig& cfg, std::size_t rally_index,
                      long long global_frame, std::size_t player_channel) {
  if (cfg.noise_std == 0.0) return;
  for (std::size_t k = 0; k < geom::SkeletonKeypoints::kCount; ++k) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      const std::uint64_t channel = (player_channel << 6) | (k << 1) | axis;
      Rng rng(mix_key(cfg.seed, rally_index, static_cast<std::uint64_t>(global_frame), channel));
      double& coord = axis == 0 ? s.pts[k].x : s.pts[k].y;
      coord += rng.normal() * cfg.noise_std;
    }
  }
}

inline geom::SkeletonKeypoints idle_distractor(const SynthConfig& cfg, std::size_t rally_index,
                                               long long global_frame, std::size_t which) {
  Rng rng(mix_key(cfg.seed, rally_index, static_cast<std::uint64_t>(global_frame),
                  0x400 + (which << 6)));
  const double cx = rng.below(2) == 0 ? 250.0 + rng.uniform(-40.0, 40.0)
                                      : 1670.0 + rng.uniform(-40.0, 40.0);
  const double cy = rng.uniform(380.0, 820.0);
  geom::SkeletonKeypoints s = place_skeleton(cx, cy, 100.0, 0.0, 0.0);
  add_noise(s, cfg, rally_index, global_frame, 0x10 + which);
  return s;
}

}  // namespace detail

inline std::size_t rally_span(const SynthConfig& cfg, std::size_t index) {
  return detail::plan_rally(cfg, index).span();
}

inline std::size_t rally_gap(const SynthConfig& cfg, std::size_t index) {
  return detail::plan_rally(cfg, index).gap_before;
}

inline std::string split_video_id(bool train) {
  return train ? "synth-train" : "synth-test";
}

inline SynthRally generate_rally(const SynthConfig& cfg, std::size_t rally_index) {
  cfg.validate();
  require(rally_index < cfg.rallies, Errc::out_of_range, "rally index beyond configured count");

  const std::size_t train_count = cfg.train_count();
  const bool in_train = rally_index < train_count;
  const std::size_t video_first = in_train ? 0 : train_count;

  std::size_t start = 0;
  for (std::size_t j = video_first; j < rally_index; ++j) {
    const auto dims = detail::plan_rally(cfg, j);
    start += dims.gap_before + dims.span();
  }
  const detail::RallyPlan plan = detail::plan_rally(cfg, rally_index);
  start += plan.gap_before;

  SynthRally out;
  out.video_id = split_video_id(in_train);
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "%s-r%04zu", out.video_id.c_str(),
                rally_index - video_first);
  out.rally_id = idbuf;
  out.segment = rally::RallySegment{start, start + plan.span() - 1};
  out.directions.rally_id = out.rally_id;

  std::vector<std::size_t> run_pos;
  for (std::size_t i = 0; i < plan.lead; ++i) {
    out.directions.tokens.push_back(dir::DirectionToken::S);
    run_pos.push_back(i);
  }
  dir::DirectionToken tok = plan.first_run;
  for (std::size_t r = 0; r < plan.run_lengths.size(); ++r) {
    out.hits_local.push_back(static_cast<long long>(out.directions.tokens.size()));
    for (std::size_t i = 0; i < plan.run_lengths[r]; ++i) {
      out.directions.tokens.push_back(tok);
      run_pos.push_back(i);
    }
    tok = tok == dir::DirectionToken::B ? dir::DirectionToken::U : dir::DirectionToken::B;
  }
  for (std::size_t i = 0; i < plan.tail; ++i) {
    out.directions.tokens.push_back(dir::DirectionToken::S);
    run_pos.push_back(i);
  }

  for (long long h : out.hits_local) out.hits_global.push_back(out.segment.start_frame + h);

  out.pairs.reserve(out.directions.tokens.size());
  for (std::size_t f = 0; f < out.directions.tokens.size(); ++f) {
    geom::PlayerKeypointPair pair =
        detail::pose_pair(plan, out.directions.tokens[f], run_pos[f], f);
    const long long global_frame = out.segment.start_frame + static_cast<long long>(f);
    detail::add_noise(pair.bottom_player, cfg, rally_index, global_frame, 0);
    detail::add_noise(pair.top_player, cfg, rally_index, global_frame, 1);
    out.pairs.push_back(pair);
  }
  return out;
}

// ---------------------------------------------------------------------------
// shot-angle frame imagery
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint8_t key_byte(std::uint64_t key, std::uint64_t salt) {
  return static_cast<std::uint8_t>(mix_key(key, salt) & 0xff);
}

inline void draw_line(std::vector<std::uint8_t>& img, std::size_t hw, double x0, double y0,
                      double x1, double y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const std::size_t steps = hw * 2;
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps);
    const long long px = std::llround(x0 + (x1 - x0) * t);
    const long long py = std::llround(y0 + (y1 - y0) * t);
    if (px < 0 || py < 0 || px >= static_cast<long long>(hw) || py >= static_cast<long long>(hw)) {
      continue;
    }
    const std::size_t at = static_cast<std::size_t>(py) * hw + static_cast<std::size_t>(px);
    img[at] = r;
    img[hw * hw + at] = g;
    img[2 * hw * hw + at] = b;
  }
}

}  // namespace detail

// CHW byte image for one frame: High frames show a bright court trapezoid on
// a dark floor, Other frames are unstructured per-pixel noise.
inline std::vector<std::uint8_t> angle_image(const SynthConfig& cfg, std::uint64_t frame_key,
                                             bool high) {
  const std::size_t hw = cfg.image_hw;
  std::vector<std::uint8_t> img(3 * hw * hw);
  if (!high) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < hw * hw; ++p) {
        img[c * hw * hw + p] = detail::key_byte(frame_key, (c << 20) | p);
      }
    }
    return img;
  }

  for (std::size_t p = 0; p < hw * hw; ++p) {
    const std::uint8_t wobble = detail::key_byte(frame_key, 0x300000 | p) % 16;
    img[p] = static_cast<std::uint8_t>(24 + wobble);
    img[hw * hw + p] = static_cast<std::uint8_t>(64 + wobble);
    img[2 * hw * hw + p] = static_cast<std::uint8_t>(40 + wobble);
  }
  const double e = static_cast<double>(hw - 1);
  const double jx = static_cast<double>(detail::key_byte(frame_key, 0x41) % 3) - 1.0;
  const double jy = static_cast<double>(detail::key_byte(frame_key, 0x42) % 3) - 1.0;
  const double ux0 = 0.30 * e + jx, ux1 = 0.70 * e + jx, uy = 0.15 * e + jy;
  const double bx0 = 0.08 * e + jx, bx1 = 0.92 * e + jx, by = 0.90 * e + jy;
  const double my = 0.52 * e + jy;
  const double mx0 = bx0 + (ux0 - bx0) * (by - my) / (by - uy);
  const double mx1 = bx1 + (ux1 - bx1) * (by - my) / (by - uy);
  detail::draw_line(img, hw, ux0, uy, ux1, uy, 235, 240, 235);
  detail::draw_line(img, hw, bx0, by, bx1, by, 235, 240, 235);
  detail::draw_line(img, hw, mx0, my, mx1, my, 210, 215, 210);
  detail::draw_line(img, hw, ux0, uy, bx0, by, 235, 240, 235);
  detail::draw_line(img, hw, ux1, uy, bx1, by, 235, 240, 235);
  return img;
}

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

struct SplitSummary {
  std::string video_id;
  std::size_t rallies = 0;
  std::size_t frames = 0;
  std::size_t pairs = 0;
  std::size_t hits = 0;
};

struct DatasetSummary {
  SplitSummary train;
  SplitSummary test;
};

inline std::string format_summary(const DatasetSummary& summary) {
  char buf[256];
  std::string out;
  out += "Split  Keypoint Sequences  Keypoint Pairs  Hit Frames  Video Frames\n";
  for (const SplitSummary* s : {&summary.train, &summary.test}) {
    std::snprintf(buf, sizeof(buf), "%-5s  %18zu  %14zu  %10zu  %12zu\n",
                  s->video_id == "synth-train" ? "train" : "test", s->rallies, s->pairs, s->hits,
                  s->frames);
    out += buf;
  }
  return out;
}

namespace detail {

struct SplitBuild {
  SplitSummary summary;
  std::vector<SynthRally> rallies;
  rally::AngleStream angles;
  std::vector<io::KeypointsRecord> keypoints;
  std::vector<io::SegmentsRecord> segments;
  std::vector<dir::KSeqRecord> kseq;
  std::vector<io::DirectionRecord> directions;
  std::vector<io::HitsRecord> hits;
};

inline SplitBuild build_split(const SynthConfig& cfg, bool train) {
  const std::size_t train_count = cfg.train_count();
  const std::size_t first = train ? 0 : train_count;
  const std::size_t last = train ? train_count : cfg.rallies;

  SplitBuild split;
  split.summary.video_id = split_video_id(train);
  split.angles.video_id = split.summary.video_id;
  split.angles.fps = cfg.fps;
  io::SegmentsRecord segrec;
  segrec.video_id = split.summary.video_id;

  long long frame = 0;
  for (std::size_t i = first; i < last; ++i) {
    SynthRally r = generate_rally(cfg, i);
    const std::size_t gap = rally_gap(cfg, i);

    for (std::size_t g = 0; g < gap; ++g, ++frame) {
      split.angles.tokens.push_back(rally::ShotAngleToken::Other);
      io::KeypointsRecord rec;
      rec.video_id = split.summary.video_id;
      rec.frame = frame;
      rec.has_court = true;
      rec.court = cfg.court;
      RallyPlan idle;
      geom::PlayerKeypointPair pair = pose_pair(idle, dir::DirectionToken::S, 99, 0);
      add_noise(pair.bottom_player, cfg, i, frame, 0);
      add_noise(pair.top_player, cfg, i, frame, 1);
      rec.instances.push_back(pair.bottom_player);
      rec.instances.push_back(pair.top_player);
      Rng dr(mix_key(cfg.seed, i, static_cast<std::uint64_t>(frame), 0x1000));
      const std::size_t nd = dr.below(cfg.distractors_max + 1);
      for (std::size_t d = 0; d < nd; ++d) {
        rec.instances.push_back(idle_distractor(cfg, i, frame, d));
      }
      Rng sh(mix_key(cfg.seed, i, static_cast<std::uint64_t>(frame), 0x1001));
      for (std::size_t k = rec.instances.size(); k > 1; --k) {
        std::swap(rec.instances[k - 1], rec.instances[sh.below(k)]);
      }
      split.keypoints.push_back(std::move(rec));
    }

    require(frame == static_cast<long long>(r.segment.start_frame), Errc::out_of_range,
            "synthetic layout drifted from planned segment start");
    for (std::size_t f = 0; f < r.pairs.size(); ++f, ++frame) {
      split.angles.tokens.push_back(rally::ShotAngleToken::High);
      io::KeypointsRecord rec;
      rec.video_id = split.summary.video_id;
      rec.frame = frame;
      rec.has_court = true;
      rec.court = cfg.court;
      rec.instances.push_back(r.pairs[f].bottom_player);
      rec.instances.push_back(r.pairs[f].top_player);
      Rng dr(mix_key(cfg.seed, i, static_cast<std::uint64_t>(frame), 0x1000));
      const std::size_t nd = dr.below(cfg.distractors_max + 1);
      for (std::size_t d = 0; d < nd; ++d) {
        rec.instances.push_back(idle_distractor(cfg, i, frame, d));
      }
      Rng sh(mix_key(cfg.seed, i, static_cast<std::uint64_t>(frame), 0x1001));
      for (std::size_t k = rec.instances.size(); k > 1; --k) {
        std::swap(rec.instances[k - 1], rec.instances[sh.below(k)]);
      }
      split.keypoints.push_back(std::move(rec));
    }

    segrec.rallies.push_back(r.segment);

    dir::KSeqRecord krec;
    krec.rally_id = r.rally_id;
    krec.video_id = r.video_id;
    krec.start_frame = r.segment.start_frame;
    krec.pairs = r.pairs;
    krec.labels = r.directions.tokens;
    split.kseq.push_back(std::move(krec));

    io::DirectionRecord drec;
    drec.rally_id = r.rally_id;
    drec.video_id = r.video_id;
    drec.start_frame = r.segment.start_frame;
    drec.seq = r.directions;
    split.directions.push_back(std::move(drec));

    io::HitsRecord hrec;
    hrec.video_id = r.video_id;
    hrec.rally_id = r.rally_id;
    hrec.hits_local = r.hits_local;
    hrec.hits_global = r.hits_global;
    split.hits.push_back(std::move(hrec));

    split.summary.rallies += 1;
    split.summary.pairs += r.pairs.size();
    split.summary.hits += r.hits_local.size();
    split.rallies.push_back(std::move(r));
  }
  split.summary.frames = static_cast<std::size_t>(frame);
  split.segments.push_back(std::move(segrec));
  return split;
}

inline io::U8Tensor build_frame_images(const SynthConfig& cfg, const SplitBuild& split) {
  const std::size_t hw = cfg.image_hw;
  io::U8Tensor frames;
  frames.shape = {split.summary.frames, 3, hw, hw};
  frames.values.resize(split.summary.frames * 3 * hw * hw);
  const std::uint64_t video_salt =
      split.summary.video_id == "synth-train" ? 0x7e571 : 0x7e572;
  for (std::size_t f = 0; f < split.summary.frames; ++f) {
    const bool high = split.angles.tokens[f] == rally::ShotAngleToken::High;
    const std::uint64_t key = mix_key(cfg.seed, video_salt, f);
    std::vector<std::uint8_t> img = angle_image(cfg, key, high);
    std::copy(img.begin(), img.end(), frames.values.begin() + f * 3 * hw * hw);
  }
  frames.meta["video_id"] = split.summary.video_id;
  char fpsbuf[32];
  std::snprintf(fpsbuf, sizeof(fpsbuf), "%.6g", cfg.fps);
  frames.meta["fps"] = fpsbuf;
  return frames;
}

}  // namespace detail

inline DatasetSummary generate_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "train", ec);
  require(!ec, Errc::io_failure, "cannot create " + out_dir + "/train");
  fs::create_directories(fs::path(out_dir) / "test", ec);
  require(!ec, Errc::io_failure, "cannot create " + out_dir + "/test");

  DatasetSummary summary;
  for (bool train : {true, false}) {
    detail::SplitBuild split = detail::build_split(cfg, train);
    const std::string dir = out_dir + (train ? "/train" : "/test");
    io::write_angle_streams(dir + "/angles.jsonl",
                            split.summary.frames ? std::vector<rally::AngleStream>{split.angles}
                                                 : std::vector<rally::AngleStream>{});
    io::write_keypoints(dir + "/keypoints.jsonl", split.keypoints);
    io::write_segments(dir + "/segments.jsonl", split.segments);
    io::write_kseq(dir + "/kseq.jsonl", split.kseq);
    io::write_directions(dir + "/directions.jsonl", split.directions);
    io::write_hits(dir + "/hits.jsonl", split.hits);
    const bool want_images = cfg.images == ImageMode::all ||
                             (cfg.images == ImageMode::test_only && !train);
    if (want_images && split.summary.frames > 0) {
      io::save_u8_tensor(dir + "/frames.hft", detail::build_frame_images(cfg, split));
    }
    (train ? summary.train : summary.test) = split.summary;
  }

  io::Json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["config"] = synth_to_json(cfg);
  for (const SplitSummary* s : {&summary.train, &summary.test}) {
    io::Json split;
    split["video_id"] = s->video_id;
    split["rallies"] = s->rallies;
    split["frames"] = s->frames;
    split["pairs"] = s->pairs;
    split["hits"] = s->hits;
    manifest[s->video_id == "synth-train" ? "train" : "test"] = std::move(split);
  }
  io::write_json_file(out_dir + "/manifest.json", manifest);
  return summary;
}

}  // namespace hitframe::synth
