#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hitframe/angle_cnn.hpp"
#include "hitframe/common.hpp"
#include "hitframe/detector.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/evaluation.hpp"
#include "hitframe/geometry.hpp"
#include "hitframe/io/binary.hpp"
#include "hitframe/io/jsonl.hpp"
#include "hitframe/kseq.hpp"
#include "hitframe/rally.hpp"
#include "hitframe/transformer.hpp"

namespace hitframe::pipeline {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::string out_dir;
  std::string angles_path;            // precomputed shot-angle stream, or
  std::string frames_path;            // raw frame container plus
  std::string angle_checkpoint;       //   a trained classifier
  std::string keypoints_path;
  std::string direction_checkpoint;   // transformer checkpoint, or
  std::string gold_directions_path;   //   oracle directions for debugging
  std::string gold_segments_path;     // optional, enables trimming report
  std::string gold_hits_path;         // optional, enables tolerance report
  long long min_run = 1;
  bool strict = false;
  bool hold_last = true;
  std::uint64_t seed = 0;
  std::vector<long long> tols = {5, 15, 25};
  std::vector<std::string> formats = {"json", "table"};

  void validate() const {
    require(!out_dir.empty(), Errc::bad_config, "output directory must be set");
    require(min_run >= 1, Errc::bad_config, "min_run must be at least 1");
    require(!formats.empty(), Errc::bad_config, "at least one report format required");
    for (const auto& f : formats) {
      require(f == "json" || f == "table" || f == "csv", Errc::bad_config,
              "unknown report format '" + f + "'");
    }
    for (long long tol : tols) {
      require(tol >= 1, Errc::bad_config, "tolerances must be at least 1");
    }
    require(angles_path.empty() || frames_path.empty(), Errc::bad_config,
            "give either a shot-angle stream or raw frames, not both");
    require(!angles_path.empty() || !frames_path.empty(), Errc::missing_input,
            "no shot-angle source: set angles_path or frames_path");
    require(frames_path.empty() || !angle_checkpoint.empty(), Errc::missing_input,
            "raw frames require an angle classifier checkpoint");
    require(!keypoints_path.empty(), Errc::missing_input, "keypoints_path must be set");
    require(!direction_checkpoint.empty() || !gold_directions_path.empty(), Errc::missing_input,
            "no direction source: set direction_checkpoint or gold_directions_path");
  }

  // The checkpoint is the predictor when both direction sources are given;
  // gold directions then serve only as the token-report reference.
  bool oracle_directions() const { return direction_checkpoint.empty(); }
};

inline io::Json pipeline_to_json(const PipelineConfig& cfg) {
  io::Json j;
  j["out_dir"] = cfg.out_dir;
  j["angles_path"] = cfg.angles_path;
  j["frames_path"] = cfg.frames_path;
  j["angle_checkpoint"] = cfg.angle_checkpoint;
  j["keypoints_path"] = cfg.keypoints_path;
  j["direction_checkpoint"] = cfg.direction_checkpoint;
  j["gold_directions_path"] = cfg.gold_directions_path;
  j["gold_segments_path"] = cfg.gold_segments_path;
  j["gold_hits_path"] = cfg.gold_hits_path;
  j["min_run"] = cfg.min_run;
  j["strict"] = cfg.strict;
  j["hold_last"] = cfg.hold_last;
  j["seed"] = cfg.seed;
  j["tols"] = cfg.tols;
  j["formats"] = cfg.formats;
  return j;
}

inline PipelineConfig pipeline_from_json(const io::Json& j) {
  PipelineConfig cfg;
  auto str = [&](const char* key, std::string& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  try {
    str("out_dir", cfg.out_dir);
    str("angles_path", cfg.angles_path);
    str("frames_path", cfg.frames_path);
    str("angle_checkpoint", cfg.angle_checkpoint);
    str("keypoints_path", cfg.keypoints_path);
    str("direction_checkpoint", cfg.direction_checkpoint);
    str("gold_directions_path", cfg.gold_directions_path);
    str("gold_segments_path", cfg.gold_segments_path);
    str("gold_hits_path", cfg.gold_hits_path);
    if (j.contains("min_run")) cfg.min_run = j.at("min_run").get<long long>();
    if (j.contains("strict")) cfg.strict = j.at("strict").get<bool>();
    if (j.contains("hold_last")) cfg.hold_last = j.at("hold_last").get<bool>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tols")) cfg.tols = j.at("tols").get<std::vector<long long>>();
    if (j.contains("formats")) cfg.formats = j.at("formats").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("pipeline config: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// helpers shared with the CLI
// ---------------------------------------------------------------------------

inline void require_readable(const std::string& path, const char* what) {
  require(std::filesystem::exists(path), Errc::missing_input,
          std::string(what) + " not found: " + path);
}

// Preprocesses every image in a raw frame container into classifier inputs.
inline std::vector<nn::Tensor> preprocess_container(const io::U8Tensor& frames,
                                                    const angle::PreprocessConfig& pp) {
  require(frames.shape.size() == 4 && frames.shape[1] == 3, Errc::shape_mismatch,
          "frame container must be N x 3 x H x W");
  const std::size_t n = frames.shape[0];
  const std::size_t h = frames.shape[2];
  const std::size_t w = frames.shape[3];
  std::vector<nn::Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    angle::RgbFrame frame = angle::frame_from_chw8(frames.values.data() + i * 3 * h * w, h, w);
    out.push_back(angle::preprocess(frame, pp));
  }
  return out;
}

inline angle::AngleDataset dataset_from_container(const io::U8Tensor& frames,
                                                  const rally::AngleStream& gold,
                                                  const angle::PreprocessConfig& pp) {
  angle::AngleDataset data;
  data.frames = preprocess_container(frames, pp);
  require(gold.tokens.size() == data.frames.size(), Errc::shape_mismatch,
          "angle stream length does not match frame count");
  data.labels.reserve(gold.tokens.size());
  for (auto tok : gold.tokens) {
    data.labels.push_back(tok == rally::ShotAngleToken::High ? 1 : 0);
  }
  return data;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct RallyWork {
  std::string rally_id;
  std::string video_id;
  rally::RallySegment segment;
  std::vector<geom::PlayerKeypointPair> pairs;  // empty when filtering failed wholesale
  dir::DirectionSequence directions;
  std::vector<long long> hits_local;
  std::vector<long long> hits_global;
};

struct PipelineResult {
  std::vector<io::SegmentsRecord> segments;
  std::vector<io::DirectionRecord> directions;
  std::vector<io::HitsRecord> hits;
  std::vector<std::string> notes;
  io::Json report;
};

namespace detail {

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    fail(e.code(), std::string("stage ") + name + ": " + e.what());
  }
}

struct VideoKeypoints {
  std::map<long long, io::KeypointsRecord> by_frame;
  std::optional<geom::CourtKeypoints> court;
};

inline std::map<std::string, VideoKeypoints> index_keypoints(
    const std::vector<io::KeypointsRecord>& records) {
  std::map<std::string, VideoKeypoints> out;
  for (const auto& rec : records) {
    VideoKeypoints& vid = out[rec.video_id];
    require(vid.by_frame.emplace(rec.frame, rec).second, Errc::bad_argument,
            "duplicate keypoints for frame " + std::to_string(rec.frame) + " of video " +
                rec.video_id);
    if (rec.has_court && !vid.court.has_value()) vid.court = rec.court;
  }
  return out;
}

}  // namespace detail

struct FilterOptions {
  bool strict = false;
  bool hold_last = true;
};

// Runs court filtering over every segmented rally. Lenient mode records a
// note per unusable frame and, with hold_last, substitutes the nearest usable
// pair from the same video; rallies that still have gaps keep empty pairs.
inline std::vector<RallyWork> filter_rally_work(const std::vector<io::SegmentsRecord>& segments,
                                                const std::vector<io::KeypointsRecord>& keypoints,
                                                const FilterOptions& opt,
                                                std::vector<std::string>& notes) {
  auto videos = detail::index_keypoints(keypoints);
  std::vector<RallyWork> work;
  for (const auto& segrec : segments) {
    if (segrec.rallies.empty()) continue;
    auto vit = videos.find(segrec.video_id);
    require(vit != videos.end(), Errc::missing_input,
            "no keypoints for video " + segrec.video_id);
    require(vit->second.court.has_value(), Errc::missing_input,
            "no court geometry for video " + segrec.video_id);
    const geom::CourtKeypoints& court = *vit->second.court;

    std::vector<std::optional<geom::PlayerKeypointPair>> filtered;
    std::vector<std::pair<std::size_t, std::size_t>> rally_ranges;
    for (const auto& seg : segrec.rallies) {
      const std::size_t begin = filtered.size();
      const long long last = static_cast<long long>(seg.end_frame);
      for (long long f = static_cast<long long>(seg.start_frame); f <= last; ++f) {
        auto kit = vit->second.by_frame.find(f);
        if (kit == vit->second.by_frame.end()) {
          require(!opt.strict, Errc::missing_input,
                  "no keypoints for frame " + std::to_string(f) + " of video " +
                      segrec.video_id);
          filtered.emplace_back(std::nullopt);
          notes.push_back("missing keypoints at " + segrec.video_id + " frame " +
                          std::to_string(f));
          continue;
        }
        try {
          filtered.emplace_back(geom::filter_players(kit->second.instances, court));
        } catch (const Error& e) {
          if (opt.strict || e.code() != Errc::insufficient_players) {
            fail(e.code(), std::string(e.what()) + " at " + segrec.video_id + " frame " +
                               std::to_string(f));
          }
          filtered.emplace_back(std::nullopt);
          notes.push_back("filter fallback at " + segrec.video_id + " frame " +
                          std::to_string(f));
        }
      }
      rally_ranges.emplace_back(begin, filtered.size());
    }

    if (opt.hold_last) {
      std::optional<geom::PlayerKeypointPair> held;
      for (auto& slot : filtered) {
        if (slot.has_value()) {
          held = slot;
        } else if (held.has_value()) {
          slot = held;
        }
      }
      std::optional<geom::PlayerKeypointPair> first;
      for (auto it = filtered.rbegin(); it != filtered.rend(); ++it) {
        if (it->has_value()) {
          first = *it;
        } else if (first.has_value()) {
          *it = first;
        }
      }
    }

    for (std::size_t r = 0; r < segrec.rallies.size(); ++r) {
      RallyWork rw;
      rw.video_id = segrec.video_id;
      rw.segment = segrec.rallies[r];
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-r%04zu", segrec.video_id.c_str(), r);
      rw.rally_id = idbuf;
      bool complete = true;
      for (std::size_t at = rally_ranges[r].first; at < rally_ranges[r].second; ++at) {
        if (!filtered[at].has_value()) {
          complete = false;
          break;
        }
      }
      if (complete) {
        for (std::size_t at = rally_ranges[r].first; at < rally_ranges[r].second; ++at) {
          rw.pairs.push_back(*filtered[at]);
        }
      } else {
        notes.push_back("rally " + rw.rally_id + " dropped: unfilled frames after filtering");
      }
      work.push_back(std::move(rw));
    }
  }
  return work;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  require(!ec, Errc::io_failure, "cannot create " + cfg.out_dir);

  if (!cfg.angles_path.empty()) require_readable(cfg.angles_path, "angle stream");
  if (!cfg.frames_path.empty()) require_readable(cfg.frames_path, "frame container");
  if (!cfg.angle_checkpoint.empty()) require_readable(cfg.angle_checkpoint, "angle checkpoint");
  require_readable(cfg.keypoints_path, "keypoints file");
  if (!cfg.direction_checkpoint.empty()) {
    require_readable(cfg.direction_checkpoint, "direction checkpoint");
  }
  if (!cfg.gold_directions_path.empty()) {
    require_readable(cfg.gold_directions_path, "gold directions");
  }
  if (!cfg.gold_segments_path.empty()) require_readable(cfg.gold_segments_path, "gold segments");
  if (!cfg.gold_hits_path.empty()) require_readable(cfg.gold_hits_path, "gold hits");

  PipelineResult result;

  // Shot-angle streams: ingest a precomputed file or classify raw frames.
  std::vector<rally::AngleStream> streams = detail::stage("classify", [&] {
    if (!cfg.angles_path.empty()) return io::read_angle_streams(cfg.angles_path);
    io::U8Tensor container = io::load_u8_tensor(cfg.frames_path);
    angle::LoadedSaCnn loaded = angle::load_sacnn(cfg.angle_checkpoint);
    std::vector<nn::Tensor> inputs = preprocess_container(container, loaded.preprocess);
    auto vid = container.meta.find("video_id");
    auto fps = container.meta.find("fps");
    rally::AngleStream stream = angle::classify_stream(
        inputs, loaded.model, vid != container.meta.end() ? vid->second : "video-0",
        fps != container.meta.end() ? std::stod(fps->second) : 30.0);
    std::vector<rally::AngleStream> out{std::move(stream)};
    io::write_angle_streams(cfg.out_dir + "/angles.jsonl", out);
    return out;
  });
  std::sort(streams.begin(), streams.end(),
            [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
  std::map<std::string, std::size_t> stream_frames;
  for (const auto& s : streams) stream_frames[s.video_id] = s.tokens.size();

  // Rally segmentation with optional run-length smoothing.
  detail::stage("segment", [&] {
    for (const auto& s : streams) {
      rally::AngleStream smoothed =
          rally::smooth_stream(s, static_cast<std::size_t>(cfg.min_run));
      io::SegmentsRecord rec;
      rec.video_id = s.video_id;
      rec.rallies = rally::segment_rallies(smoothed);
      result.segments.push_back(std::move(rec));
    }
    io::write_segments(cfg.out_dir + "/segments.jsonl", result.segments);
    return 0;
  });

  // Player filtering with hold-last fallback in lenient mode.
  std::vector<RallyWork> work;
  detail::stage("filter", [&] {
    work = filter_rally_work(result.segments, io::read_keypoints(cfg.keypoints_path),
                             FilterOptions{cfg.strict, cfg.hold_last}, result.notes);
    return 0;
  });

  // Direction labeling: transformer inference or oracle lookup.
  detail::stage("predict", [&] {
    std::optional<dir::DirectionModel> model;
    std::map<std::string, io::DirectionRecord> gold;
    if (!cfg.oracle_directions()) {
      model = dir::load_direction_model(cfg.direction_checkpoint);
    } else {
      for (auto& rec : io::read_directions(cfg.gold_directions_path)) {
        gold[rec.rally_id] = rec;
      }
    }
    for (RallyWork& rw : work) {
      rw.directions.rally_id = rw.rally_id;
      if (rw.pairs.empty()) continue;
      if (model.has_value()) {
        rw.directions = dir::predict_directions(rw.pairs, *model, rw.rally_id);
      } else {
        auto git = gold.find(rw.rally_id);
        require(git != gold.end(), Errc::missing_input,
                "no gold directions for rally " + rw.rally_id);
        require(git->second.seq.tokens.size() == rw.pairs.size(), Errc::shape_mismatch,
                "gold directions for rally " + rw.rally_id + " have length " +
                    std::to_string(git->second.seq.tokens.size()) + ", rally has " +
                    std::to_string(rw.pairs.size()) + " frames");
        rw.directions = git->second.seq;
        rw.directions.rally_id = rw.rally_id;
      }
      io::DirectionRecord rec;
      rec.rally_id = rw.rally_id;
      rec.video_id = rw.video_id;
      rec.start_frame = rw.segment.start_frame;
      rec.seq = rw.directions;
      result.directions.push_back(std::move(rec));
    }
    io::write_directions(cfg.out_dir + "/directions.jsonl", result.directions);
    return 0;
  });

  // Hit detection and global frame mapping.
  detail::stage("detect", [&] {
    for (RallyWork& rw : work) {
      if (!rw.directions.tokens.empty()) {
        hits::HitFrameSet set = hits::detect_hits(rw.directions);
        rw.hits_local.assign(set.indices.begin(), set.indices.end());
        const std::vector<std::size_t> global = hits::to_global(set, rw.segment);
        rw.hits_global.assign(global.begin(), global.end());
      }
      io::HitsRecord rec;
      rec.video_id = rw.video_id;
      rec.rally_id = rw.rally_id;
      rec.hits_local = rw.hits_local;
      rec.hits_global = rw.hits_global;
      result.hits.push_back(std::move(rec));
    }
    io::write_hits(cfg.out_dir + "/hits.jsonl", result.hits);
    return 0;
  });

  // Reports against whichever gold artifacts were provided.
  detail::stage("report", [&] {
    std::optional<eval::TrimmingReport> trimming;
    std::optional<eval::TokenReport> tokens;
    std::vector<eval::ToleranceReport> tolerance;

    if (!cfg.gold_segments_path.empty()) {
      std::map<std::string, std::vector<rally::RallySegment>> gold;
      for (auto& rec : io::read_segments(cfg.gold_segments_path)) {
        gold[rec.video_id] = rec.rallies;
      }
      long long correct = 0, extra = 0, missed = 0;
      for (const auto& segrec : result.segments) {
        auto git = gold.find(segrec.video_id);
        std::vector<rally::RallySegment> actual =
            git == gold.end() ? std::vector<rally::RallySegment>{} : git->second;
        eval::TrimmingReport r = eval::trimming_report(segrec.rallies, actual);
        correct += r.correct;
        extra += r.extra;
        missed += r.missed;
      }
      for (const auto& [vid, actual] : gold) {
        bool seen = false;
        for (const auto& segrec : result.segments) seen = seen || segrec.video_id == vid;
        if (!seen) missed += static_cast<long long>(actual.size());
      }
      trimming = eval::trimming_from_counts(correct, extra, missed);
    }

    if (!cfg.gold_directions_path.empty() && !cfg.oracle_directions()) {
      std::map<std::string, io::DirectionRecord> gold;
      for (auto& rec : io::read_directions(cfg.gold_directions_path)) gold[rec.rally_id] = rec;
      std::array<eval::BinaryCounts, 3> counts{};
      bool any = false;
      for (const auto& rec : result.directions) {
        auto git = gold.find(rec.rally_id);
        if (git == gold.end() || git->second.seq.tokens.size() != rec.seq.tokens.size()) {
          result.notes.push_back("token report skips rally " + rec.rally_id +
                                 ": no matching gold labels");
          continue;
        }
        auto one = eval::token_counts(rec.seq, git->second.seq);
        for (int t = 0; t < 3; ++t) {
          counts[t].tp += one[t].tp;
          counts[t].fp += one[t].fp;
          counts[t].fn += one[t].fn;
          counts[t].tn += one[t].tn;
        }
        any = true;
      }
      if (any) tokens = eval::token_report_from_counts(counts);
    }

    if (!cfg.gold_hits_path.empty()) {
      std::map<std::string, std::vector<long long>> gold_by_video;
      for (auto& rec : io::read_hits(cfg.gold_hits_path)) {
        auto& dst = gold_by_video[rec.video_id];
        dst.insert(dst.end(), rec.hits_global.begin(), rec.hits_global.end());
      }
      std::map<std::string, std::vector<long long>> pred_by_video;
      for (const auto& rec : result.hits) {
        auto& dst = pred_by_video[rec.video_id];
        dst.insert(dst.end(), rec.hits_global.begin(), rec.hits_global.end());
      }
      for (long long tol : cfg.tols) {
        eval::BinaryCounts total{};
        for (const auto& [vid, frames] : stream_frames) {
          std::vector<long long> pred;
          std::vector<long long> actual;
          if (auto it = pred_by_video.find(vid); it != pred_by_video.end()) pred = it->second;
          if (auto it = gold_by_video.find(vid); it != gold_by_video.end()) actual = it->second;
          eval::ToleranceReport r = eval::hit_tolerance_report(
              pred, actual, static_cast<long long>(frames), eval::ToleranceConfig{tol});
          total.tp += r.counts.tp;
          total.fp += r.counts.fp;
          total.fn += r.counts.fn;
          total.tn += r.counts.tn;
        }
        eval::ToleranceReport combined;
        combined.tol = tol;
        combined.counts = total;
        combined.metrics = eval::binary_metrics(total);
        tolerance.push_back(combined);
      }
    }

    result.report["schema_version"] = kSchemaVersion;
    if (trimming.has_value()) result.report["trimming"] = eval::to_json(*trimming);
    if (tokens.has_value()) result.report["tokens"] = eval::to_json(*tokens);
    if (!tolerance.empty()) {
      io::Json arr = io::Json::array();
      for (const auto& r : tolerance) arr.push_back(io::Json(eval::to_json(r)));
      result.report["hit_tolerance"] = std::move(arr);
    }

    for (const auto& fmt : cfg.formats) {
      if (fmt == "json") {
        io::write_json_file(cfg.out_dir + "/report.json", result.report);
        continue;
      }
      const bool table = fmt == "table";
      std::string text;
      if (trimming.has_value()) {
        text += table ? eval::render_table(*trimming) : eval::render_csv(*trimming);
        text += "\n";
      }
      if (tokens.has_value()) {
        text += table ? eval::render_table(*tokens) : eval::render_csv(*tokens);
        text += "\n";
      }
      if (!tolerance.empty()) {
        text += table ? eval::render_table(tolerance) : eval::render_csv(tolerance);
        text += "\n";
      }
      std::ofstream os(cfg.out_dir + (table ? "/report.txt" : "/report.csv"), std::ios::binary);
      require(os.good(), Errc::io_failure, "cannot write report file");
      os << text;
      require(os.good(), Errc::io_failure, "report write failed");
    }
    return 0;
  });

  // Manifest: configuration echo plus run accounting.
  detail::stage("manifest", [&] {
    io::Json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["config"] = pipeline_to_json(cfg);
    std::size_t total_hits = 0;
    for (const auto& rec : result.hits) total_hits += rec.hits_global.size();
    manifest["videos"] = streams.size();
    manifest["rallies"] = work.size();
    manifest["hits"] = total_hits;
    manifest["notes"] = result.notes;
    io::write_json_file(cfg.out_dir + "/manifest.json", manifest);
    return 0;
  });

  return result;
}

}  // namespace hitframe::pipeline
