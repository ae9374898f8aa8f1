#pragma once

#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/detector.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/geometry.hpp"
#include "hitframe/kseq.hpp"
#include "hitframe/rally.hpp"

namespace hitframe::io {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// line-level plumbing
// ---------------------------------------------------------------------------

namespace detail {

inline void write_lines(const std::string& path, const std::vector<Json>& lines) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::io_failure, "cannot open " + path + " for writing");
  for (const Json& j : lines) os << j.dump() << '\n';
  require(os.good(), Errc::io_failure, "write failed for " + path);
}

inline std::vector<Json> read_lines(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Errc::io_failure, "cannot open " + path);
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void check_version(const Json& j, const std::string& where) {
  try {
    require(j.at("schema_version").get<long long>() == static_cast<long long>(kSchemaVersion),
            Errc::parse_failure, where + ": unsupported schema_version");
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, where + ": " + e.what());
  }
}

inline Json point_json(const geom::Point2& p) { return Json::array({p.x, p.y}); }

inline geom::Point2 point_from(const Json& j) {
  require(j.is_array() && j.size() == 2, Errc::parse_failure, "point must be an [x, y] pair");
  return geom::Point2{j[0].get<double>(), j[1].get<double>()};
}

inline Json skeleton_json(const geom::SkeletonKeypoints& s) {
  Json arr = Json::array();
  for (const auto& p : s.pts) arr.push_back(point_json(p));
  return arr;
}

inline geom::SkeletonKeypoints skeleton_from(const Json& j) {
  require(j.is_array() && j.size() == geom::SkeletonKeypoints::kCount, Errc::parse_failure,
          "skeleton must list 17 keypoints");
  geom::SkeletonKeypoints s;
  for (std::size_t i = 0; i < geom::SkeletonKeypoints::kCount; ++i) s.pts[i] = point_from(j[i]);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// shot-angle streams: {schema_version, video_id, fps, tokens}
// ---------------------------------------------------------------------------

inline void write_angle_streams(const std::string& path, const std::vector<rally::AngleStream>& streams) {
  std::vector<Json> lines;
  lines.reserve(streams.size());
  for (const auto& s : streams) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["video_id"] = s.video_id;
    j["fps"] = s.fps;
    j["tokens"] = rally::format_angles(s.tokens);
    lines.push_back(std::move(j));
  }
  detail::write_lines(path, lines);
}

inline std::vector<rally::AngleStream> read_angle_streams(const std::string& path) {
  std::vector<rally::AngleStream> out;
  for (const Json& j : detail::read_lines(path)) {
    detail::check_version(j, path);
    try {
      rally::AngleStream s;
      s.video_id = j.at("video_id").get<std::string>();
      s.fps = j.at("fps").get<double>();
      s.tokens = rally::parse_angles(j.at("tokens").get<std::string>());
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// rally segments: {schema_version, video_id, rallies: [[start, end], ...]}
// ---------------------------------------------------------------------------

struct SegmentsRecord {
  std::string video_id;
  std::vector<rally::RallySegment> rallies;
};

inline void write_segments(const std::string& path, const std::vector<SegmentsRecord>& records) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    Json spans = Json::array();
    for (const auto& seg : r.rallies) spans.push_back(Json::array({seg.start_frame, seg.end_frame}));
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["video_id"] = r.video_id;
    j["rallies"] = std::move(spans);
    lines.push_back(std::move(j));
  }
  detail::write_lines(path, lines);
}

inline std::vector<SegmentsRecord> read_segments(const std::string& path) {
  std::vector<SegmentsRecord> out;
  for (const Json& j : detail::read_lines(path)) {
    detail::check_version(j, path);
    try {
      SegmentsRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      for (const Json& span : j.at("rallies")) {
        require(span.is_array() && span.size() == 2, Errc::parse_failure,
                path + ": rally span must be a [start, end] pair");
        const long long lo = span[0].get<long long>();
        const long long hi = span[1].get<long long>();
        require(lo >= 0 && hi >= 0, Errc::parse_failure,
                path + ": rally span frames must be non-negative");
        rally::RallySegment seg{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
        seg.validate();
        r.rallies.push_back(seg);
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// per-frame pose detections:
// {schema_version, video_id, frame, instances: [skeleton, ...], court?}
// ---------------------------------------------------------------------------

struct KeypointsRecord {
  std::string video_id;
  long long frame = 0;
  std::vector<geom::SkeletonKeypoints> instances;
  bool has_court = false;
  geom::CourtKeypoints court;
};

inline void write_keypoints(const std::string& path, const std::vector<KeypointsRecord>& records) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    Json instances = Json::array();
    for (const auto& s : r.instances) instances.push_back(detail::skeleton_json(s));
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["video_id"] = r.video_id;
    j["frame"] = r.frame;
    j["instances"] = std::move(instances);
    if (r.has_court) {
      Json c;
      c["upper_left"] = detail::point_json(r.court.upper_left);
      c["upper_right"] = detail::point_json(r.court.upper_right);
      c["middle_left"] = detail::point_json(r.court.middle_left);
      c["middle_right"] = detail::point_json(r.court.middle_right);
      c["bottom_left"] = detail::point_json(r.court.bottom_left);
      c["bottom_right"] = detail::point_json(r.court.bottom_right);
      j["court"] = std::move(c);
    }
    lines.push_back(std::move(j));
  }
  detail::write_lines(path, lines);
}

inline std::vector<KeypointsRecord> read_keypoints(const std::string& path) {
  std::vector<KeypointsRecord> out;
  for (const Json& j : detail::read_lines(path)) {
    detail::check_version(j, path);
    try {
      KeypointsRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.frame = j.at("frame").get<long long>();
      for (const Json& inst : j.at("instances")) r.instances.push_back(detail::skeleton_from(inst));
      if (j.contains("court")) {
        const Json& c = j.at("court");
        r.court.upper_left = detail::point_from(c.at("upper_left"));
        r.court.upper_right = detail::point_from(c.at("upper_right"));
        r.court.middle_left = detail::point_from(c.at("middle_left"));
        r.court.middle_right = detail::point_from(c.at("middle_right"));
        r.court.bottom_left = detail::point_from(c.at("bottom_left"));
        r.court.bottom_right = detail::point_from(c.at("bottom_right"));
        r.has_court = true;
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// filtered keypoint sequences:
// {schema_version, rally_id, video_id, start_frame,
//  frames: [{pair: [bottom, top], label?}, ...]}
// ---------------------------------------------------------------------------

inline void write_kseq(const std::string& path, const std::vector<dir::KSeqRecord>& records) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    r.validate();
    Json frames = Json::array();
    for (std::size_t f = 0; f < r.pairs.size(); ++f) {
      Json entry;
      entry["pair"] = Json::array({detail::skeleton_json(r.pairs[f].bottom_player),
                                   detail::skeleton_json(r.pairs[f].top_player)});
      if (r.labeled()) entry["label"] = std::string(1, dir::token_char(r.labels[f]));
      frames.push_back(std::move(entry));
    }
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["rally_id"] = r.rally_id;
    j["video_id"] = r.video_id;
    j["start_frame"] = r.start_frame;
    j["frames"] = std::move(frames);
    lines.push_back(std::move(j));
  }
  detail::write_lines(path, lines);
}

inline std::vector<dir::KSeqRecord> read_kseq(const std::string& path) {
  std::vector<dir::KSeqRecord> out;
  for (const Json& j : detail::read_lines(path)) {
    detail::check_version(j, path);
    try {
      dir::KSeqRecord r;
      r.rally_id = j.at("rally_id").get<std::string>();
      if (j.contains("video_id")) r.video_id = j.at("video_id").get<std::string>();
      if (j.contains("start_frame")) r.start_frame = j.at("start_frame").get<long long>();
      for (const Json& entry : j.at("frames")) {
        const Json& pair = entry.at("pair");
        require(pair.is_array() && pair.size() == 2, Errc::parse_failure,
                path + ": pair must hold exactly two skeletons");
        geom::PlayerKeypointPair p;
        p.bottom_player = detail::skeleton_from(pair[0]);
        p.top_player = detail::skeleton_from(pair[1]);
        r.pairs.push_back(p);
        if (entry.contains("label")) {
          const auto s = entry.at("label").get<std::string>();
          require(s.size() == 1, Errc::parse_failure, path + ": label must be a single character");
          r.labels.push_back(dir::token_from_char(s[0]));
        }
      }
      require(r.labels.empty() || r.labels.size() == r.pairs.size(), Errc::parse_failure,
              path + ": labels must cover all frames or none");
      r.validate();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// predicted direction sequences:
// {schema_version, rally_id, video_id, start_frame, tokens}
// ---------------------------------------------------------------------------

struct DirectionRecord {
  std::string rally_id;
  std::string video_id;
  long long start_frame = 0;
  dir::DirectionSequence seq;
};

inline void write_directions(const std::string& path, const std::vector<DirectionRecord>& records) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["rally_id"] = r.rally_id;
    j["video_id"] = r.video_id;
    j["start_frame"] = r.start_frame;
    j["tokens"] = dir::format_directions(r.seq.tokens);
    lines.push_back(std::move(j));
  }
  detail::write_lines(path, lines);
}

inline std::vector<DirectionRecord> read_directions(const std::string& path) {
  std::vector<DirectionRecord> out;
  for (const Json& j : detail::read_lines(path)) {
    detail::check_version(j, path);
    try {
      DirectionRecord r;
      r.rally_id = j.at("rally_id").get<std::string>();
      r.video_id = j.at("video_id").get<std::string>();
      r.start_frame = j.at("start_frame").get<long long>();
      r.seq.rally_id = r.rally_id;
      r.seq.tokens = dir::parse_directions(j.at("tokens").get<std::string>());
      r.seq.validate();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// hit frames: {schema_version, video_id, rally_id, hits_local, hits_global}
// ---------------------------------------------------------------------------

struct HitsRecord {
  std::string video_id;
  std::string rally_id;
  std::vector<long long> hits_local;
  std::vector<long long> hits_global;
};

inline void write_hits(const std::string& path, const std::vector<HitsRecord>& records) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["video_id"] = r.video_id;
    j["rally_id"] = r.rally_id;
    j["hits_local"] = r.hits_local;
    j["hits_global"] = r.hits_global;
    lines.push_back(std::move(j));
  }
  detail::write_lines(path, lines);
}

inline std::vector<HitsRecord> read_hits(const std::string& path) {
  std::vector<HitsRecord> out;
  for (const Json& j : detail::read_lines(path)) {
    detail::check_version(j, path);
    try {
      HitsRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.rally_id = j.at("rally_id").get<std::string>();
      r.hits_local = j.at("hits_local").get<std::vector<long long>>();
      r.hits_global = j.at("hits_global").get<std::vector<long long>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// whole-file JSON documents (configs, manifests, reports)
// ---------------------------------------------------------------------------

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::io_failure, "cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  require(os.good(), Errc::io_failure, "write failed for " + path);
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Errc::io_failure, "cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, path + ": " + e.what());
  }
}

}  // namespace hitframe::io
