#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hitframe/detector.hpp"
#include "hitframe/synth.hpp"
#include "test_util.hpp"

using namespace hitframe;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool same_skeleton(const geom::SkeletonKeypoints& a, const geom::SkeletonKeypoints& b) {
  for (std::size_t k = 0; k < geom::SkeletonKeypoints::kCount; ++k) {
    if (a.pts[k].x != b.pts[k].x || a.pts[k].y != b.pts[k].y) return false;
  }
  return true;
}

bool same_pair(const geom::PlayerKeypointPair& a, const geom::PlayerKeypointPair& b) {
  return same_skeleton(a.bottom_player, b.bottom_player) &&
         same_skeleton(a.top_player, b.top_player);
}

double mean_y(const geom::SkeletonKeypoints& s) {
  double sum = 0.0;
  for (const geom::Point2& p : s.pts) sum += p.y;
  return sum / double(geom::SkeletonKeypoints::kCount);
}

struct RunView {
  dir::DirectionToken token;
  std::size_t start = 0;
  std::size_t length = 0;
};

std::vector<RunView> maximal_runs(const std::vector<dir::DirectionToken>& tokens) {
  std::vector<RunView> runs;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (runs.empty() || runs.back().token != tokens[i]) {
      runs.push_back(RunView{tokens[i], i, 1});
    } else {
      ++runs.back().length;
    }
  }
  return runs;
}

}  // namespace

TEST_CASE("identical seed and index reproduce a rally bit-exactly", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 77;
  cfg.rallies = 5;
  synth::SynthRally a = synth::generate_rally(cfg, 3);
  synth::SynthRally b = synth::generate_rally(cfg, 3);

  REQUIRE(a.rally_id == b.rally_id);
  REQUIRE(a.video_id == b.video_id);
  REQUIRE(a.segment.start_frame == b.segment.start_frame);
  REQUIRE(a.segment.end_frame == b.segment.end_frame);
  REQUIRE(a.directions.tokens == b.directions.tokens);
  REQUIRE(a.hits_local == b.hits_local);
  REQUIRE(a.hits_global == b.hits_global);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t f = 0; f < a.pairs.size(); ++f) REQUIRE(same_pair(a.pairs[f], b.pairs[f]));

  // Index 3 is the last training rally; later indices restart the frame
  // counter inside the test video, so compare within one split.
  synth::SynthRally earlier = synth::generate_rally(cfg, 2);
  REQUIRE(earlier.segment.end_frame < a.segment.start_frame);
  synth::SynthRally test_first = synth::generate_rally(cfg, 4);
  REQUIRE(test_first.video_id == "synth-test");
  REQUIRE(test_first.video_id != a.video_id);

  REQUIRE_ERR(synth::generate_rally(cfg, 5), Errc::out_of_range);

  synth::SynthConfig bad = cfg;
  bad.run_min = 0;
  REQUIRE_ERR(synth::generate_rally(bad, 0), Errc::bad_config);
}

TEST_CASE("label streams carry the documented structure", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 5;
  cfg.rallies = 20;
  for (std::size_t i = 0; i < cfg.rallies; ++i) {
    synth::SynthRally r = synth::generate_rally(cfg, i);
    REQUIRE(r.pairs.size() == r.directions.tokens.size());
    REQUIRE(r.segment.end_frame - r.segment.start_frame + 1 == r.directions.tokens.size());

    std::vector<RunView> runs = maximal_runs(r.directions.tokens);
    REQUIRE(runs.size() >= 3);
    REQUIRE(runs.front().token == dir::DirectionToken::S);
    REQUIRE(runs.back().token == dir::DirectionToken::S);
    REQUIRE(runs.front().length >= cfg.lead_min);
    REQUIRE(runs.front().length <= cfg.lead_max);
    REQUIRE(runs.back().length >= cfg.tail_min);
    REQUIRE(runs.back().length <= cfg.tail_max);

    const std::size_t interior = runs.size() - 2;
    REQUIRE(interior >= cfg.runs_min);
    REQUIRE(interior <= cfg.runs_max);

    std::vector<long long> expected_hits;
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) {
      const RunView& run = runs[k];
      REQUIRE((run.token == dir::DirectionToken::B || run.token == dir::DirectionToken::U));
      REQUIRE(run.length >= cfg.run_min);
      REQUIRE(run.length <= cfg.run_max);
      if (k > 1) REQUIRE(run.token != runs[k - 1].token);
      expected_hits.push_back(static_cast<long long>(run.start));
    }
    REQUIRE(r.hits_local == expected_hits);

    hits::HitFrameSet detected = hits::detect_hits(r.directions);
    REQUIRE(std::vector<long long>(detected.indices.begin(), detected.indices.end()) ==
            r.hits_local);
    std::vector<std::size_t> global = hits::to_global(detected, r.segment);
    REQUIRE(std::vector<long long>(global.begin(), global.end()) == r.hits_global);
  }
}

TEST_CASE("pinned run length is honored exactly", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 9;
  cfg.rallies = 6;
  cfg.run_min = 5;
  cfg.run_max = 5;
  for (std::size_t i = 0; i < cfg.rallies; ++i) {
    synth::SynthRally r = synth::generate_rally(cfg, i);
    std::vector<RunView> runs = maximal_runs(r.directions.tokens);
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) REQUIRE(runs[k].length == 5);
  }
}

TEST_CASE("players keep the canonical screen order under default noise", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 13;
  cfg.rallies = 8;
  for (std::size_t i = 0; i < cfg.rallies; ++i) {
    synth::SynthRally r = synth::generate_rally(cfg, i);
    for (const geom::PlayerKeypointPair& pair : r.pairs) {
      REQUIRE(mean_y(pair.bottom_player) > mean_y(pair.top_player));
      REQUIRE(pair.bottom_player.ankle_mid().y > pair.top_player.ankle_mid().y);
    }
  }
}

TEST_CASE("dataset files agree with each other and the manifest", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 101;
  cfg.rallies = 10;
  fs::path dir = fresh_dir("hitframe_synth_ds");
  synth::DatasetSummary summary = synth::generate_dataset(cfg, dir.string());

  REQUIRE(summary.train.rallies == 8);
  REQUIRE(summary.test.rallies == 2);

  for (bool train : {true, false}) {
    const synth::SplitSummary& s = train ? summary.train : summary.test;
    const fs::path split = dir / (train ? "train" : "test");
    const std::string vid = synth::split_video_id(train);
    REQUIRE(s.video_id == vid);

    std::vector<dir::KSeqRecord> kseq = io::read_kseq((split / "kseq.jsonl").string());
    REQUIRE(kseq.size() == s.rallies);
    std::size_t pair_total = 0;
    for (const dir::KSeqRecord& rec : kseq) {
      REQUIRE(rec.video_id == vid);
      REQUIRE(rec.labeled());
      REQUIRE(rec.labels.size() == rec.pairs.size());
      for (dir::DirectionToken t : rec.labels) REQUIRE(t != dir::DirectionToken::Pad);
      pair_total += rec.pairs.size();
    }
    REQUIRE(pair_total == s.pairs);

    std::vector<io::SegmentsRecord> segs = io::read_segments((split / "segments.jsonl").string());
    REQUIRE(segs.size() == 1);
    REQUIRE(segs[0].video_id == vid);
    REQUIRE(segs[0].rallies.size() == s.rallies);

    std::vector<rally::AngleStream> streams =
        io::read_angle_streams((split / "angles.jsonl").string());
    REQUIRE(streams.size() == 1);
    REQUIRE(streams[0].tokens.size() == s.frames);
    std::vector<rally::RallySegment> segmented = rally::segment_rallies(streams[0]);
    REQUIRE(segmented.size() == s.rallies);
    for (std::size_t i = 0; i < segmented.size(); ++i) {
      REQUIRE(segmented[i].start_frame == segs[0].rallies[i].start_frame);
      REQUIRE(segmented[i].end_frame == segs[0].rallies[i].end_frame);
    }

    std::vector<io::KeypointsRecord> kp = io::read_keypoints((split / "keypoints.jsonl").string());
    REQUIRE(kp.size() == s.frames);
    for (std::size_t f = 0; f < kp.size(); ++f) {
      REQUIRE(kp[f].frame == static_cast<long long>(f));
      REQUIRE(kp[f].has_court);
    }

    std::vector<io::HitsRecord> hits_rec = io::read_hits((split / "hits.jsonl").string());
    REQUIRE(hits_rec.size() == s.rallies);
    std::size_t hit_total = 0;
    for (const io::HitsRecord& h : hits_rec) hit_total += h.hits_local.size();
    REQUIRE(hit_total == s.hits);
  }

  io::Json manifest = io::read_json_file((dir / "manifest.json").string());
  REQUIRE(manifest.at("config").at("seed").get<std::uint64_t>() == 101);
  REQUIRE(manifest.at("config").at("rallies").get<std::size_t>() == 10);
  REQUIRE(manifest.at("train").at("rallies").get<std::size_t>() == 8);
  REQUIRE(manifest.at("test").at("rallies").get<std::size_t>() == 2);
  REQUIRE(manifest.at("train").at("frames").get<std::size_t>() == summary.train.frames);
}

TEST_CASE("stored gold chain is internally consistent", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 31;
  cfg.rallies = 6;
  fs::path dir = fresh_dir("hitframe_synth_gold");
  synth::generate_dataset(cfg, dir.string());

  for (const char* split : {"train", "test"}) {
    const fs::path base = dir / split;
    std::vector<io::DirectionRecord> dirs = io::read_directions((base / "directions.jsonl").string());
    std::vector<io::HitsRecord> gold = io::read_hits((base / "hits.jsonl").string());
    std::vector<io::SegmentsRecord> segs = io::read_segments((base / "segments.jsonl").string());
    REQUIRE(dirs.size() == gold.size());
    REQUIRE(segs.size() == 1);
    REQUIRE(segs[0].rallies.size() == dirs.size());

    for (std::size_t i = 0; i < dirs.size(); ++i) {
      REQUIRE(dirs[i].rally_id == gold[i].rally_id);
      REQUIRE(dirs[i].start_frame == static_cast<long long>(segs[0].rallies[i].start_frame));
      hits::HitFrameSet detected = hits::detect_hits(dirs[i].seq);
      REQUIRE(std::vector<long long>(detected.indices.begin(), detected.indices.end()) ==
              gold[i].hits_local);
      std::vector<std::size_t> global = hits::to_global(detected, segs[0].rallies[i]);
      REQUIRE(std::vector<long long>(global.begin(), global.end()) == gold[i].hits_global);
    }
  }
}

TEST_CASE("court filtering recovers the stored pairs from raw keypoints", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 43;
  cfg.rallies = 5;
  fs::path dir = fresh_dir("hitframe_synth_filter");
  synth::generate_dataset(cfg, dir.string());

  for (const char* split : {"train", "test"}) {
    const fs::path base = dir / split;
    std::vector<io::KeypointsRecord> kp = io::read_keypoints((base / "keypoints.jsonl").string());
    std::vector<dir::KSeqRecord> kseq = io::read_kseq((base / "kseq.jsonl").string());
    std::vector<io::SegmentsRecord> segs = io::read_segments((base / "segments.jsonl").string());

    REQUIRE(kseq.size() == segs[0].rallies.size());
    for (std::size_t i = 0; i < kseq.size(); ++i) {
      const rally::RallySegment& seg = segs[0].rallies[i];
      REQUIRE(kseq[i].start_frame == static_cast<long long>(seg.start_frame));
      for (std::size_t f = 0; f < kseq[i].pairs.size(); ++f) {
        const io::KeypointsRecord& rec = kp.at(seg.start_frame + f);
        geom::PlayerKeypointPair filtered = geom::filter_players(rec.instances, rec.court);
        REQUIRE(same_pair(filtered, kseq[i].pairs[f]));
      }
    }
  }
}

TEST_CASE("regenerating a dataset reproduces every file byte for byte", "[synth]") {
  synth::SynthConfig cfg;
  cfg.seed = 55;
  cfg.rallies = 4;
  cfg.images = synth::ImageMode::all;
  cfg.image_hw = 16;
  fs::path a = fresh_dir("hitframe_synth_rg_a");
  fs::path b = fresh_dir("hitframe_synth_rg_b");
  synth::generate_dataset(cfg, a.string());
  synth::generate_dataset(cfg, b.string());

  std::vector<std::string> files = {"manifest.json"};
  for (const char* split : {"train/", "test/"}) {
    for (const char* name :
         {"angles.jsonl", "keypoints.jsonl", "segments.jsonl", "kseq.jsonl", "directions.jsonl",
          "hits.jsonl", "frames.hft"}) {
      files.push_back(std::string(split) + name);
    }
  }
  for (const std::string& rel : files) {
    INFO(rel);
    REQUIRE(slurp(a / rel) == slurp(b / rel));
  }
}

TEST_CASE("angle imagery separates the two classes", "[synth]") {
  synth::SynthConfig cfg;
  cfg.image_hw = 16;
  const std::uint64_t key = mix_key(3, 0x7e571, 12);
  std::vector<std::uint8_t> high = synth::angle_image(cfg, key, true);
  std::vector<std::uint8_t> other = synth::angle_image(cfg, key, false);
  REQUIRE(high.size() == 3 * 16 * 16);
  REQUIRE(other.size() == high.size());
  REQUIRE(high != other);

  std::vector<std::uint8_t> high2 = synth::angle_image(cfg, mix_key(3, 0x7e571, 13), true);
  std::vector<std::uint8_t> other2 = synth::angle_image(cfg, mix_key(3, 0x7e571, 13), false);
  REQUIRE(high2 != high);
  REQUIRE(other2 != other);
  REQUIRE(synth::angle_image(cfg, key, true) == high);
}

TEST_CASE("image mode names round-trip", "[synth]") {
  for (synth::ImageMode m :
       {synth::ImageMode::none, synth::ImageMode::all, synth::ImageMode::test_only}) {
    REQUIRE(synth::image_mode_from(synth::image_mode_name(m)) == m);
  }
  REQUIRE_ERR(synth::image_mode_from("sometimes"), Errc::parse_failure);
}
