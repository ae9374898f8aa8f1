#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hitframe/pipeline.hpp"
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

fs::path make_dataset(const std::string& name, std::uint64_t seed, std::size_t rallies) {
  synth::SynthConfig cfg;
  cfg.seed = seed;
  cfg.rallies = rallies;
  fs::path dir = fresh_dir(name);
  synth::generate_dataset(cfg, dir.string());
  return dir;
}

pipeline::PipelineConfig oracle_config(const fs::path& split, const fs::path& out) {
  pipeline::PipelineConfig cfg;
  cfg.out_dir = out.string();
  cfg.angles_path = (split / "angles.jsonl").string();
  cfg.keypoints_path = (split / "keypoints.jsonl").string();
  cfg.gold_directions_path = (split / "directions.jsonl").string();
  cfg.gold_segments_path = (split / "segments.jsonl").string();
  cfg.gold_hits_path = (split / "hits.jsonl").string();
  return cfg;
}

// In-court skeleton for hand-built filter scenarios: all joints sit at the
// center, ankles hang low enough to set the screen order.
geom::SkeletonKeypoints court_player(double cx, double cy) {
  geom::SkeletonKeypoints s;
  for (auto& p : s.pts) p = {cx, cy};
  s.pts[geom::SkeletonKeypoints::kLeftAnkle] = {cx - 10.0, cy + 60.0};
  s.pts[geom::SkeletonKeypoints::kRightAnkle] = {cx + 10.0, cy + 60.0};
  return s;
}

io::KeypointsRecord court_frame(const std::string& video, long long frame) {
  io::KeypointsRecord rec;
  rec.video_id = video;
  rec.frame = frame;
  rec.has_court = true;
  rec.court = synth::default_court();
  rec.instances.push_back(court_player(940.0, 740.0));
  rec.instances.push_back(court_player(980.0, 420.0));
  return rec;
}

}  // namespace

TEST_CASE("oracle pipeline reproduces the gold hits exactly", "[pipeline]") {
  fs::path data = make_dataset("hitframe_pl_oracle", 33, 6);
  fs::path out = fresh_dir("hitframe_pl_oracle_out");
  pipeline::PipelineConfig cfg = oracle_config(data / "train", out);
  cfg.formats = {"json", "table", "csv"};
  pipeline::PipelineResult result = pipeline::run_pipeline(cfg);

  REQUIRE(slurp(out / "hits.jsonl") == slurp(data / "train" / "hits.jsonl"));
  REQUIRE(slurp(out / "directions.jsonl") == slurp(data / "train" / "directions.jsonl"));
  REQUIRE(slurp(out / "segments.jsonl") == slurp(data / "train" / "segments.jsonl"));

  // angles.jsonl is only produced when the pipeline classifies raw frames;
  // a precomputed stream is consumed in place.
  for (const char* name : {"report.json", "report.txt", "report.csv", "manifest.json"}) {
    REQUIRE(fs::exists(out / name));
  }
  REQUIRE_FALSE(fs::exists(out / "angles.jsonl"));

  io::Json report = io::read_json_file((out / "report.json").string());
  REQUIRE(report.at("trimming").at("accuracy").get<double>() == 1.0);
  REQUIRE(report.at("trimming").at("f1").get<double>() == 1.0);
  // Oracle directions are the reference themselves, so no token report.
  REQUIRE_FALSE(report.contains("tokens"));
  REQUIRE(report.at("hit_tolerance").size() == cfg.tols.size());
  for (const auto& entry : report.at("hit_tolerance")) {
    REQUIRE(entry.at("metrics").at("f1").get<double>() == 1.0);
    REQUIRE(entry.at("counts").at("fp").get<long long>() == 0);
    REQUIRE(entry.at("counts").at("fn").get<long long>() == 0);
  }

  io::Json manifest = io::read_json_file((out / "manifest.json").string());
  REQUIRE(manifest.at("rallies").get<std::size_t>() == result.hits.size());
  REQUIRE(manifest.at("config").at("seed").get<std::uint64_t>() == cfg.seed);
}

TEST_CASE("every segmented rally appears exactly once in the hit output", "[pipeline]") {
  fs::path data = make_dataset("hitframe_pl_once", 39, 5);
  fs::path out = fresh_dir("hitframe_pl_once_out");
  pipeline::PipelineResult result = pipeline::run_pipeline(oracle_config(data / "train", out));

  std::size_t segmented = 0;
  for (const auto& rec : result.segments) segmented += rec.rallies.size();
  REQUIRE(result.hits.size() == segmented);

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& rec : result.hits) {
    REQUIRE(seen.emplace(rec.video_id, rec.rally_id).second);
  }

  std::vector<io::HitsRecord> written = io::read_hits((out / "hits.jsonl").string());
  REQUIRE(written.size() == segmented);
}

TEST_CASE("strict mode aborts on a broken frame, lenient mode recovers", "[pipeline]") {
  fs::path data = make_dataset("hitframe_pl_strict", 47, 4);
  const fs::path split = data / "train";

  std::vector<io::KeypointsRecord> kp = io::read_keypoints((split / "keypoints.jsonl").string());
  std::vector<io::SegmentsRecord> segs = io::read_segments((split / "segments.jsonl").string());
  const long long broken = static_cast<long long>(segs[0].rallies[1].start_frame) + 2;
  for (auto& rec : kp) {
    if (rec.frame == broken) rec.instances.resize(1);
  }
  fs::path patched = fresh_dir("hitframe_pl_strict_kp");
  io::write_keypoints((patched / "keypoints.jsonl").string(), kp);

  fs::path out = fresh_dir("hitframe_pl_strict_out");
  pipeline::PipelineConfig cfg = oracle_config(split, out);
  cfg.keypoints_path = (patched / "keypoints.jsonl").string();

  cfg.strict = true;
  try {
    pipeline::run_pipeline(cfg);
    FAIL("strict run must abort");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::insufficient_players);
    REQUIRE(std::string(e.what()).find("synth-train") != std::string::npos);
    REQUIRE(std::string(e.what()).find(std::to_string(broken)) != std::string::npos);
    REQUIRE(std::string(e.what()).find("stage filter") != std::string::npos);
  }

  cfg.strict = false;
  fs::path out2 = fresh_dir("hitframe_pl_lenient_out");
  cfg.out_dir = out2.string();
  pipeline::PipelineResult result = pipeline::run_pipeline(cfg);
  bool noted = false;
  for (const std::string& n : result.notes) {
    noted = noted || n.find("filter fallback") != std::string::npos;
  }
  REQUIRE(noted);
  // Hold-last substitution keeps the rally alive; oracle directions make the
  // hit output insensitive to the repaired frame.
  REQUIRE(slurp(out2 / "hits.jsonl") == slurp(split / "hits.jsonl"));
}

TEST_CASE("dropped rallies still appear with empty hits", "[pipeline]") {
  fs::path data = make_dataset("hitframe_pl_drop", 53, 4);
  const fs::path split = data / "train";

  std::vector<io::KeypointsRecord> kp = io::read_keypoints((split / "keypoints.jsonl").string());
  std::vector<io::SegmentsRecord> segs = io::read_segments((split / "segments.jsonl").string());
  const rally::RallySegment target = segs[0].rallies[2];
  for (auto& rec : kp) {
    if (rec.frame >= static_cast<long long>(target.start_frame) &&
        rec.frame <= static_cast<long long>(target.end_frame)) {
      rec.instances.resize(1);
    }
  }
  fs::path patched = fresh_dir("hitframe_pl_drop_kp");
  io::write_keypoints((patched / "keypoints.jsonl").string(), kp);

  fs::path out = fresh_dir("hitframe_pl_drop_out");
  pipeline::PipelineConfig cfg = oracle_config(split, out);
  cfg.keypoints_path = (patched / "keypoints.jsonl").string();
  cfg.hold_last = false;
  pipeline::PipelineResult result = pipeline::run_pipeline(cfg);

  REQUIRE(result.hits.size() == segs[0].rallies.size());
  const io::HitsRecord& dropped = result.hits[2];
  REQUIRE(dropped.rally_id == "synth-train-r0002");
  REQUIRE(dropped.hits_local.empty());
  REQUIRE(dropped.hits_global.empty());
  bool noted = false;
  for (const std::string& n : result.notes) {
    noted = noted || n.find("synth-train-r0002 dropped") != std::string::npos;
  }
  REQUIRE(noted);
}

TEST_CASE("identical configurations produce byte-identical outputs", "[pipeline]") {
  fs::path data = make_dataset("hitframe_pl_repeat", 59, 4);
  fs::path a = fresh_dir("hitframe_pl_repeat_a");
  fs::path b = fresh_dir("hitframe_pl_repeat_b");
  pipeline::PipelineConfig cfg_a = oracle_config(data / "train", a);
  pipeline::PipelineConfig cfg_b = oracle_config(data / "train", b);
  cfg_a.formats = {"json", "table", "csv"};
  cfg_b.formats = {"json", "table", "csv"};
  pipeline::run_pipeline(cfg_a);
  pipeline::run_pipeline(cfg_b);

  // The manifest echoes the configuration, so it differs by out_dir alone.
  for (const char* name : {"segments.jsonl", "directions.jsonl", "hits.jsonl", "report.json",
                           "report.txt", "report.csv"}) {
    INFO(name);
    REQUIRE(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("missing inputs are rejected up front", "[pipeline]") {
  fs::path data = make_dataset("hitframe_pl_missing", 61, 2);
  fs::path out = fresh_dir("hitframe_pl_missing_out");

  pipeline::PipelineConfig cfg = oracle_config(data / "train", out);
  cfg.keypoints_path = (data / "train" / "nonexistent.jsonl").string();
  REQUIRE_ERR(pipeline::run_pipeline(cfg), Errc::missing_input);

  pipeline::PipelineConfig no_dir = oracle_config(data / "train", out);
  no_dir.gold_directions_path.clear();
  REQUIRE_ERR(pipeline::run_pipeline(no_dir), Errc::missing_input);

  pipeline::PipelineConfig both = oracle_config(data / "train", out);
  both.frames_path = (data / "train" / "frames.hft").string();
  REQUIRE_ERR(pipeline::run_pipeline(both), Errc::bad_config);

  pipeline::PipelineConfig bad_fmt = oracle_config(data / "train", out);
  bad_fmt.formats = {"yaml"};
  REQUIRE_ERR(pipeline::run_pipeline(bad_fmt), Errc::bad_config);
}

TEST_CASE("court filtering walks segments with hold-last repair", "[pipeline]") {
  const std::string video = "cam0";
  std::vector<io::SegmentsRecord> segments(1);
  segments[0].video_id = video;
  segments[0].rallies = {rally::RallySegment{1, 3}, rally::RallySegment{6, 7}};

  std::vector<io::KeypointsRecord> keypoints;
  for (long long f = 0; f <= 7; ++f) keypoints.push_back(court_frame(video, f));
  keypoints[2].instances.resize(1);

  SECTION("lenient hold-last fills the gap and keeps both rallies") {
    std::vector<std::string> notes;
    std::vector<pipeline::RallyWork> work =
        pipeline::filter_rally_work(segments, keypoints, {false, true}, notes);
    REQUIRE(work.size() == 2);
    REQUIRE(work[0].rally_id == "cam0-r0000");
    REQUIRE(work[1].rally_id == "cam0-r0001");
    REQUIRE(work[0].pairs.size() == 3);
    REQUIRE(work[1].pairs.size() == 2);
    REQUIRE(notes.size() == 1);
    REQUIRE(notes[0].find("filter fallback at cam0 frame 2") != std::string::npos);
    // The repaired frame copies its predecessor.
    REQUIRE(work[0].pairs[1].bottom_player.pts[0].x == work[0].pairs[0].bottom_player.pts[0].x);
    // Screen order: the low player lands in the bottom slot.
    REQUIRE(work[0].pairs[0].bottom_player.ankle_mid().y >
            work[0].pairs[0].top_player.ankle_mid().y);
  }

  SECTION("strict mode raises with the frame identity") {
    std::vector<std::string> notes;
    try {
      pipeline::filter_rally_work(segments, keypoints, {true, true}, notes);
      FAIL("strict filtering must abort");
    } catch (const Error& e) {
      REQUIRE(e.code() == Errc::insufficient_players);
      REQUIRE(std::string(e.what()).find("cam0 frame 2") != std::string::npos);
    }
  }

  SECTION("without hold-last the gapped rally is dropped but still listed") {
    std::vector<std::string> notes;
    std::vector<pipeline::RallyWork> work =
        pipeline::filter_rally_work(segments, keypoints, {false, false}, notes);
    REQUIRE(work.size() == 2);
    REQUIRE(work[0].pairs.empty());
    REQUIRE(work[1].pairs.size() == 2);
    bool noted = false;
    for (const std::string& n : notes) {
      noted = noted || n.find("cam0-r0000 dropped") != std::string::npos;
    }
    REQUIRE(noted);
  }

  SECTION("a leading gap is repaired backward from the first usable frame") {
    std::vector<io::KeypointsRecord> kp2 = keypoints;
    kp2[1].instances.clear();
    kp2[1].instances.push_back(court_player(500.0, 200.0));
    std::vector<std::string> notes;
    std::vector<pipeline::RallyWork> work =
        pipeline::filter_rally_work(segments, kp2, {false, true}, notes);
    REQUIRE(work[0].pairs.size() == 3);
    REQUIRE(work[0].pairs[0].bottom_player.pts[0].x == work[0].pairs[2].bottom_player.pts[0].x);
  }

  SECTION("missing keypoints for a whole video is an input error") {
    std::vector<io::SegmentsRecord> other(1);
    other[0].video_id = "cam9";
    other[0].rallies = {rally::RallySegment{0, 1}};
    std::vector<std::string> notes;
    REQUIRE_ERR(pipeline::filter_rally_work(other, keypoints, {false, true}, notes),
                Errc::missing_input);
  }
}
