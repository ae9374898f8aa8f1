// Command-line front end. Every subcommand reads and writes the documented
// JSON-lines or checkpoint files so stages compose through the filesystem and
// stay independently testable. Exit codes: 0 success, 1 stage failure,
// 2 missing inputs. No environment variables are consulted.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hitframe/angle_cnn.hpp"
#include "hitframe/common.hpp"
#include "hitframe/detector.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/evaluation.hpp"
#include "hitframe/io/binary.hpp"
#include "hitframe/io/jsonl.hpp"
#include "hitframe/kseq.hpp"
#include "hitframe/pipeline.hpp"
#include "hitframe/rally.hpp"
#include "hitframe/synth.hpp"
#include "hitframe/transformer.hpp"

namespace {

using namespace hitframe;

constexpr int kExitOk = 0;
constexpr int kExitStageFailure = 1;
constexpr int kExitMissingInput = 2;

int exit_code_for(const Error& e) {
  return e.code() == Errc::missing_input ? kExitMissingInput : kExitStageFailure;
}

io::Json read_config_file(const std::string& path) {
  pipeline::require_readable(path, "config file");
  return io::read_json_file(path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::io_failure, "cannot write " + path);
  os << text;
  require(os.good(), Errc::io_failure, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// synth: generate a labeled synthetic dataset
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string images;
};

int run_synth(const SynthArgs& a) {
  synth::SynthConfig cfg;
  if (!a.config_path.empty()) cfg = synth::synth_from_json(read_config_file(a.config_path));
  if (a.seed.has_value()) cfg.seed = *a.seed;
  if (!a.images.empty()) cfg.images = synth::image_mode_from(a.images);
  synth::DatasetSummary summary = synth::generate_dataset(cfg, a.out_dir);
  std::cout << synth::format_summary(summary);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train-angle / classify: shot-angle CNN
// ---------------------------------------------------------------------------

struct TrainAngleArgs {
  std::string frames_path;
  std::string angles_path;
  std::string out_path;
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

int run_train_angle(const TrainAngleArgs& a) {
  pipeline::require_readable(a.frames_path, "frame container");
  pipeline::require_readable(a.angles_path, "angle stream");

  angle::SaCnnConfig model_cfg = angle::SaCnnConfig::desk();
  angle::AngleTrainConfig train_cfg;
  angle::PreprocessConfig pp;
  pp.resize_h = model_cfg.input_hw;
  pp.resize_w = model_cfg.input_hw;
  pp.crop = model_cfg.input_hw;
  if (!a.config_path.empty()) {
    io::Json j = read_config_file(a.config_path);
    if (j.contains("model")) model_cfg = angle::sacnn_from_json(j["model"]);
    if (j.contains("train")) {
      angle::AngleTrainConfig parsed;
      const io::Json& t = j["train"];
      parsed.epochs = t.value("epochs", parsed.epochs);
      parsed.batch_size = t.value("batch_size", parsed.batch_size);
      parsed.seed = t.value("seed", parsed.seed);
      parsed.weight_decay = t.value("weight_decay", parsed.weight_decay);
      if (t.contains("lr")) parsed.schedule.base_lr = t["lr"].get<double>();
      if (t.contains("lr_decay")) parsed.schedule.decay_factor = t["lr_decay"].get<double>();
      if (t.contains("milestones")) {
        parsed.schedule.milestones = t["milestones"].get<std::vector<int>>();
      }
      train_cfg = parsed;
    }
    if (j.contains("preprocess")) pp = angle::preprocess_from_json(j["preprocess"]);
  }
  if (a.seed.has_value()) train_cfg.seed = *a.seed;

  io::U8Tensor container = io::load_u8_tensor(a.frames_path);
  std::vector<rally::AngleStream> streams = io::read_angle_streams(a.angles_path);
  require(!streams.empty(), Errc::empty_input, "angle file has no streams");
  angle::AngleDataset dataset = pipeline::dataset_from_container(container, streams.front(), pp);

  angle::AngleTrainResult res = angle::train_sacnn(dataset, model_cfg, train_cfg);
  angle::save_sacnn(a.out_path, res.model, pp);
  for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
    std::printf("epoch %zu  loss %.6f\n", e, res.epoch_losses[e]);
  }
  std::printf("saved %s\n", a.out_path.c_str());
  return kExitOk;
}

struct ClassifyArgs {
  std::string frames_path;
  std::string checkpoint_path;
  std::string out_path;
};

int run_classify(const ClassifyArgs& a) {
  pipeline::require_readable(a.frames_path, "frame container");
  pipeline::require_readable(a.checkpoint_path, "angle checkpoint");
  io::U8Tensor container = io::load_u8_tensor(a.frames_path);
  angle::LoadedSaCnn loaded = angle::load_sacnn(a.checkpoint_path);
  std::vector<nn::Tensor> inputs = pipeline::preprocess_container(container, loaded.preprocess);
  auto vid = container.meta.find("video_id");
  auto fps = container.meta.find("fps");
  rally::AngleStream stream = angle::classify_stream(
      inputs, loaded.model, vid != container.meta.end() ? vid->second : "video-0",
      fps != container.meta.end() ? std::stod(fps->second) : 30.0);
  std::vector<rally::AngleStream> out{std::move(stream)};
  io::write_angle_streams(a.out_path, out);
  std::printf("wrote %s (%zu frames)\n", a.out_path.c_str(), out.front().tokens.size());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// segment / filter: rally extraction
// ---------------------------------------------------------------------------

struct SegmentArgs {
  std::string angles_path;
  std::string out_path;
  long long min_run = 1;
};

int run_segment(const SegmentArgs& a) {
  pipeline::require_readable(a.angles_path, "angle stream");
  require(a.min_run >= 1, Errc::bad_config, "--min-run must be at least 1");
  std::vector<io::SegmentsRecord> records;
  for (const rally::AngleStream& s : io::read_angle_streams(a.angles_path)) {
    rally::AngleStream smoothed = rally::smooth_stream(s, static_cast<std::size_t>(a.min_run));
    io::SegmentsRecord rec;
    rec.video_id = s.video_id;
    rec.rallies = rally::segment_rallies(smoothed);
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const auto& x, const auto& y) { return x.video_id < y.video_id; });
  io::write_segments(a.out_path, records);
  std::size_t total = 0;
  for (const auto& r : records) total += r.rallies.size();
  std::printf("wrote %s (%zu rallies)\n", a.out_path.c_str(), total);
  return kExitOk;
}

struct FilterArgs {
  std::string keypoints_path;
  std::string segments_path;
  std::string out_path;
  bool strict = false;
  bool no_hold_last = false;
};

int run_filter(const FilterArgs& a) {
  pipeline::require_readable(a.keypoints_path, "keypoints file");
  pipeline::require_readable(a.segments_path, "segments file");
  std::vector<std::string> notes;
  std::vector<pipeline::RallyWork> work = pipeline::filter_rally_work(
      io::read_segments(a.segments_path), io::read_keypoints(a.keypoints_path),
      pipeline::FilterOptions{a.strict, !a.no_hold_last}, notes);
  std::vector<dir::KSeqRecord> records;
  for (pipeline::RallyWork& rw : work) {
    if (rw.pairs.empty()) continue;
    dir::KSeqRecord rec;
    rec.rally_id = rw.rally_id;
    rec.video_id = rw.video_id;
    rec.start_frame = static_cast<long long>(rw.segment.start_frame);
    rec.pairs = std::move(rw.pairs);
    records.push_back(std::move(rec));
  }
  io::write_kseq(a.out_path, records);
  for (const std::string& n : notes) std::fprintf(stderr, "note: %s\n", n.c_str());
  std::printf("wrote %s (%zu rallies)\n", a.out_path.c_str(), records.size());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train-direction / predict / detect: direction transformer and hits
// ---------------------------------------------------------------------------

struct TrainDirectionArgs {
  std::string kseq_path;
  std::string out_path;
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

int run_train_direction(const TrainDirectionArgs& a) {
  pipeline::require_readable(a.kseq_path, "keypoint sequences");

  dir::TransformerConfig model_cfg = dir::TransformerConfig::desk();
  dir::DirectionTrainConfig train_cfg = dir::DirectionTrainConfig::desk();
  if (!a.config_path.empty()) {
    io::Json j = read_config_file(a.config_path);
    if (j.contains("model")) model_cfg = dir::transformer_from_json(j["model"]);
    if (j.contains("train")) {
      const io::Json& t = j["train"];
      train_cfg.epochs = t.value("epochs", train_cfg.epochs);
      train_cfg.seed = t.value("seed", train_cfg.seed);
      train_cfg.weight_decay = t.value("weight_decay", train_cfg.weight_decay);
      if (t.contains("lr")) train_cfg.schedule.base_lr = t["lr"].get<double>();
      if (t.contains("lr_decay")) train_cfg.schedule.decay_factor = t["lr_decay"].get<double>();
      if (t.contains("milestones")) {
        train_cfg.schedule.milestones = t["milestones"].get<std::vector<int>>();
      }
    }
  }
  if (a.seed.has_value()) train_cfg.seed = *a.seed;

  std::vector<dir::KSeqRecord> records = io::read_kseq(a.kseq_path);
  dir::DirectionTrainResult res = dir::train_direction_model(records, model_cfg, train_cfg);
  dir::save_direction_model(a.out_path, res.model);
  for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
    std::printf("epoch %zu  loss %.6f\n", e, res.epoch_losses[e]);
  }
  std::printf("saved %s\n", a.out_path.c_str());
  return kExitOk;
}

struct PredictArgs {
  std::string kseq_path;
  std::string checkpoint_path;
  std::string out_path;
};

int run_predict(const PredictArgs& a) {
  pipeline::require_readable(a.kseq_path, "keypoint sequences");
  pipeline::require_readable(a.checkpoint_path, "direction checkpoint");
  dir::DirectionModel model = dir::load_direction_model(a.checkpoint_path);
  std::vector<io::DirectionRecord> out;
  for (const dir::KSeqRecord& rec : io::read_kseq(a.kseq_path)) {
    io::DirectionRecord d;
    d.rally_id = rec.rally_id;
    d.video_id = rec.video_id;
    d.start_frame = rec.start_frame;
    d.seq = dir::predict_directions(rec.pairs, model, rec.rally_id);
    out.push_back(std::move(d));
  }
  io::write_directions(a.out_path, out);
  std::printf("wrote %s (%zu rallies)\n", a.out_path.c_str(), out.size());
  return kExitOk;
}

struct DetectArgs {
  std::string directions_path;
  std::string out_path;
};

int run_detect(const DetectArgs& a) {
  pipeline::require_readable(a.directions_path, "direction file");
  std::vector<io::HitsRecord> out;
  std::size_t total = 0;
  for (const io::DirectionRecord& rec : io::read_directions(a.directions_path)) {
    hits::HitFrameSet set = hits::detect_hits(rec.seq);
    io::HitsRecord h;
    h.video_id = rec.video_id;
    h.rally_id = rec.rally_id;
    h.hits_local.assign(set.indices.begin(), set.indices.end());
    for (std::size_t i : set.indices) {
      h.hits_global.push_back(rec.start_frame + static_cast<long long>(i));
    }
    total += h.hits_local.size();
    out.push_back(std::move(h));
  }
  io::write_hits(a.out_path, out);
  std::printf("wrote %s (%zu hits)\n", a.out_path.c_str(), total);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval / report: metric computation and rendering
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gold_segments, pred_segments;
  std::string gold_directions, pred_directions;
  std::string gold_hits, pred_hits;
  std::string angles_path;
  std::vector<long long> tols;
  std::string format = "table";
  std::string out_path;
};

int run_eval(const EvalArgs& a) {
  require(a.format == "json" || a.format == "table" || a.format == "csv", Errc::bad_config,
          "--format must be json, table, or csv");
  std::optional<eval::TrimmingReport> trimming;
  std::optional<eval::TokenReport> tokens;
  std::vector<eval::ToleranceReport> tolerance;

  if (!a.gold_segments.empty() || !a.pred_segments.empty()) {
    require(!a.gold_segments.empty() && !a.pred_segments.empty(), Errc::bad_config,
            "trimming evaluation needs both --gold-segments and --pred-segments");
    pipeline::require_readable(a.gold_segments, "gold segments");
    pipeline::require_readable(a.pred_segments, "predicted segments");
    std::map<std::string, std::vector<rally::RallySegment>> gold;
    for (auto& rec : io::read_segments(a.gold_segments)) gold[rec.video_id] = rec.rallies;
    long long correct = 0, extra = 0, missed = 0;
    std::vector<io::SegmentsRecord> preds = io::read_segments(a.pred_segments);
    for (const auto& rec : preds) {
      auto git = gold.find(rec.video_id);
      std::vector<rally::RallySegment> actual =
          git == gold.end() ? std::vector<rally::RallySegment>{} : git->second;
      eval::TrimmingReport r = eval::trimming_report(rec.rallies, actual);
      correct += r.correct;
      extra += r.extra;
      missed += r.missed;
    }
    for (const auto& [vid, actual] : gold) {
      bool seen = false;
      for (const auto& rec : preds) seen = seen || rec.video_id == vid;
      if (!seen) missed += static_cast<long long>(actual.size());
    }
    trimming = eval::trimming_from_counts(correct, extra, missed);
  }

  if (!a.gold_directions.empty() || !a.pred_directions.empty()) {
    require(!a.gold_directions.empty() && !a.pred_directions.empty(), Errc::bad_config,
            "token evaluation needs both --gold-directions and --pred-directions");
    pipeline::require_readable(a.gold_directions, "gold directions");
    pipeline::require_readable(a.pred_directions, "predicted directions");
    std::map<std::string, io::DirectionRecord> gold;
    for (auto& rec : io::read_directions(a.gold_directions)) gold[rec.rally_id] = rec;
    std::array<eval::BinaryCounts, 3> counts{};
    bool any = false;
    for (const auto& rec : io::read_directions(a.pred_directions)) {
      auto git = gold.find(rec.rally_id);
      if (git == gold.end() || git->second.seq.tokens.size() != rec.seq.tokens.size()) {
        std::fprintf(stderr, "note: token report skips rally %s: no matching gold labels\n",
                     rec.rally_id.c_str());
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
    require(any, Errc::empty_evaluation, "no rally had matching gold direction labels");
    tokens = eval::token_report_from_counts(counts);
  }

  if (!a.gold_hits.empty() || !a.pred_hits.empty()) {
    require(!a.gold_hits.empty() && !a.pred_hits.empty(), Errc::bad_config,
            "hit evaluation needs both --gold-hits and --pred-hits");
    require(!a.angles_path.empty(), Errc::bad_config,
            "hit evaluation needs --angles for per-video frame counts");
    pipeline::require_readable(a.gold_hits, "gold hits");
    pipeline::require_readable(a.pred_hits, "predicted hits");
    pipeline::require_readable(a.angles_path, "angle stream");
    std::map<std::string, std::size_t> stream_frames;
    for (const auto& s : io::read_angle_streams(a.angles_path)) {
      stream_frames[s.video_id] = s.tokens.size();
    }
    std::map<std::string, std::vector<long long>> gold_by_video, pred_by_video;
    for (auto& rec : io::read_hits(a.gold_hits)) {
      auto& dst = gold_by_video[rec.video_id];
      dst.insert(dst.end(), rec.hits_global.begin(), rec.hits_global.end());
    }
    for (auto& rec : io::read_hits(a.pred_hits)) {
      auto& dst = pred_by_video[rec.video_id];
      dst.insert(dst.end(), rec.hits_global.begin(), rec.hits_global.end());
    }
    std::vector<long long> tols = a.tols.empty() ? std::vector<long long>{5, 15, 25} : a.tols;
    for (long long tol : tols) {
      eval::BinaryCounts total{};
      for (const auto& [vid, frames] : stream_frames) {
        std::vector<long long> pred, actual;
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

  require(trimming.has_value() || tokens.has_value() || !tolerance.empty(), Errc::bad_config,
          "nothing to evaluate: pass at least one gold/pred pair");

  std::string text;
  if (a.format == "json") {
    io::Json doc;
    doc["schema_version"] = kSchemaVersion;
    if (trimming.has_value()) doc["trimming"] = eval::to_json(*trimming);
    if (tokens.has_value()) doc["tokens"] = eval::to_json(*tokens);
    if (!tolerance.empty()) {
      io::Json arr = io::Json::array();
      for (const auto& r : tolerance) arr.push_back(io::Json(eval::to_json(r)));
      doc["hit_tolerance"] = std::move(arr);
    }
    text = doc.dump(2) + "\n";
  } else {
    const bool table = a.format == "table";
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
  }
  if (a.out_path.empty()) {
    std::cout << text;
  } else {
    write_text(a.out_path, text);
  }
  return kExitOk;
}

struct ReportArgs {
  std::string report_path;
  std::string format = "table";
  std::string out_path;
};

int run_report(const ReportArgs& a) {
  require(a.format == "json" || a.format == "table" || a.format == "csv", Errc::bad_config,
          "--format must be json, table, or csv");
  pipeline::require_readable(a.report_path, "report file");
  io::Json doc = io::read_json_file(a.report_path);

  std::string text;
  if (a.format == "json") {
    text = doc.dump(2) + "\n";
  } else {
    const bool table = a.format == "table";
    try {
      if (doc.contains("trimming")) {
        const io::Json& j = doc["trimming"];
        eval::TrimmingReport r = eval::trimming_from_counts(j.at("correct").get<long long>(),
                                                            j.at("extra").get<long long>(),
                                                            j.at("missed").get<long long>());
        text += table ? eval::render_table(r) : eval::render_csv(r);
        text += "\n";
      }
      if (doc.contains("tokens")) {
        const io::Json& j = doc["tokens"];
        std::array<eval::BinaryCounts, 3> counts{};
        const char* names[3] = {"S", "B", "U"};
        for (int t = 0; t < 3; ++t) {
          const io::Json& c = j.at(names[t]).at("counts");
          counts[t] = eval::BinaryCounts{
              c.at("tp").get<long long>(), c.at("fp").get<long long>(),
              c.at("fn").get<long long>(), c.at("tn").get<long long>()};
        }
        eval::TokenReport r = eval::token_report_from_counts(counts);
        text += table ? eval::render_table(r) : eval::render_csv(r);
        text += "\n";
      }
      if (doc.contains("hit_tolerance")) {
        std::vector<eval::ToleranceReport> reports;
        for (const io::Json& j : doc["hit_tolerance"]) {
          eval::ToleranceReport r;
          r.tol = j.at("tol").get<long long>();
          const io::Json& c = j.at("counts");
          r.counts = eval::BinaryCounts{
              c.at("tp").get<long long>(), c.at("fp").get<long long>(),
              c.at("fn").get<long long>(), c.at("tn").get<long long>()};
          r.metrics = eval::binary_metrics(r.counts);
          reports.push_back(r);
        }
        text += table ? eval::render_table(reports) : eval::render_csv(reports);
        text += "\n";
      }
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure, a.report_path + ": " + e.what());
    }
  }
  if (a.out_path.empty()) {
    std::cout << text;
  } else {
    write_text(a.out_path, text);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pipeline: full composition with a failure manifest on stage errors
// ---------------------------------------------------------------------------

struct PipelineArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<long long> min_run;
  bool strict = false;
  std::vector<long long> tols;
  std::vector<std::string> formats;
};

int run_pipeline_cmd(const PipelineArgs& a) {
  pipeline::PipelineConfig cfg;
  if (!a.config_path.empty()) cfg = pipeline::pipeline_from_json(read_config_file(a.config_path));
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  if (a.seed.has_value()) cfg.seed = *a.seed;
  if (a.min_run.has_value()) cfg.min_run = *a.min_run;
  if (a.strict) cfg.strict = true;
  if (!a.tols.empty()) cfg.tols = a.tols;
  if (!a.formats.empty()) cfg.formats = a.formats;

  try {
    pipeline::PipelineResult res = pipeline::run_pipeline(cfg);
    for (const std::string& n : res.notes) std::fprintf(stderr, "note: %s\n", n.c_str());
    std::size_t hits = 0;
    for (const auto& rec : res.hits) hits += rec.hits_global.size();
    std::printf("pipeline complete: %zu videos, %zu rallies, %zu hits -> %s\n",
                res.segments.size(), res.hits.size(), hits, cfg.out_dir.c_str());
    return kExitOk;
  } catch (const Error& e) {
    if (!cfg.out_dir.empty() && std::filesystem::exists(cfg.out_dir)) {
      io::Json manifest;
      manifest["schema_version"] = kSchemaVersion;
      manifest["error"] = {{"code", errc_name(e.code())}, {"message", e.what()}};
      io::write_json_file(cfg.out_dir + "/failure.json", manifest);
    }
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"badminton hit-frame pipeline"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth_cmd->add_option("--out", synth_args.out_dir, "output dataset directory")->required();
  synth_cmd->add_option("--config", synth_args.config_path, "generator config JSON");
  synth_cmd->add_option("--seed", synth_args.seed, "override the generator seed");
  synth_cmd->add_option("--images", synth_args.images, "frame images: none, all, test-only");

  TrainAngleArgs ta_args;
  CLI::App* ta_cmd = app.add_subcommand("train-angle", "train the shot-angle classifier");
  ta_cmd->add_option("--frames", ta_args.frames_path, "training frame container")->required();
  ta_cmd->add_option("--angles", ta_args.angles_path, "gold angle stream")->required();
  ta_cmd->add_option("--out", ta_args.out_path, "checkpoint output path")->required();
  ta_cmd->add_option("--config", ta_args.config_path, "model/train/preprocess config JSON");
  ta_cmd->add_option("--seed", ta_args.seed, "override the training seed");

  ClassifyArgs cl_args;
  CLI::App* cl_cmd = app.add_subcommand("classify", "classify frames into an angle stream");
  cl_cmd->add_option("--frames", cl_args.frames_path, "frame container")->required();
  cl_cmd->add_option("--checkpoint", cl_args.checkpoint_path, "angle checkpoint")->required();
  cl_cmd->add_option("--out", cl_args.out_path, "angle stream output path")->required();

  SegmentArgs sg_args;
  CLI::App* sg_cmd = app.add_subcommand("segment", "segment rallies from an angle stream");
  sg_cmd->add_option("--angles", sg_args.angles_path, "angle stream")->required();
  sg_cmd->add_option("--out", sg_args.out_path, "segments output path")->required();
  sg_cmd->add_option("--min-run", sg_args.min_run, "smoothing: minimum run length to keep");

  FilterArgs fl_args;
  CLI::App* fl_cmd = app.add_subcommand("filter", "filter player keypoints per rally");
  fl_cmd->add_option("--keypoints", fl_args.keypoints_path, "keypoints file")->required();
  fl_cmd->add_option("--segments", fl_args.segments_path, "segments file")->required();
  fl_cmd->add_option("--out", fl_args.out_path, "keypoint sequences output path")->required();
  fl_cmd->add_flag("--strict", fl_args.strict, "abort on any unusable frame");
  fl_cmd->add_flag("--no-hold-last", fl_args.no_hold_last, "disable hold-last substitution");

  TrainDirectionArgs td_args;
  CLI::App* td_cmd = app.add_subcommand("train-direction", "train the direction transformer");
  td_cmd->add_option("--kseq", td_args.kseq_path, "labeled keypoint sequences")->required();
  td_cmd->add_option("--out", td_args.out_path, "checkpoint output path")->required();
  td_cmd->add_option("--config", td_args.config_path, "model/train config JSON");
  td_cmd->add_option("--seed", td_args.seed, "override the training seed");

  PredictArgs pr_args;
  CLI::App* pr_cmd = app.add_subcommand("predict", "predict direction tokens per rally");
  pr_cmd->add_option("--kseq", pr_args.kseq_path, "keypoint sequences")->required();
  pr_cmd->add_option("--checkpoint", pr_args.checkpoint_path, "direction checkpoint")->required();
  pr_cmd->add_option("--out", pr_args.out_path, "directions output path")->required();

  DetectArgs dt_args;
  CLI::App* dt_cmd = app.add_subcommand("detect", "detect hit frames from direction tokens");
  dt_cmd->add_option("--directions", dt_args.directions_path, "direction file")->required();
  dt_cmd->add_option("--out", dt_args.out_path, "hits output path")->required();

  EvalArgs ev_args;
  CLI::App* ev_cmd = app.add_subcommand("eval", "compare predictions against gold files");
  ev_cmd->add_option("--gold-segments", ev_args.gold_segments, "gold segments file");
  ev_cmd->add_option("--pred-segments", ev_args.pred_segments, "predicted segments file");
  ev_cmd->add_option("--gold-directions", ev_args.gold_directions, "gold directions file");
  ev_cmd->add_option("--pred-directions", ev_args.pred_directions, "predicted directions file");
  ev_cmd->add_option("--gold-hits", ev_args.gold_hits, "gold hits file");
  ev_cmd->add_option("--pred-hits", ev_args.pred_hits, "predicted hits file");
  ev_cmd->add_option("--angles", ev_args.angles_path, "angle stream for per-video frame counts");
  ev_cmd->add_option("--tol", ev_args.tols, "hit tolerance in frames (repeatable)");
  ev_cmd->add_option("--format", ev_args.format, "output format: json, table, csv");
  ev_cmd->add_option("--out", ev_args.out_path, "write the report here instead of stdout");

  PipelineArgs pl_args;
  CLI::App* pl_cmd = app.add_subcommand("pipeline", "run the full hit-frame pipeline");
  pl_cmd->add_option("--config", pl_args.config_path, "pipeline config JSON")->required();
  pl_cmd->add_option("--out", pl_args.out_dir, "override the output directory");
  pl_cmd->add_option("--seed", pl_args.seed, "override the pipeline seed");
  pl_cmd->add_option("--min-run", pl_args.min_run, "override segmentation smoothing");
  pl_cmd->add_flag("--strict", pl_args.strict, "abort on any unusable frame");
  pl_cmd->add_option("--tol", pl_args.tols, "hit tolerance in frames (repeatable)");
  pl_cmd->add_option("--format", pl_args.formats, "report formats (repeatable)");

  ReportArgs rp_args;
  CLI::App* rp_cmd = app.add_subcommand("report", "re-render a pipeline report");
  rp_cmd->add_option("--report", rp_args.report_path, "report.json from a pipeline run")
      ->required();
  rp_cmd->add_option("--format", rp_args.format, "output format: json, table, csv");
  rp_cmd->add_option("--out", rp_args.out_path, "write the rendering here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (ta_cmd->parsed()) return run_train_angle(ta_args);
    if (cl_cmd->parsed()) return run_classify(cl_args);
    if (sg_cmd->parsed()) return run_segment(sg_args);
    if (fl_cmd->parsed()) return run_filter(fl_args);
    if (td_cmd->parsed()) return run_train_direction(td_args);
    if (pr_cmd->parsed()) return run_predict(pr_args);
    if (dt_cmd->parsed()) return run_detect(dt_args);
    if (ev_cmd->parsed()) return run_eval(ev_args);
    if (pl_cmd->parsed()) return run_pipeline_cmd(pl_args);
    if (rp_cmd->parsed()) return run_report(rp_args);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  }
  return kExitOk;
}
