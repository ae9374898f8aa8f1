#include <catch2/catch_amalgamated.hpp>

#include "hitframe/rally.hpp"
#include "test_util.hpp"

using namespace hitframe;
using namespace hitframe::rally;

namespace {

AngleStream stream_of(const std::string& tokens) { return {"vid", 30.0, parse_angles(tokens)}; }

std::vector<ShotAngleToken> random_tokens(Rng& rng, std::size_t n) {
  std::vector<ShotAngleToken> out(n);
  for (auto& t : out)
    t = rng.uniform() < 0.5 ? ShotAngleToken::Other : ShotAngleToken::High;
  return out;
}

}  // namespace

TEST_CASE("segmenting maximal high runs", "[rally]") {
  auto segs = segment_rallies(stream_of("OOHHHOO"));
  REQUIRE(segs.size() == 1);
  REQUIRE(segs[0].start_frame == 2);
  REQUIRE(segs[0].end_frame == 4);

  REQUIRE(segment_rallies(stream_of("OOO")).empty());

  auto segs2 = segment_rallies(stream_of("HHOH"));
  REQUIRE(segs2.size() == 2);
  REQUIRE(segs2[0].start_frame == 0);
  REQUIRE(segs2[0].end_frame == 1);
  REQUIRE(segs2[1].start_frame == 3);
  REQUIRE(segs2[1].end_frame == 3);
}

TEST_CASE("empty streams are rejected", "[rally]") {
  REQUIRE_ERR(segment_rallies(stream_of("")), Errc::empty_input);
}

TEST_CASE("token round trip", "[rally]") {
  REQUIRE(format_angles(parse_angles("OHHO")) == "OHHO");
  REQUIRE_ERR(parse_angles("OHX"), Errc::parse_failure);
}

TEST_CASE("smoothing contract", "[rally]") {
  AngleStream s = stream_of("HHOHH");
  REQUIRE(smooth_stream(s, 1).tokens == s.tokens);
  REQUIRE(format_angles(smooth_stream(s, 2).tokens) == "HHHHH");
  REQUIRE(format_angles(smooth_stream(stream_of("OOHOO"), 2).tokens) == "OOOOO");
  // the short leading H run survives untouched; the trailing O run absorbs
  // only when itself short
  REQUIRE(format_angles(smooth_stream(stream_of("HOO"), 2).tokens) == "HOO");
  REQUIRE(format_angles(smooth_stream(stream_of("HOO"), 5).tokens) == "HHH");
  REQUIRE_ERR(smooth_stream(s, 0), Errc::bad_argument);
}

TEST_CASE("segmentation properties on random streams", "[rally]") {
  Rng rng(97);
  for (int trial = 0; trial < 300; ++trial) {
    AngleStream s{"vid", 30.0, random_tokens(rng, 1 + rng.below(64))};
    auto segs = segment_rallies(s);

    std::size_t transitions = 0;
    ShotAngleToken prev = ShotAngleToken::Other;
    for (ShotAngleToken t : s.tokens) {
      if (prev == ShotAngleToken::Other && t == ShotAngleToken::High) ++transitions;
      prev = t;
    }
    REQUIRE(segs.size() == transitions);

    std::vector<bool> covered(s.tokens.size(), false);
    std::size_t last_end = 0;
    bool first = true;
    for (const RallySegment& seg : segs) {
      REQUIRE(seg.start_frame <= seg.end_frame);
      REQUIRE(seg.end_frame < s.tokens.size());
      if (!first) REQUIRE(seg.start_frame > last_end + 1);
      first = false;
      last_end = seg.end_frame;
      for (std::size_t f = seg.start_frame; f <= seg.end_frame; ++f) {
        REQUIRE(s.tokens[f] == ShotAngleToken::High);
        REQUIRE_FALSE(covered[f]);
        covered[f] = true;
      }
    }
    for (std::size_t f = 0; f < s.tokens.size(); ++f)
      if (s.tokens[f] == ShotAngleToken::High) REQUIRE(covered[f]);

    auto identity = segment_rallies(smooth_stream(s, 1));
    REQUIRE(identity.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      REQUIRE(identity[i].start_frame == segs[i].start_frame);
      REQUIRE(identity[i].end_frame == segs[i].end_frame);
    }
  }
}

TEST_CASE("smoothing never leaves runs shorter than min_run except the first", "[rally]") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    AngleStream s{"vid", 30.0, random_tokens(rng, 1 + rng.below(48))};
    std::size_t min_run = 1 + rng.below(5);
    AngleStream sm = smooth_stream(s, min_run);
    REQUIRE(sm.tokens.size() == s.tokens.size());

    std::vector<std::pair<ShotAngleToken, std::size_t>> runs;
    for (ShotAngleToken t : sm.tokens) {
      if (!runs.empty() && runs.back().first == t)
        ++runs.back().second;
      else
        runs.emplace_back(t, 1);
    }
    for (std::size_t i = 1; i < runs.size(); ++i) REQUIRE(runs[i].second >= min_run);
  }
}
