#include <catch2/catch_amalgamated.hpp>

#include "hitframe/detector.hpp"
#include "test_util.hpp"

using namespace hitframe;
using namespace hitframe::hits;
using dir::DirectionSequence;
using dir::DirectionToken;
using dir::parse_directions;

namespace {

DirectionSequence seq_of(const std::string& s) { return {"r0", parse_directions(s)}; }

// Literal transcription of the published transition case table, kept
// deliberately naive as an oracle.
std::vector<std::size_t> brute_force_hits(const std::vector<DirectionToken>& seq) {
  std::vector<std::size_t> hits;
  DirectionToken previous_direction = DirectionToken::S;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    DirectionToken direction = seq[i];
    if (previous_direction != direction) {
      if (previous_direction == DirectionToken::S && direction == DirectionToken::B) {
        hits.push_back(i);
      } else if (previous_direction == DirectionToken::S && direction == DirectionToken::U) {
        hits.push_back(i);
      } else if (previous_direction == DirectionToken::B && direction == DirectionToken::U) {
        hits.push_back(i);
      } else if (previous_direction == DirectionToken::U && direction == DirectionToken::B) {
        hits.push_back(i);
      } else if (direction == DirectionToken::S) {
        // shuttle landed; no hit
      }
      previous_direction = direction;
    }
  }
  return hits;
}

}  // namespace

TEST_CASE("hit detection examples", "[hits]") {
  REQUIRE(detect_hits(seq_of("SBBU")).indices == std::vector<std::size_t>{1, 3});
  REQUIRE(detect_hits(seq_of("SSS")).indices.empty());
  REQUIRE(detect_hits(seq_of("BUSB")).indices == std::vector<std::size_t>{0, 1, 3});
}

TEST_CASE("pad tokens are rejected", "[hits]") {
  REQUIRE_ERR(detect_hits(seq_of("SBP")), Errc::bad_argument);
}

TEST_CASE("detect_hits equals the brute-force case table up to length 5", "[hits]") {
  const DirectionToken alphabet[3] = {DirectionToken::S, DirectionToken::B, DirectionToken::U};
  for (std::size_t len = 1; len <= 5; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<DirectionToken> seq(len);
      std::size_t c = code;
      for (std::size_t i = 0; i < len; ++i) {
        seq[i] = alphabet[c % 3];
        c /= 3;
      }
      DirectionSequence s{"r", seq};
      REQUIRE(detect_hits(s).indices == brute_force_hits(seq));
    }
  }
}

TEST_CASE("hits depend only on the run-length encoding", "[hits]") {
  Rng rng(55);
  const DirectionToken alphabet[3] = {DirectionToken::S, DirectionToken::B, DirectionToken::U};
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(10);
    std::vector<DirectionToken> base(n);
    for (auto& t : base) t = alphabet[rng.below(3)];

    std::vector<DirectionToken> expanded;
    std::vector<std::size_t> expanded_start_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      expanded_start_of[i] = expanded.size();
      std::size_t reps = 1 + rng.below(3);
      expanded.insert(expanded.end(), reps, base[i]);
    }

    auto base_hits = detect_hits({"a", base}).indices;
    auto exp_hits = detect_hits({"b", expanded}).indices;
    REQUIRE(exp_hits.size() == base_hits.size());
    for (std::size_t i = 0; i < base_hits.size(); ++i)
      REQUIRE(exp_hits[i] == expanded_start_of[base_hits[i]]);
  }
}

TEST_CASE("hit indices are strictly increasing and zero appears iff the start is not S", "[hits]") {
  Rng rng(56);
  const DirectionToken alphabet[3] = {DirectionToken::S, DirectionToken::B, DirectionToken::U};
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(30);
    std::vector<DirectionToken> seq(n);
    for (auto& t : seq) t = alphabet[rng.below(3)];
    auto hits = detect_hits({"r", seq}).indices;
    for (std::size_t i = 1; i < hits.size(); ++i) REQUIRE(hits[i] > hits[i - 1]);
    bool has_zero = !hits.empty() && hits[0] == 0;
    REQUIRE(has_zero == (seq[0] != DirectionToken::S));
  }
}

TEST_CASE("global frame mapping", "[hits]") {
  HitFrameSet h{"r0", {1, 3}};
  rally::RallySegment seg{100, 160};
  REQUIRE(to_global(h, seg) == std::vector<std::size_t>{101, 103});
  REQUIRE(to_global({"r0", {}}, seg).empty());

  HitFrameSet end_ok{"r0", {60}};
  REQUIRE(to_global(end_ok, seg) == std::vector<std::size_t>{160});
  HitFrameSet beyond{"r0", {61}};
  REQUIRE_ERR(to_global(beyond, seg), Errc::out_of_range);
}
