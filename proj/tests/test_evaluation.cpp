#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "hitframe/evaluation.hpp"
#include "test_util.hpp"

using namespace hitframe;
using namespace hitframe::eval;
using dir::DirectionSequence;
using dir::parse_directions;
using rally::RallySegment;

TEST_CASE("binary metrics basics", "[eval]") {
  Metrics m = binary_metrics({1, 0, 0, 1});
  REQUIRE(m.accuracy == 1.0);
  REQUIRE(m.precision == 1.0);
  REQUIRE(m.recall == 1.0);
  REQUIRE(m.f1 == 1.0);

  Metrics z = binary_metrics({0, 0, 1, 0});
  REQUIRE(z.precision == 0.0);
  REQUIRE(z.recall == 0.0);
  REQUIRE(z.f1 == 0.0);
  REQUIRE(z.accuracy == 0.0);

  REQUIRE_ERR(binary_metrics({0, 0, 0, 0}), Errc::empty_evaluation);
  REQUIRE_ERR(binary_metrics({-1, 0, 0, 2}), Errc::bad_argument);
}

TEST_CASE("trimming counts reproduce the published arithmetic", "[eval]") {
  TrimmingReport r = trimming_from_counts(287, 33, 36);
  REQUIRE(r.total_trimmed == 320);
  REQUIRE(r.actual == 323);
  REQUIRE_THAT(r.accuracy, Catch::Matchers::WithinAbs(0.8062, 1e-4));
  REQUIRE_THAT(r.precision, Catch::Matchers::WithinAbs(0.8969, 1e-4));
  REQUIRE_THAT(r.recall, Catch::Matchers::WithinAbs(0.8885, 1e-4));
  REQUIRE_THAT(r.f1, Catch::Matchers::WithinAbs(0.8927, 1e-4));
  double f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  REQUIRE_THAT(r.f1, Catch::Matchers::WithinAbs(f1, 1e-12));
}

TEST_CASE("trimming report matching", "[eval]") {
  std::vector<RallySegment> actual = {{0, 10}, {20, 30}, {50, 80}};
  TrimmingReport perfect = trimming_report(actual, actual);
  REQUIRE(perfect.correct == 3);
  REQUIRE(perfect.accuracy == 1.0);
  REQUIRE(perfect.f1 == 1.0);

  TrimmingReport disjoint = trimming_report({{0, 10}}, {{20, 30}});
  REQUIRE(disjoint.correct == 0);
  REQUIRE(disjoint.extra == 1);
  REQUIRE(disjoint.missed == 1);
  REQUIRE(disjoint.accuracy == 0.0);

  // IoU 5/15 < 0.5: no match
  TrimmingReport weak = trimming_report({{0, 9}}, {{5, 14}});
  REQUIRE(weak.correct == 0);

  // IoU 8/12 >= 0.5: match despite shifted bounds
  TrimmingReport ok = trimming_report({{0, 9}}, {{2, 11}});
  REQUIRE(ok.correct == 1);

  REQUIRE_ERR(trimming_report({{0, 10}, {5, 20}}, actual), Errc::bad_argument);
}

TEST_CASE("trimming greedy matching prefers the higher overlap", "[eval]") {
  // prediction overlaps both actuals above threshold; the exact one wins,
  // leaving the shifted one unmatched
  TrimmingReport r = trimming_report({{0, 9}}, {{1, 10}, {0, 9}});
  REQUIRE(r.correct == 1);
  REQUIRE(r.missed == 1);

  // two predictions, first consumes its best actual, second still matches the
  // remaining one
  TrimmingReport r2 = trimming_report({{0, 9}, {10, 19}}, {{0, 9}, {8, 17}});
  REQUIRE(r2.correct == 2);
}

TEST_CASE("token report hand cases", "[eval]") {
  DirectionSequence gold{"r", parse_directions("SSBU")};
  DirectionSequence same = gold;
  TokenReport perfect = token_report(same, gold);
  for (int t = 0; t < 3; ++t) {
    REQUIRE(perfect.metrics[t].accuracy == 1.0);
    REQUIRE(perfect.metrics[t].f1 == 1.0);
  }

  DirectionSequence pred{"r", parse_directions("SSBB")};
  TokenReport r = token_report(pred, gold);
  REQUIRE(r.metrics[0].precision == 1.0);
  REQUIRE(r.metrics[0].recall == 1.0);
  REQUIRE(r.metrics[0].accuracy == 1.0);
  REQUIRE(r.metrics[1].precision == 0.5);
  REQUIRE(r.metrics[1].recall == 1.0);
  REQUIRE(r.metrics[1].accuracy == 0.75);
  REQUIRE(r.metrics[2].precision == 0.0);
  REQUIRE(r.metrics[2].recall == 0.0);
  REQUIRE(r.metrics[2].accuracy == 0.75);
}

TEST_CASE("token report rejects pad-only gold and length mismatch", "[eval]") {
  DirectionSequence gold{"r", parse_directions("PPP")};
  DirectionSequence pred{"r", parse_directions("SSS")};
  REQUIRE_ERR(token_report(pred, gold), Errc::empty_evaluation);

  DirectionSequence short_pred{"r", parse_directions("SS")};
  DirectionSequence gold2{"r", parse_directions("SSB")};
  REQUIRE_ERR(token_report(short_pred, gold2), Errc::shape_mismatch);
}

TEST_CASE("token counts ignore gold padding and survive permutation", "[eval]") {
  DirectionSequence gold{"r", parse_directions("SBUPP")};
  DirectionSequence pred{"r", parse_directions("SBBSU")};
  auto counts = token_counts(pred, gold);
  long long total = 0;
  for (int t = 0; t < 3; ++t) total += counts[t].tp + counts[t].fp + counts[t].fn + counts[t].tn;
  REQUIRE(total == 9);  // 3 non-pad positions x 3 one-vs-rest tables

  Rng rng(3);
  std::vector<std::size_t> perm = {2, 0, 1};
  DirectionSequence goldp{"r", {gold.tokens[2], gold.tokens[0], gold.tokens[1], gold.tokens[3],
                                gold.tokens[4]}};
  DirectionSequence predp{"r", {pred.tokens[2], pred.tokens[0], pred.tokens[1], pred.tokens[3],
                                pred.tokens[4]}};
  auto counts2 = token_counts(predp, goldp);
  for (int t = 0; t < 3; ++t) {
    REQUIRE(counts[t].tp == counts2[t].tp);
    REQUIRE(counts[t].fp == counts2[t].fp);
    REQUIRE(counts[t].fn == counts2[t].fn);
    REQUIRE(counts[t].tn == counts2[t].tn);
  }
}

TEST_CASE("hit tolerance examples", "[eval]") {
  ToleranceReport wide = hit_tolerance_report({100}, {110}, 1000, {15});
  REQUIRE(wide.counts.tp == 1);
  REQUIRE(wide.counts.fp == 0);
  REQUIRE(wide.counts.fn == 0);

  ToleranceReport tight = hit_tolerance_report({100}, {110}, 1000, {5});
  REQUIRE(tight.counts.tp == 0);
  REQUIRE(tight.counts.fp == 1);
  REQUIRE(tight.counts.fn == 1);

  ToleranceReport hand = hit_tolerance_report({12, 80}, {10, 50}, 100, {5});
  REQUIRE(hand.counts.tp == 1);
  REQUIRE(hand.counts.fp == 1);
  REQUIRE(hand.counts.fn == 1);
  REQUIRE(hand.counts.tn == 97);
  REQUIRE_THAT(hand.metrics.accuracy, Catch::Matchers::WithinAbs(0.98, 1e-12));
}

TEST_CASE("tolerance interval is open", "[eval]") {
  // |P - n| = 15 is NOT within tol 15
  ToleranceReport r = hit_tolerance_report({100}, {115}, 1000, {15});
  REQUIRE(r.counts.tp == 0);
  ToleranceReport r2 = hit_tolerance_report({100}, {114}, 1000, {15});
  REQUIRE(r2.counts.tp == 1);
}

TEST_CASE("tolerance validation", "[eval]") {
  REQUIRE_ERR(hit_tolerance_report({-1}, {5}, 100, {5}), Errc::out_of_range);
  REQUIRE_ERR(hit_tolerance_report({5}, {100}, 100, {5}), Errc::out_of_range);
  REQUIRE_ERR(hit_tolerance_report({5}, {6}, 100, {0}), Errc::bad_config);
}

TEST_CASE("tolerance report is monotone in tol", "[eval]") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    long long total = 200;
    std::vector<long long> pred, actual;
    std::size_t np = rng.below(8), na = rng.below(8);
    for (std::size_t i = 0; i < np; ++i) pred.push_back(static_cast<long long>(rng.below(200)));
    for (std::size_t i = 0; i < na; ++i) actual.push_back(static_cast<long long>(rng.below(200)));
    long long prev_tp = -1;
    for (long long tol : {1, 2, 3, 5, 8, 13, 25, 60}) {
      ToleranceReport r = hit_tolerance_report(pred, actual, total, {tol});
      REQUIRE(r.counts.tp >= prev_tp);
      REQUIRE(r.counts.tp <= static_cast<long long>(std::min(pred.size(), actual.size())));
      REQUIRE(r.counts.tp + r.counts.fp == static_cast<long long>(pred.size()));
      REQUIRE(r.counts.tp + r.counts.fn == static_cast<long long>(actual.size()));
      prev_tp = r.counts.tp;
    }
  }
}

TEST_CASE("metrics stay within the unit interval", "[eval]") {
  Rng rng(79);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryCounts c{static_cast<long long>(rng.below(50)), static_cast<long long>(rng.below(50)),
                   static_cast<long long>(rng.below(50)), static_cast<long long>(rng.below(50))};
    if (c.total() == 0) continue;
    Metrics m = binary_metrics(c);
    for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("report rendering emits all three formats", "[eval]") {
  TrimmingReport r = trimming_from_counts(287, 33, 36);
  REQUIRE(to_json(r)["correct"] == 287);
  REQUIRE(render_table(r).find("0.8062") != std::string::npos);
  REQUIRE(render_csv(r).find("287,33,36,320,323") != std::string::npos);

  std::vector<ToleranceReport> tols = {hit_tolerance_report({12, 80}, {10, 50}, 100, {5})};
  REQUIRE(render_table(tols).find("0.9800") != std::string::npos);
  REQUIRE(render_csv(tols).find("5,1,1,1,97") != std::string::npos);
  REQUIRE(to_json(tols[0])["counts"]["tn"] == 97);

  DirectionSequence gold{"r", parse_directions("SSBU")};
  DirectionSequence pred{"r", parse_directions("SSBB")};
  TokenReport tr = token_report(pred, gold);
  REQUIRE(render_table(tr).find("B") != std::string::npos);
  REQUIRE(to_json(tr)["B"]["metrics"]["recall"] == 1.0);
  REQUIRE(render_csv(tr).find("S,") != std::string::npos);
}
