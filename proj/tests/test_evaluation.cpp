#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "avfusion/evaluation.hpp"

using namespace avfusion;
using Catch::Matchers::WithinAbs;

namespace {

AVObject det(ScenePoint p, bool speaking = false) {
  AVObject o;
  o.position = p;
  o.speaking = speaking;
  return o;
}

}  // namespace

TEST_CASE("perfect detections are all true positives", "[evaluation]") {
  const std::vector<TruthCluster> truth{{{0, 0, 2}, true}, {{1, 0, 2}, false}};
  const std::vector<AVObject> found{det({0, 0, 2}, true), det({1, 0, 2}, false)};
  const auto s = match_clusters(found, truth);
  CHECK(s.loc_tp == 2);
  CHECK(s.loc_fp == 0);
  CHECK(s.loc_fn == 0);
  CHECK(s.loc_errors == std::vector<double>{0.0, 0.0});
  CHECK(s.audio_tp == 2);
}

TEST_CASE("a detection beyond the gate is a false positive and leaves a miss", "[evaluation]") {
  const std::vector<TruthCluster> truth{{{0, 0, 2}, false}};
  const std::vector<AVObject> found{det({0.5, 0, 2})};
  const auto s = match_clusters(found, truth);
  CHECK(s.loc_fp == 1);
  CHECK(s.loc_fn == 1);
  CHECK(s.loc_tp == 0);
}

TEST_CASE("the closest of several assignees wins", "[evaluation]") {
  const std::vector<TruthCluster> truth{{{0, 0, 2}, false}};
  const std::vector<AVObject> found{det({0.2, 0, 2}), det({0, 0.1, 2})};
  const auto s = match_clusters(found, truth);
  CHECK(s.loc_tp == 1);
  CHECK(s.loc_fp == 1);
  REQUIRE(s.loc_errors.size() == 1);
  CHECK_THAT(s.loc_errors[0], WithinAbs(0.1, 1e-15));
}

TEST_CASE("speaking state is scored on matched pairs only", "[evaluation]") {
  const std::vector<TruthCluster> truth{{{0, 0, 2}, false}, {{1, 0, 2}, true}, {{-1, 0, 2}, true}};
  const std::vector<AVObject> found{det({0, 0, 2}, true), det({1, 0, 2}, false), det({3, 0, 2}, true)};
  const auto s = match_clusters(found, truth);
  CHECK(s.audio_fp == 1);
  CHECK(s.audio_fn == 1);
  CHECK(s.audio_tp == 0);
  CHECK(s.loc_fn == 1);
  CHECK(s.loc_fp == 1);
}

TEST_CASE("aggregate reproduces the reference table arithmetic", "[evaluation]") {
  IntervalScore s;
  s.loc_fn = 16;
  s.loc_tp = 392;
  const std::vector<IntervalScore> scores{s};
  const auto t = aggregate(scores);
  CHECK_THAT(t.loc_tp_pct(), WithinAbs(96.078, 1e-3));
  CHECK_THAT(t.loc_fn_pct(), WithinAbs(3.922, 1e-3));
  const std::vector<std::pair<std::string, SummaryTable>> rows{{"StaCon", t}};
  const auto text = format_summary(rows);
  CHECK(text.find("16 (3.9%)") != std::string::npos);
  CHECK(text.find("392 (96.1%)") != std::string::npos);
}

TEST_CASE("ALE is the mean over all matched errors", "[evaluation]") {
  IntervalScore one;
  one.loc_tp = 1;
  one.loc_errors = {0.03};
  CHECK_THAT(aggregate(std::vector<IntervalScore>{one}).ale, WithinAbs(0.03, 1e-15));
  IntervalScore a, b;
  a.loc_tp = b.loc_tp = 1;
  a.loc_errors = {0.1};
  b.loc_errors = {0.3};
  CHECK_THAT(aggregate(std::vector<IntervalScore>{a, b}).ale, WithinAbs(0.2, 1e-15));
  const auto empty = aggregate(std::vector<IntervalScore>{});
  CHECK(empty.loc_tp == 0);
  CHECK(empty.ale == 0.0);
  CHECK(empty.loc_tp_pct() == 0.0);
}

TEST_CASE("matching invariants hold on random layouts", "[evaluation][property]") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TruthCluster> truth;
    std::vector<AVObject> found;
    const int nt = static_cast<int>((u(rng) + 1.0) * 2.5);
    const int nd = static_cast<int>((u(rng) + 1.0) * 3.0);
    for (int i = 0; i < nt; ++i) truth.push_back({{u(rng), 0.2 * u(rng), 2.0 + u(rng)}, u(rng) > 0});
    for (int i = 0; i < nd; ++i) found.push_back(det({u(rng), 0.2 * u(rng), 2.0 + u(rng)}, u(rng) > 0));
    const auto s = match_clusters(found, truth);
    CHECK(s.loc_fp + s.loc_tp == nd);
    CHECK(s.loc_fn + s.loc_tp == nt);
    CHECK(static_cast<int>(s.loc_errors.size()) == s.loc_tp);
    CHECK(s.audio_fp + s.audio_fn + s.audio_tp == s.loc_tp);
    for (double e : s.loc_errors) CHECK(e < kDefaultTauLoc);

    std::shuffle(found.begin(), found.end(), rng);
    const auto p = match_clusters(found, truth);
    CHECK(p.loc_fp == s.loc_fp);
    CHECK(p.loc_fn == s.loc_fn);
    CHECK(p.loc_tp == s.loc_tp);
    CHECK(p.audio_tp == s.audio_tp);
  }
}
