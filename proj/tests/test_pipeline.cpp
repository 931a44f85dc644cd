#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "avfusion/evaluation.hpp"
#include "avfusion/pipeline.hpp"
#include "avfusion/simulator.hpp"

using namespace avfusion;
using Catch::Matchers::WithinAbs;

namespace {

PosteriorMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  PosteriorMatrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Runs the motion-guided pipeline over a short StaCon prefix with warm
// starts and returns every interval's result.
struct Run {
  std::vector<GeneratedInterval> data;
  std::vector<MotionGuidedResult> results;
};

Run run_stacon(double seconds, const MicPairConfig& cfg = {}) {
  auto spec = builtin_scenarios().at("StaCon");
  spec.duration_s = seconds;
  Run r;
  r.data = generate(spec, cfg);
  std::optional<MixtureParams> prev;
  for (const auto& g : r.data) {
    r.results.push_back(motion_guided_interval(g.obs, cfg, prev));
    prev = r.results.back().model;
  }
  return r;
}

}  // namespace

TEST_CASE("estimate_positions computes weighted moments", "[pipeline]") {
  const std::vector<ScenePoint> pts{{0, 0, 1}, {0, 0, 3}};
  const auto hard = estimate_positions(pts, rows({{1, 0}, {1, 0}}));
  REQUIRE(hard.size() == 1);
  CHECK(hard[0].position == ScenePoint{0, 0, 2});
  CHECK(hard[0].covariance.isApprox(Eigen::Vector3d(0, 0, 1).asDiagonal().toDenseMatrix()));

  const auto soft = estimate_positions(pts, rows({{0.25, 0.75}, {0.75, 0.25}}));
  REQUIRE(soft.size() == 1);
  CHECK_THAT(soft[0].position.z, WithinAbs(2.5, 1e-15));

  const std::vector<ScenePoint> one{{0.3, -0.2, 2.0}};
  const auto single = estimate_positions(one, rows({{1, 0}}));
  REQUIRE(single.size() == 1);
  CHECK(single[0].position == one[0]);
  CHECK(single[0].covariance.isZero());

  CHECK_THROWS_AS(estimate_positions(pts, rows({{1, 0}})), InvalidInput);
}

TEST_CASE("estimate_positions omits components without visual mass", "[pipeline]") {
  const std::vector<ScenePoint> pts{{0, 0, 1}, {0, 0, 3}};
  const auto est = estimate_positions(pts, rows({{0, 1, 0}, {0, 1, 0}}));
  REQUIRE(est.size() == 1);
  CHECK(est[0].component == 1);
}

TEST_CASE("estimate_speaking applies the K/(N+2) threshold", "[pipeline]") {
  CHECK(estimate_speaking(PosteriorMatrix(0, 3), 2, 0) == std::vector<bool>{false, false});

  PosteriorMatrix b1 = PosteriorMatrix::Zero(12, 2);
  b1.col(0).head(10).setOnes();
  b1.col(1).tail(2).setOnes();
  CHECK(speaking_threshold(12, 1) == 4.0);
  CHECK(estimate_speaking(b1, 1, 12) == std::vector<bool>{true});

  PosteriorMatrix b3 = PosteriorMatrix::Zero(10, 4);
  b3.col(0).head(6).setOnes();
  b3(6, 1) = 1;
  b3(7, 2) = 1;
  b3.col(3).tail(2).setOnes();
  CHECK(speaking_threshold(10, 3) == 2.0);
  CHECK(estimate_speaking(b3, 3, 10) == std::vector<bool>{true, false, false});

  CHECK_THROWS_AS(estimate_speaking(b3, 3, 9), InvalidInput);
}

TEST_CASE("energy gate is inclusive at the boundary", "[pipeline]") {
  CHECK_FALSE(energy_gate(0.0));
  CHECK(energy_gate(0.001));
  CHECK(energy_gate(0.5));
  IntervalObservations obs;
  obs.auditory = {1e-4, 2e-4, 3e-4};
  obs.auditory_energy = {0.0005, 0.001, 0.2};
  const auto gated = gate_auditory(obs, 0.001);
  CHECK(gated.auditory == std::vector<double>{2e-4, 3e-4});
  obs.auditory_energy.pop_back();
  CHECK_THROWS_AS(gate_auditory(obs, 0.001), InvalidInput);
}

TEST_CASE("three static speakers are found with the right speaking flags", "[pipeline][slow]") {
  // Interval 8 covers [3.2, 3.6): A and B talk, C is silent.
  const auto run = run_stacon(3.6);
  const auto& res = run.results.back();
  const auto& truth = run.data.back().truth.objects;
  REQUIRE(truth.size() == 3);
  REQUIRE(truth[0].speaking);
  REQUIRE(truth[1].speaking);
  REQUIRE_FALSE(truth[2].speaking);
  REQUIRE(res.objects.size() == 3);
  for (const auto& t : truth) {
    const AVObject* best = nullptr;
    for (const auto& o : res.objects) {
      if (!best || distance(o.position, t.position) < distance(best->position, t.position)) best = &o;
    }
    CHECK(distance(best->position, t.position) < kDefaultTauLoc);
    CHECK(best->speaking == t.speaking);
  }
  for (const auto& o : res.objects) {
    CHECK(o.speaking == (o.auditory_mass > speaking_threshold(run.data.back().obs.auditory.size(), res.model->size())));
  }
}

TEST_CASE("a sparse pure-clutter interval yields no objects", "[pipeline]") {
  // Too few observations to support a real cluster. Components that do win
  // the BIC sit on one or two points and fail the determinant test.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ScenarioSpec spec;
    spec.duration_s = 0.4;
    spec.visual_outlier_rate = 5.0;
    spec.itd_outlier_rate = 1.0;
    spec.seed = seed;
    const auto data = generate(spec, {});
    REQUIRE(data.size() == 1);
    const auto res = motion_guided_interval(data[0].obs, {}, std::nullopt);
    CHECK(res.objects.empty());
  }
}

TEST_CASE("empty observations pass the previous model through", "[pipeline]") {
  MixtureParams prev;
  prev.weights = {0.6, 0.4};
  prev.means = {1e-4};
  prev.stddevs = {1e-5};
  prev.domain = outlier_domain_for({}, 0.1);
  const auto res = motion_guided_interval(IntervalObservations{}, {}, prev);
  CHECK(res.objects.empty());
  REQUIRE(res.model);
  CHECK(res.model->means == prev.means);
}

TEST_CASE("repeated inputs give identical outputs", "[pipeline]") {
  auto spec = builtin_scenarios().at("StaCon");
  spec.duration_s = 0.4;
  const auto data = generate(spec, {});
  const auto a = motion_guided_interval(data[0].obs, {}, std::nullopt);
  PipelineKnobs serial;
  serial.parallel = false;
  const auto b = motion_guided_interval(data[0].obs, {}, std::nullopt, serial);
  CHECK(a.bic == b.bic);
  REQUIRE(a.objects.size() == b.objects.size());
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    CHECK(a.objects[i].position == b.objects[i].position);
    CHECK(a.objects[i].speaking == b.objects[i].speaking);
  }
}

TEST_CASE("without audio nobody speaks", "[pipeline]") {
  auto spec = builtin_scenarios().at("StaCon");
  spec.duration_s = 0.4;
  auto data = generate(spec, {});
  data[0].obs.auditory.clear();
  data[0].obs.auditory_energy.clear();
  const auto res = motion_guided_interval(data[0].obs, {}, std::nullopt);
  CHECK_FALSE(res.objects.empty());
  for (const auto& o : res.objects) CHECK_FALSE(o.speaking);
  CHECK(static_cast<int>(res.objects.size()) <= kDefaultMaxComponents);

  const std::vector<ScenePoint> faces{{0.0, 0.0, 1.5}, {0.7, 0.0, 2.0}};
  for (const auto& o : face_guided_interval(faces, {}, {})) CHECK_FALSE(o.speaking);
}

TEST_CASE("the energy gate knob removes quiet ITDs", "[pipeline]") {
  auto spec = builtin_scenarios().at("StaCon");
  spec.duration_s = 0.4;
  const auto data = generate(spec, {});
  PipelineKnobs deaf;
  deaf.energy_gate = 1.0;  // above every simulated frame energy
  const auto res = motion_guided_interval(data[0].obs, {}, std::nullopt, deaf);
  for (const auto& o : res.objects) {
    CHECK_FALSE(o.speaking);
    CHECK(o.auditory_mass == 0.0);
  }
}

TEST_CASE("a common translation of scene and microphones changes nothing", "[pipeline][property]") {
  auto spec = builtin_scenarios().at("StaCon");
  spec.duration_s = 0.4;
  const MicPairConfig cfg;
  const auto data = generate(spec, cfg);
  const ScenePoint shift{0.37, -1.2, 4.5};
  MicPairConfig moved = cfg;
  moved.mic_left = cfg.mic_left + shift;
  moved.mic_right = cfg.mic_right + shift;
  IntervalObservations obs = data[0].obs;
  for (auto& p : obs.visual) p = p + shift;

  const auto base = project(data[0].obs.visual, cfg);
  const auto shifted = project(obs.visual, moved);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK_THAT(shifted[i], WithinAbs(base[i], 1e-15));

  const auto r0 = motion_guided_interval(data[0].obs, cfg, std::nullopt);
  const auto r1 = motion_guided_interval(obs, moved, std::nullopt);
  CHECK(r0.n_selected == r1.n_selected);
  REQUIRE(r0.objects.size() == r1.objects.size());
  for (std::size_t i = 0; i < r0.objects.size(); ++i) {
    CHECK(r0.objects[i].speaking == r1.objects[i].speaking);
    CHECK(distance(r0.objects[i].position + shift, r1.objects[i].position) < 1e-6);
  }
}

TEST_CASE("face-guided: a face with tightly clustered ITDs speaks", "[pipeline][face]") {
  const MicPairConfig cfg;
  const ScenePoint face{0.4, 0.0, 1.6};
  const double centre = itd_map_corrected(face, cfg);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(centre, 1e-5);
  std::vector<double> itds(12);
  for (double& v : itds) v = g(rng);
  const std::vector<ScenePoint> faces{face};
  const auto out = face_guided_interval(faces, itds, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].speaking);
  CHECK(out[0].position == face);
  CHECK(out[0].auditory_mass > speaking_threshold(itds.size(), 1));

  const auto silent = face_guided_interval(faces, {}, cfg);
  REQUIRE(silent.size() == 1);
  CHECK_FALSE(silent[0].speaking);
  CHECK(face_guided_interval({}, itds, cfg).empty());
}

TEST_CASE("face-guided keeps faces and picks the talker among several", "[pipeline][face][property]") {
  // Faces at least eight initial deviations apart in ITD, as in a
  // conversation across a table. Closer faces can let a neighbour's
  // component drift onto the burst.
  const MicPairConfig cfg;
  const double min_gap = 8.0 * std::sqrt(kFaceInitVariance);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  int tested = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScenePoint> faces;
    const int n = 1 + static_cast<int>(u(rng) * 4);
    for (int i = 0; i < n; ++i) faces.push_back({-1.5 + 3.0 * (i + 0.5) / n, 0.1 * g(rng), 1.2 + u(rng)});
    const auto proj = project(faces, cfg);
    bool separated = true;
    for (std::size_t i = 1; i < proj.size(); ++i) separated = separated && std::abs(proj[i] - proj[i - 1]) >= min_gap;
    if (!separated) continue;
    ++tested;
    const int talker = static_cast<int>(u(rng) * n);
    std::vector<double> itds;
    for (int k = 0; k < 10; ++k) itds.push_back(proj[static_cast<std::size_t>(talker)] + 1e-5 * g(rng));
    const auto out = face_guided_interval(faces, itds, cfg);
    REQUIRE(out.size() == faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) {
      CHECK(out[i].position == faces[i]);
      CHECK(out[i].speaking == (static_cast<int>(i) == talker));
    }
  }
  CHECK(tested > 150);
}
