#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Geometry>

#include <random>
#include <vector>

#include "avfusion/geometry.hpp"
#include "oracles.hpp"

using namespace avfusion;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

MicPairConfig desk_mics() {
  MicPairConfig cfg;
  cfg.mic_left = {-0.05, 0.0, 0.0};
  cfg.mic_right = {0.05, 0.0, 0.0};
  cfg.sound_speed = 343.0;
  return cfg;
}

}  // namespace

TEST_CASE("itd_map is zero on the sagittal plane", "[geometry]") {
  const auto cfg = desk_mics();
  CHECK(itd_map({0.0, 0.3, 2.0}, cfg) == 0.0);
  CHECK(itd_map({0.0, -1.0, 0.5}, cfg) == 0.0);
}

TEST_CASE("itd_map of a collinear far-left source", "[geometry]") {
  const auto cfg = desk_mics();
  // (9.95 - 10.05) / 343
  CHECK_THAT(itd_map({-10.0, 0.0, 0.0}, cfg), WithinRel(-0.1 / 343.0, 1e-12));
  CHECK_THAT(itd_map({-10.0, 0.0, 0.0}, cfg), WithinAbs(-2.9155e-4, 1e-8));
}

TEST_CASE("swapping the microphones negates the ITD", "[geometry]") {
  const auto cfg = desk_mics();
  auto swapped = cfg;
  std::swap(swapped.mic_left, swapped.mic_right);
  const ScenePoint s{0.4, -0.2, 1.7};
  CHECK(itd_map(s, swapped) == -itd_map(s, cfg));
}

TEST_CASE("itd_map_corrected applies the affine correction", "[geometry]") {
  auto cfg = desk_mics();
  const ScenePoint far_left{-10.0, 0.0, 0.0};
  CHECK(itd_map_corrected(far_left, cfg) == itd_map(far_left, cfg));

  cfg.c1 = 2.0;
  cfg.c0 = 1e-4;
  CHECK_THAT(itd_map_corrected(far_left, cfg), WithinAbs(2.0 * (-0.1 / 343.0) + 1e-4, 1e-15));
  CHECK_THAT(itd_map_corrected(far_left, cfg), WithinAbs(-4.831e-4, 1e-7));

  cfg.c1 = 1.0;
  cfg.c0 = 5e-5;
  CHECK_THAT(itd_map_corrected({0.0, 0.1, 3.0}, cfg), WithinAbs(5e-5, 1e-18));
}

TEST_CASE("non-finite points and invalid configurations are rejected", "[geometry]") {
  const auto cfg = desk_mics();
  CHECK_THROWS_AS(itd_map({std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0}, cfg), InvalidInput);
  CHECK_THROWS_AS(itd_map({std::numeric_limits<double>::infinity(), 0.0, 1.0}, cfg), InvalidInput);

  auto bad = cfg;
  bad.sound_speed = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = cfg;
  bad.mic_right = bad.mic_left;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = cfg;
  bad.c1 = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("itd_map is bounded, antisymmetric and rigid-motion invariant", "[geometry][property]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 2000; ++trial) {
    MicPairConfig cfg;
    cfg.mic_left = {u(rng) * 0.1, u(rng) * 0.1, u(rng) * 0.1};
    cfg.mic_right = {u(rng) * 0.1, u(rng) * 0.1, u(rng) * 0.1};
    cfg.sound_speed = 300.0 + 20.0 * (u(rng) + 3.0);
    const ScenePoint s{u(rng), u(rng), u(rng)};
    const double itd = itd_map(s, cfg);
    CHECK(std::abs(itd) <= cfg.max_raw_itd() * (1.0 + 1e-9));

    auto swapped = cfg;
    std::swap(swapped.mic_left, swapped.mic_right);
    CHECK(itd_map(s, swapped) == -itd);

    const Eigen::Matrix3d rot = Eigen::Quaterniond::UnitRandom().toRotationMatrix();
    const Eigen::Vector3d shift(u(rng), u(rng), u(rng));
    auto move = [&](const ScenePoint& p) {
      const Eigen::Vector3d q = rot * Eigen::Vector3d(p.x, p.y, p.z) + shift;
      return ScenePoint{q.x(), q.y(), q.z()};
    };
    auto moved = cfg;
    moved.mic_left = move(cfg.mic_left);
    moved.mic_right = move(cfg.mic_right);
    CHECK_THAT(itd_map(move(s), moved), WithinAbs(itd, 1e-9 * cfg.max_raw_itd() + 1e-15));
  }
}

TEST_CASE("calibrate recovers the identity on self-generated pairs", "[geometry][calibration]") {
  const auto cfg = desk_mics();
  std::vector<CalibrationSample> pairs;
  for (int i = 0; i < 30; ++i) {
    const ScenePoint s{-1.5 + 0.1 * i, 0.05 * (i % 3), 1.0 + 0.07 * i};
    pairs.push_back({s, itd_map(s, cfg)});
  }
  const auto fit = calibrate(pairs, cfg);
  CHECK_THAT(fit.c1, WithinAbs(1.0, 1e-12));
  CHECK_THAT(fit.c0, WithinAbs(0.0, 1e-12));
  CHECK(fit.mic_left == cfg.mic_left);
  CHECK(fit.sound_speed == cfg.sound_speed);
}

TEST_CASE("calibrate recovers an exact affine distortion", "[geometry][calibration]") {
  const auto cfg = desk_mics();
  std::vector<CalibrationSample> pairs;
  for (int i = 0; i < 25; ++i) {
    const ScenePoint s{-2.0 + 0.17 * i, -0.3 + 0.02 * i, 0.8 + 0.11 * i};
    pairs.push_back({s, 1.3 * itd_map(s, cfg) + 2e-4});
  }
  const auto fit = calibrate(pairs, cfg);
  CHECK_THAT(fit.c1, WithinRel(1.3, 1e-9));
  CHECK_THAT(fit.c0, WithinRel(2e-4, 1e-9));
  CHECK_THAT(calibration_rms(pairs, fit), WithinAbs(0.0, 1e-15));
}

TEST_CASE("calibrate under noise agrees with an independent normal-equation solve", "[geometry][calibration]") {
  const auto cfg = desk_mics();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> px(-2.0, 2.0);
  std::uniform_real_distribution<double> pz(0.8, 4.0);
  std::normal_distribution<double> noise(0.0, 1e-5);
  std::vector<CalibrationSample> pairs;
  std::vector<double> raw, measured;
  for (int i = 0; i < 200; ++i) {
    const ScenePoint s{px(rng), 0.0, pz(rng)};
    const double itd = 1.3 * itd_map(s, cfg) + 2e-4 + noise(rng);
    pairs.push_back({s, itd});
    raw.push_back(itd_map(s, cfg));
    measured.push_back(itd);
  }
  const auto fit = calibrate(pairs, cfg);
  CHECK_THAT(fit.c1, WithinAbs(1.3, 0.05));
  const auto [slope, intercept] = oracle::line_fit(raw, measured);
  CHECK_THAT(fit.c1, WithinRel(slope, 1e-9));
  CHECK_THAT(fit.c0, WithinRel(intercept, 1e-9));

  // Any other affine fit has a larger residual.
  auto worse = fit;
  worse.c1 *= 1.001;
  CHECK(calibration_rms(pairs, worse) > calibration_rms(pairs, fit));
  worse = fit;
  worse.c0 += 1e-7;
  CHECK(calibration_rms(pairs, worse) > calibration_rms(pairs, fit));
}

TEST_CASE("calibrate rejects degenerate input", "[geometry][calibration]") {
  const auto cfg = desk_mics();
  const std::vector<CalibrationSample> one{{{0.5, 0.0, 1.0}, 1e-4}};
  CHECK_THROWS_AS(calibrate(one, cfg), DegenerateFit);
  // All on the sagittal plane: raw ITD is identically zero.
  const std::vector<CalibrationSample> flat{{{0.0, 0.0, 1.0}, 1e-4}, {{0.0, 0.2, 2.0}, 2e-4}, {{0.0, -0.1, 3.0}, 0.0}};
  CHECK_THROWS_AS(calibrate(flat, cfg), DegenerateFit);
}
