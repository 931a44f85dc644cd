#pragma once

// Deterministic mappings between the 3D scene and the 1D auditory space of
// interaural time differences (ITD), plus the affine audio-visual calibration.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "avfusion/error.hpp"

namespace avfusion {

/// A point in scene (cyclopean camera) coordinates, in meters.
struct ScenePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  [[nodiscard]] bool finite() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  friend ScenePoint operator+(const ScenePoint& a, const ScenePoint& b) noexcept {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend ScenePoint operator-(const ScenePoint& a, const ScenePoint& b) noexcept {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend ScenePoint operator*(double s, const ScenePoint& p) noexcept {
    return {s * p.x, s * p.y, s * p.z};
  }
  friend bool operator==(const ScenePoint&, const ScenePoint&) = default;
};

[[nodiscard]] inline double norm(const ScenePoint& p) noexcept {
  return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
}

[[nodiscard]] inline double distance(const ScenePoint& a, const ScenePoint& b) noexcept {
  return norm(a - b);
}

/// Geometry of one microphone pair and the affine correction applied to the
/// raw time-difference model.
struct MicPairConfig {
  ScenePoint mic_left{-0.1, 0.0, 0.0};
  ScenePoint mic_right{0.1, 0.0, 0.0};
  double sound_speed = 343.0;  // m/s
  double c1 = 1.0;
  double c0 = 0.0;  // s

  [[nodiscard]] double baseline() const noexcept { return distance(mic_left, mic_right); }

  /// Largest magnitude the uncorrected ITD can take.
  [[nodiscard]] double max_raw_itd() const noexcept { return baseline() / sound_speed; }

  void validate() const {
    if (!mic_left.finite() || !mic_right.finite() || !std::isfinite(sound_speed) ||
        !std::isfinite(c1) || !std::isfinite(c0)) {
      throw InvalidInput("microphone configuration has non-finite fields");
    }
    if (!(sound_speed > 0.0)) throw InvalidInput("sound speed must be positive");
    if (!(baseline() > 0.0)) throw InvalidInput("microphones must not coincide");
    if (c1 == 0.0) throw InvalidInput("calibration slope c1 must be non-zero");
  }
};

/// Raw ITD of a source at `s`: (|s - M_L| - |s - M_R|) / speed of sound.
/// Negative for sources closer to the left microphone.
[[nodiscard]] inline double itd_map(const ScenePoint& s, const MicPairConfig& cfg) {
  if (!s.finite()) throw InvalidInput("itd_map: non-finite scene point");
  return (distance(s, cfg.mic_left) - distance(s, cfg.mic_right)) / cfg.sound_speed;
}

/// ITD after the affine calibration: c1 * itd_map(s) + c0.
[[nodiscard]] inline double itd_map_corrected(const ScenePoint& s, const MicPairConfig& cfg) {
  return cfg.c1 * itd_map(s, cfg) + cfg.c0;
}

/// Projects 3D visual features into the auditory space.
[[nodiscard]] inline std::vector<double> project(std::span<const ScenePoint> points,
                                                 const MicPairConfig& cfg) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(itd_map_corrected(p, cfg));
  return out;
}

/// One calibration observation: where the source was and which ITD was measured.
struct CalibrationSample {
  ScenePoint position;
  double itd = 0.0;
};

/// Fits c1, c0 by ordinary least squares of the measured ITDs against the raw
/// model ITDs. Every other field of `cfg0` is kept.
[[nodiscard]] inline MicPairConfig calibrate(std::span<const CalibrationSample> pairs,
                                             const MicPairConfig& cfg0) {
  cfg0.validate();
  if (pairs.size() < 2) throw DegenerateFit("calibration needs at least two samples");

  const double n = static_cast<double>(pairs.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  std::vector<double> raw;
  raw.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!std::isfinite(p.itd)) throw InvalidInput("calibration sample has non-finite ITD");
    raw.push_back(itd_map(p.position, cfg0));
    mean_x += raw.back();
    mean_y += p.itd;
  }
  mean_x /= n;
  mean_y /= n;

  // Centered normal equations.
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double dx = raw[i] - mean_x;
    sxx += dx * dx;
    sxy += dx * (pairs[i].itd - mean_y);
  }
  const double scale = std::max(std::abs(mean_x), cfg0.max_raw_itd());
  if (!(sxx > n * 1e-18 * scale * scale)) {
    throw DegenerateFit("calibration samples have (near) identical raw ITDs");
  }

  MicPairConfig out = cfg0;
  out.c1 = sxy / sxx;
  out.c0 = mean_y - out.c1 * mean_x;
  if (out.c1 == 0.0) throw DegenerateFit("fitted slope is zero");
  return out;
}

/// Root-mean-square residual of `pairs` under the corrected mapping of `cfg`.
[[nodiscard]] inline double calibration_rms(std::span<const CalibrationSample> pairs,
                                            const MicPairConfig& cfg) {
  if (pairs.empty()) return 0.0;
  double ss = 0.0;
  for (const auto& p : pairs) {
    const double r = p.itd - itd_map_corrected(p.position, cfg);
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(pairs.size()));
}

}  // namespace avfusion
