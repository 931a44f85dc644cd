#pragma once

// Synthetic audio-visual scenes with ground truth: visual features scattered
// around moving objects, ITD values around the projection of speaking ones,
// and uniform clutter in both modalities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "avfusion/error.hpp"
#include "avfusion/geometry.hpp"
#include "avfusion/mixture.hpp"
#include "avfusion/pipeline.hpp"

namespace avfusion {

/// Half-open time span [start, end).
struct TimeSpan {
  double start = 0.0;
  double end = 0.0;

  [[nodiscard]] bool contains(double t) const noexcept { return t >= start && t < end; }
};

struct Waypoint {
  double time = 0.0;
  ScenePoint position;
};

struct ObjectTrack {
  std::vector<Waypoint> waypoints;
  std::vector<TimeSpan> visible;
  std::vector<TimeSpan> speaking;

  /// Piecewise-linear position, held constant before the first and after the
  /// last waypoint.
  [[nodiscard]] ScenePoint position_at(double t) const {
    if (waypoints.empty()) throw InvalidInput("object track has no waypoints");
    if (t <= waypoints.front().time) return waypoints.front().position;
    if (t >= waypoints.back().time) return waypoints.back().position;
    const auto it = std::upper_bound(waypoints.begin(), waypoints.end(), t,
                                     [](double v, const Waypoint& w) { return v < w.time; });
    const Waypoint& b = *it;
    const Waypoint& a = *(it - 1);
    const double f = (t - a.time) / (b.time - a.time);
    return a.position + f * (b.position - a.position);
  }

  [[nodiscard]] bool visible_at(double t) const noexcept {
    return std::any_of(visible.begin(), visible.end(), [t](const TimeSpan& s) { return s.contains(t); });
  }
  [[nodiscard]] bool speaking_at(double t) const noexcept {
    return std::any_of(speaking.begin(), speaking.end(), [t](const TimeSpan& s) { return s.contains(t); });
  }

  void validate() const {
    if (waypoints.empty()) throw InvalidInput("object track has no waypoints");
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
      if (!waypoints[i].position.finite() || !std::isfinite(waypoints[i].time)) {
        throw InvalidInput("object waypoint is not finite");
      }
      if (i > 0 && !(waypoints[i].time > waypoints[i - 1].time)) {
        throw InvalidInput("waypoint times must be strictly increasing");
      }
    }
    for (const auto* spans : {&visible, &speaking}) {
      for (const auto& s : *spans) {
        if (!(s.start < s.end)) throw InvalidInput("time span must have start < end");
      }
    }
  }
};

/// Axis-aligned box in which visual clutter is drawn.
struct SceneBox {
  ScenePoint min{-2.0, -1.0, 0.5};
  ScenePoint max{2.0, 1.0, 5.0};
};

struct ScenarioSpec {
  std::string name;
  double duration_s = 10.0;
  double interval_s = kDefaultIntervalSeconds;
  std::vector<ObjectTrack> objects;
  double visual_noise_sigma = 0.03;  // m
  double itd_noise_sigma = 2e-5;     // s
  double visual_outlier_rate = 95.0;  // points per interval
  double itd_outlier_rate = 1.0;      // values per interval
  int visual_points_per_object = 633;
  int itd_points_per_speaking_object = 10;
  std::uint64_t seed = 1;
  SceneBox scene_box;
  double domain_margin = 0.1;
  bool face_guided = false;  // visual features are face centres

  [[nodiscard]] std::size_t interval_count() const {
    return static_cast<std::size_t>(std::max(1.0, std::floor(duration_s / interval_s + 1e-9)));
  }

  void validate(const MicPairConfig& cfg) const {
    if (!(duration_s > 0.0) || !(interval_s > 0.0)) throw InvalidInput("scenario durations must be positive");
    if (!(visual_noise_sigma >= 0.0) || !(itd_noise_sigma >= 0.0) || !(visual_outlier_rate >= 0.0) ||
        !(itd_outlier_rate >= 0.0) || visual_points_per_object < 0 || itd_points_per_speaking_object < 0) {
      throw InvalidInput("scenario rates and noise levels must be non-negative");
    }
    for (const auto& o : objects) o.validate();
    const auto domain = outlier_domain_for(cfg, domain_margin);
    const double margin = domain_margin * (domain.width() / (1.0 + 2.0 * domain_margin));
    if (margin < 5.0 * itd_noise_sigma) {
      throw InvalidInput("outlier-domain margin must cover five ITD noise deviations");
    }
  }
};

/// Ground-truth state of one object at the middle of an interval.
struct TruthObject {
  int id = 0;
  ScenePoint position;
  bool visible = false;
  bool speaking = false;
};

struct GroundTruth {
  std::vector<TruthObject> objects;
  std::vector<int> visual_tags;  // generating object id, -1 for clutter
  std::vector<int> itd_tags;
};

struct GeneratedInterval {
  IntervalObservations obs;
  GroundTruth truth;
  double t_start = 0.0;
};

/// Deterministic (given the seed) scene generation, one record per interval.
[[nodiscard]] inline std::vector<GeneratedInterval> generate(const ScenarioSpec& spec,
                                                             const MicPairConfig& cfg) {
  cfg.validate();
  spec.validate(cfg);
  const auto domain = outlier_domain_for(cfg, spec.domain_margin);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t count = spec.interval_count();
  const double dt = spec.interval_s;
  const int n_vis = spec.visual_points_per_object;
  const int n_itd = spec.itd_points_per_speaking_object;
  const auto& box = spec.scene_box;
  double visual_carry = 0.0;
  double itd_carry = 0.0;

  std::vector<GeneratedInterval> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    GeneratedInterval g;
    g.t_start = static_cast<double>(i) * dt;
    g.obs.interval_index = static_cast<int>(i);
    g.obs.duration = dt;
    const double t_mid = g.t_start + 0.5 * dt;

    for (std::size_t j = 0; j < spec.objects.size(); ++j) {
      const auto& track = spec.objects[j];
      const int id = static_cast<int>(j);
      TruthObject truth{id, track.position_at(t_mid), track.visible_at(t_mid), track.speaking_at(t_mid)};
      g.truth.objects.push_back(truth);

      if (truth.visible) {
        for (int p = 0; p < n_vis; ++p) {
          const double t = g.t_start + (p + 0.5) / n_vis * dt;
          const ScenePoint c = spec.face_guided ? truth.position : track.position_at(t);
          const double s = spec.visual_noise_sigma;
          const double dx = s * gauss(rng);
          const double dy = s * gauss(rng);
          const double dz = s * gauss(rng);
          g.obs.visual.push_back({c.x + dx, c.y + dy, c.z + dz});
          g.truth.visual_tags.push_back(id);
        }
      }
      if (truth.speaking) {
        for (int q = 0; q < n_itd; ++q) {
          const double t = g.t_start + (q + 0.5) / n_itd * dt;
          const double centre = itd_map_corrected(track.position_at(t), cfg);
          double value = centre;
          for (int attempt = 0; attempt < 100; ++attempt) {
            value = centre + spec.itd_noise_sigma * gauss(rng);
            if (domain.contains(value)) break;
          }
          g.obs.auditory.push_back(std::clamp(value, domain.lo, domain.hi));
          g.obs.auditory_energy.push_back(0.01 + 0.19 * unit(rng));
          g.truth.itd_tags.push_back(id);
        }
      }
    }

    visual_carry += spec.visual_outlier_rate;
    const auto n_vis_out = static_cast<int>(std::floor(visual_carry + 1e-9));
    visual_carry -= n_vis_out;
    for (int p = 0; p < n_vis_out; ++p) {
      const double x = box.min.x + (box.max.x - box.min.x) * unit(rng);
      const double y = box.min.y + (box.max.y - box.min.y) * unit(rng);
      const double z = box.min.z + (box.max.z - box.min.z) * unit(rng);
      g.obs.visual.push_back({x, y, z});
      g.truth.visual_tags.push_back(-1);
    }
    itd_carry += spec.itd_outlier_rate;
    const auto n_itd_out = static_cast<int>(std::floor(itd_carry + 1e-9));
    itd_carry -= n_itd_out;
    for (int q = 0; q < n_itd_out; ++q) {
      g.obs.auditory.push_back(domain.lo + domain.width() * unit(rng));
      g.obs.auditory_energy.push_back(0.02 * unit(rng));
      g.truth.itd_tags.push_back(-1);
    }
    out.push_back(std::move(g));
  }
  return out;
}

namespace detail {

inline ObjectTrack static_track(ScenePoint p, std::vector<TimeSpan> visible, std::vector<TimeSpan> speaking) {
  return {{{0.0, p}}, std::move(visible), std::move(speaking)};
}

// Back-and-forth lateral motion sampled every second; all tracks built with
// the same phase so objects keep their separation.
inline ObjectTrack moving_track(ScenePoint base, double amplitude, double period, double duration,
                                std::vector<TimeSpan> visible, std::vector<TimeSpan> speaking) {
  ObjectTrack t;
  for (double s = 0.0; s <= duration + 1e-9; s += 1.0) {
    const double phase = 2.0 * 3.14159265358979323846 * s / period;
    t.waypoints.push_back({s, {base.x + amplitude * std::sin(phase), base.y,
                               base.z + 0.5 * amplitude * std::cos(phase)}});
  }
  t.visible = std::move(visible);
  t.speaking = std::move(speaking);
  return t;
}

// Repeating [offset, offset + on) spans with the given period.
inline std::vector<TimeSpan> periodic(double offset, double on, double period, double duration) {
  std::vector<TimeSpan> out;
  for (double s = offset; s < duration; s += period) out.push_back({s, std::min(s + on, duration)});
  return out;
}

}  // namespace detail

/// Built-in scenes: StaCon, DynCon, StaVar, DynVar exercise the
/// motion-guided pipeline; S1..S5 mimic face-guided conversations.
[[nodiscard]] inline std::map<std::string, ScenarioSpec> builtin_scenarios() {
  using detail::moving_track;
  using detail::periodic;
  using detail::static_track;
  std::map<std::string, ScenarioSpec> out;

  const double long_run = 160.0;
  const std::vector<TimeSpan> always{{0.0, long_run}};
  const ScenePoint a{-0.9, 0.0, 2.2};
  const ScenePoint b{0.0, -0.1, 1.8};
  const ScenePoint c{0.9, 0.05, 2.4};
  const auto talk_a = periodic(0.0, 4.0, 10.0, long_run);
  const auto talk_b = periodic(3.0, 4.0, 10.0, long_run);
  const auto talk_c = periodic(6.0, 4.0, 10.0, long_run);
  const std::vector<TimeSpan> vis_b{{0.0, 40.0}, {60.0, 120.0}, {140.0, long_run}};
  const std::vector<TimeSpan> vis_c{{20.0, 100.0}, {130.0, long_run}};

  auto motion_spec = [&](std::string name, std::uint64_t seed) {
    ScenarioSpec s;
    s.name = std::move(name);
    s.duration_s = long_run;
    s.seed = seed;
    // 1.2 speakers on average: about 20 ITD values per interval.
    s.itd_points_per_speaking_object = 15;
    s.itd_outlier_rate = 2.0;
    return s;
  };

  {
    auto s = motion_spec("StaCon", 11);
    s.objects = {static_track(a, always, talk_a), static_track(b, always, talk_b),
                 static_track(c, always, talk_c)};
    out.emplace(s.name, s);
  }
  {
    auto s = motion_spec("DynCon", 12);
    s.objects = {moving_track(a, 0.3, 8.0, long_run, always, talk_a),
                 moving_track(b, 0.3, 8.0, long_run, always, talk_b),
                 moving_track(c, 0.3, 8.0, long_run, always, talk_c)};
    out.emplace(s.name, s);
  }
  {
    auto s = motion_spec("StaVar", 13);
    s.objects = {static_track(a, always, talk_a), static_track(b, vis_b, talk_b),
                 static_track(c, vis_c, talk_c)};
    out.emplace(s.name, s);
  }
  {
    auto s = motion_spec("DynVar", 14);
    s.objects = {moving_track(a, 0.3, 8.0, long_run, always, talk_a),
                 moving_track(b, 0.3, 8.0, long_run, vis_b, talk_b),
                 moving_track(c, 0.3, 8.0, long_run, vis_c, talk_c)};
    out.emplace(s.name, s);
  }

  // Face-guided conversations: one face centre per visible person per
  // interval, sparse reverberation-like ITD clutter.
  const double talk_run = 64.0;
  const std::vector<TimeSpan> seen{{0.0, talk_run}};
  auto face_spec = [&](std::string name, std::uint64_t seed) {
    ScenarioSpec s;
    s.name = std::move(name);
    s.duration_s = talk_run;
    s.seed = seed;
    s.face_guided = true;
    s.visual_points_per_object = 1;
    s.visual_noise_sigma = 0.02;
    s.visual_outlier_rate = 0.0;
    s.itd_points_per_speaking_object = 10;
    s.itd_outlier_rate = 0.5;
    return s;
  };
  const ScenePoint left{-0.8, 0.0, 1.8};
  const ScenePoint mid{0.0, 0.0, 1.5};
  const ScenePoint right{0.8, 0.0, 1.9};
  {
    auto s = face_spec("S1", 21);
    s.objects = {static_track({0.1, 0.0, 1.5}, seen, periodic(0.0, 2.0, 4.0, talk_run))};
    out.emplace(s.name, s);
  }
  {
    auto s = face_spec("S2", 22);
    s.objects = {static_track(left, seen, periodic(0.0, 2.0, 8.0, talk_run)),
                 static_track(mid, seen, periodic(2.0, 2.0, 8.0, talk_run)),
                 static_track(right, seen, periodic(4.0, 2.0, 8.0, talk_run))};
    out.emplace(s.name, s);
  }
  {
    auto s = face_spec("S3", 23);
    s.objects = {static_track(left, seen, periodic(0.0, 2.0, 8.0, talk_run)),
                 static_track({0.0, -0.6, 1.5}, seen, periodic(2.0, 2.0, 8.0, talk_run)),
                 static_track(right, seen, periodic(4.0, 2.0, 8.0, talk_run))};
    out.emplace(s.name, s);
  }
  {
    auto s = face_spec("S4", 24);
    s.objects = {static_track(left, seen, periodic(0.0, 2.0, 8.0, talk_run)),
                 static_track(mid, seen, periodic(2.0, 2.0, 8.0, talk_run)),
                 static_track({2.5, 0.0, 0.8}, {}, periodic(4.0, 2.0, 8.0, talk_run))};
    out.emplace(s.name, s);
  }
  {
    auto s = face_spec("S5", 25);
    s.itd_outlier_rate = 2.0;
    s.objects = {static_track(left, seen, periodic(0.0, 3.0, 7.0, talk_run)),
                 moving_track(mid, 0.25, 10.0, talk_run, seen, periodic(1.0, 2.5, 5.0, talk_run)),
                 static_track(right, seen, periodic(2.5, 2.0, 6.0, talk_run))};
    out.emplace(s.name, s);
  }
  return out;
}

}  // namespace avfusion
