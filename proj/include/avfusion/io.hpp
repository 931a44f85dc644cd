#pragma once

// JSON encodings of configurations, scenario specs, interval records and
// results. Line-delimited files hold one JSON object per line.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "avfusion/av_object.hpp"
#include "avfusion/error.hpp"
#include "avfusion/evaluation.hpp"
#include "avfusion/geometry.hpp"
#include "avfusion/pipeline.hpp"
#include "avfusion/simulator.hpp"

namespace avfusion {

using nlohmann::json;

inline void to_json(json& j, const ScenePoint& p) { j = json::array({p.x, p.y, p.z}); }
inline void from_json(const json& j, ScenePoint& p) {
  if (!j.is_array() || j.size() != 3) throw InvalidInput("a point must be an array of three numbers");
  p = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(json& j, const MicPairConfig& c) {
  j = {{"mic_left", c.mic_left}, {"mic_right", c.mic_right}, {"sound_speed", c.sound_speed},
       {"c1", c.c1}, {"c0", c.c0}};
}
inline void from_json(const json& j, MicPairConfig& c) {
  const MicPairConfig d;
  c.mic_left = j.value("mic_left", d.mic_left);
  c.mic_right = j.value("mic_right", d.mic_right);
  c.sound_speed = j.value("sound_speed", d.sound_speed);
  c.c1 = j.value("c1", d.c1);
  c.c0 = j.value("c0", d.c0);
}

inline void to_json(json& j, const TimeSpan& s) { j = json::array({s.start, s.end}); }
inline void from_json(const json& j, TimeSpan& s) {
  if (!j.is_array() || j.size() != 2) throw InvalidInput("a time span must be [start, end]");
  s = {j[0].get<double>(), j[1].get<double>()};
}

inline void to_json(json& j, const Waypoint& w) { j = {{"t", w.time}, {"position", w.position}}; }
inline void from_json(const json& j, Waypoint& w) {
  w.time = j.at("t").get<double>();
  w.position = j.at("position").get<ScenePoint>();
}

inline void to_json(json& j, const ObjectTrack& t) {
  j = {{"waypoints", t.waypoints}, {"visible", t.visible}, {"speaking", t.speaking}};
}
inline void from_json(const json& j, ObjectTrack& t) {
  t.waypoints = j.at("waypoints").get<std::vector<Waypoint>>();
  t.visible = j.value("visible", std::vector<TimeSpan>{});
  t.speaking = j.value("speaking", std::vector<TimeSpan>{});
}

inline void to_json(json& j, const ScenarioSpec& s) {
  j = {{"name", s.name},
       {"duration_s", s.duration_s},
       {"interval_s", s.interval_s},
       {"objects", s.objects},
       {"visual_noise_sigma", s.visual_noise_sigma},
       {"itd_noise_sigma", s.itd_noise_sigma},
       {"visual_outlier_rate", s.visual_outlier_rate},
       {"itd_outlier_rate", s.itd_outlier_rate},
       {"visual_points_per_object", s.visual_points_per_object},
       {"itd_points_per_speaking_object", s.itd_points_per_speaking_object},
       {"seed", s.seed},
       {"scene_box", {{"min", s.scene_box.min}, {"max", s.scene_box.max}}},
       {"domain_margin", s.domain_margin},
       {"face_guided", s.face_guided}};
}
inline void from_json(const json& j, ScenarioSpec& s) {
  const ScenarioSpec d;
  s.name = j.value("name", d.name);
  s.duration_s = j.value("duration_s", d.duration_s);
  s.interval_s = j.value("interval_s", d.interval_s);
  s.objects = j.value("objects", std::vector<ObjectTrack>{});
  s.visual_noise_sigma = j.value("visual_noise_sigma", d.visual_noise_sigma);
  s.itd_noise_sigma = j.value("itd_noise_sigma", d.itd_noise_sigma);
  s.visual_outlier_rate = j.value("visual_outlier_rate", d.visual_outlier_rate);
  s.itd_outlier_rate = j.value("itd_outlier_rate", d.itd_outlier_rate);
  s.visual_points_per_object = j.value("visual_points_per_object", d.visual_points_per_object);
  s.itd_points_per_speaking_object = j.value("itd_points_per_speaking_object", d.itd_points_per_speaking_object);
  s.seed = j.value("seed", d.seed);
  if (j.contains("scene_box")) {
    s.scene_box.min = j.at("scene_box").at("min").get<ScenePoint>();
    s.scene_box.max = j.at("scene_box").at("max").get<ScenePoint>();
  }
  s.domain_margin = j.value("domain_margin", d.domain_margin);
  s.face_guided = j.value("face_guided", d.face_guided);
}

inline void to_json(json& j, const PipelineKnobs& k) {
  j = {{"tol", k.em.tol},
       {"max_iter", k.em.max_iter},
       {"n_max", k.n_max},
       {"det_threshold", k.det_threshold},
       {"domain_margin", k.domain_margin},
       {"energy_gate", k.energy_gate}};
}
inline void from_json(const json& j, PipelineKnobs& k) {
  const PipelineKnobs d;
  k.em.tol = j.value("tol", d.em.tol);
  k.em.max_iter = j.value("max_iter", d.em.max_iter);
  k.n_max = j.value("n_max", d.n_max);
  k.det_threshold = j.value("det_threshold", d.det_threshold);
  k.domain_margin = j.value("domain_margin", d.domain_margin);
  k.energy_gate = j.value("energy_gate", d.energy_gate);
}

inline void to_json(json& j, const TruthObject& t) {
  j = {{"id", t.id}, {"position", t.position}, {"visible", t.visible}, {"speaking", t.speaking}};
}
inline void from_json(const json& j, TruthObject& t) {
  t.id = j.at("id").get<int>();
  t.position = j.at("position").get<ScenePoint>();
  t.visible = j.at("visible").get<bool>();
  t.speaking = j.at("speaking").get<bool>();
}

/// One line of an observation file: the interval's features plus ground truth.
inline void to_json(json& j, const GeneratedInterval& g) {
  j = {{"interval_index", g.obs.interval_index},
       {"t_start", g.t_start},
       {"duration", g.obs.duration},
       {"visual", g.obs.visual},
       {"itd", g.obs.auditory},
       {"itd_energy", g.obs.auditory_energy},
       {"visual_tags", g.truth.visual_tags},
       {"itd_tags", g.truth.itd_tags},
       {"truth", g.truth.objects}};
}
inline void from_json(const json& j, GeneratedInterval& g) {
  g.obs.interval_index = j.at("interval_index").get<int>();
  g.t_start = j.value("t_start", 0.0);
  g.obs.duration = j.value("duration", kDefaultIntervalSeconds);
  g.obs.visual = j.value("visual", std::vector<ScenePoint>{});
  g.obs.auditory = j.value("itd", std::vector<double>{});
  g.obs.auditory_energy = j.value("itd_energy", std::vector<double>{});
  g.truth.visual_tags = j.value("visual_tags", std::vector<int>{});
  g.truth.itd_tags = j.value("itd_tags", std::vector<int>{});
  g.truth.objects = j.value("truth", std::vector<TruthObject>{});
  if (!(g.obs.duration > 0.0)) throw InvalidInput("interval duration must be positive");
}

inline void to_json(json& j, const AVObject& o) {
  json cov = json::array();
  for (int r = 0; r < 3; ++r) {
    cov.push_back(json::array({o.covariance(r, 0), o.covariance(r, 1), o.covariance(r, 2)}));
  }
  j = {{"position", o.position},
       {"covariance", cov},
       {"weight", o.weight},
       {"speaking", o.speaking},
       {"auditory_mass", o.auditory_mass}};
}
inline void from_json(const json& j, AVObject& o) {
  o.position = j.at("position").get<ScenePoint>();
  const auto& cov = j.at("covariance");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) o.covariance(r, c) = cov.at(r).at(c).get<double>();
  }
  o.weight = j.value("weight", 0.0);
  o.speaking = j.at("speaking").get<bool>();
  o.auditory_mass = j.value("auditory_mass", 0.0);
}

inline void to_json(json& j, const IntervalScore& s) {
  j = {{"loc_fp", s.loc_fp},     {"loc_fn", s.loc_fn},     {"loc_tp", s.loc_tp},    {"loc_errors", s.loc_errors},
       {"audio_fp", s.audio_fp}, {"audio_fn", s.audio_fn}, {"audio_tp", s.audio_tp}};
}

inline void to_json(json& j, const SummaryTable& t) {
  j = {{"intervals", t.intervals},
       {"FP", t.loc_fp},
       {"FN", t.loc_fn},
       {"FN_pct", t.loc_fn_pct()},
       {"TP", t.loc_tp},
       {"TP_pct", t.loc_tp_pct()},
       {"ALE_m", t.ale},
       {"audio_FP", t.audio_fp},
       {"audio_FN", t.audio_fn},
       {"audio_FN_pct", t.audio_fn_pct()},
       {"audio_TP", t.audio_tp},
       {"audio_TP_pct", t.audio_tp_pct()}};
}

[[nodiscard]] inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

[[nodiscard]] inline std::vector<json> read_jsonl(std::istream& in) {
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw InvalidInput("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

[[nodiscard]] inline MicPairConfig load_mic_config(const std::filesystem::path& path) {
  MicPairConfig cfg;
  try {
    cfg = read_json_file(path).get<MicPairConfig>();
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace avfusion
