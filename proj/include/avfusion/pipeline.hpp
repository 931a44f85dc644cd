#pragma once

// Per-interval procedures. The motion-guided variant fits candidate models for
// every N, picks one by BIC and post-processes it; the face-guided variant
// takes the detected faces as the components and only runs the auditory EM.

#include <Eigen/Core>

#include <cmath>
#include <future>
#include <optional>
#include <span>
#include <vector>

#include "avfusion/av_object.hpp"
#include "avfusion/error.hpp"
#include "avfusion/geometry.hpp"
#include "avfusion/mixture.hpp"
#include "avfusion/selection.hpp"

namespace avfusion {

inline constexpr double kDefaultIntervalSeconds = 0.4;
inline constexpr double kDefaultEnergyGate = 0.001;
inline constexpr double kFaceInitVariance = 1e-9;  // s^2

struct IntervalObservations {
  std::vector<ScenePoint> visual;  // HM3D points or face centres
  std::vector<double> auditory;    // ITD values, s
  std::vector<double> auditory_energy;  // optional frame energy per ITD
  int interval_index = 0;
  double duration = kDefaultIntervalSeconds;
};

struct PipelineKnobs {
  EmOptions em;
  int n_max = kDefaultMaxComponents;
  double det_threshold = kDefaultDetThreshold;
  double domain_margin = 0.1;
  double energy_gate = kDefaultEnergyGate;
  bool parallel = true;  // fit candidate model orders concurrently
};

/// Frames quieter than the gate are not processed. The boundary is processed.
[[nodiscard]] inline bool energy_gate(double frame_energy, double gate = kDefaultEnergyGate) {
  return frame_energy >= gate;
}

/// Drops ITD values whose frame energy fails the gate. Observations without
/// energies are returned unchanged.
[[nodiscard]] inline IntervalObservations gate_auditory(IntervalObservations obs, double gate) {
  if (obs.auditory_energy.empty()) return obs;
  if (obs.auditory_energy.size() != obs.auditory.size()) {
    throw InvalidInput("auditory energies do not match the ITD count");
  }
  std::vector<double> kept;
  std::vector<double> kept_energy;
  for (std::size_t k = 0; k < obs.auditory.size(); ++k) {
    if (energy_gate(obs.auditory_energy[k], gate)) {
      kept.push_back(obs.auditory[k]);
      kept_energy.push_back(obs.auditory_energy[k]);
    }
  }
  obs.auditory = std::move(kept);
  obs.auditory_energy = std::move(kept_energy);
  return obs;
}

struct PositionEstimate {
  std::size_t component = 0;
  ScenePoint position;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  double mass = 0.0;  // summed visual responsibilities
};

/// Responsibility-weighted mean and scatter of the 3D features for every
/// Gaussian column of `alpha` (the trailing outlier column is ignored).
/// Components with no visual mass are omitted.
[[nodiscard]] inline std::vector<PositionEstimate> estimate_positions(std::span<const ScenePoint> visual,
                                                                      const PosteriorMatrix& alpha) {
  if (alpha.rows() != static_cast<Eigen::Index>(visual.size())) {
    throw InvalidInput("estimate_positions: posterior rows do not match the visual features");
  }
  std::vector<PositionEstimate> out;
  if (alpha.cols() < 2) return out;
  for (Eigen::Index n = 0; n + 1 < alpha.cols(); ++n) {
    const double mass = alpha.col(n).sum();
    if (mass < kEmptyComponentMass) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t m = 0; m < visual.size(); ++m) {
      mean += alpha(static_cast<Eigen::Index>(m), n) *
              Eigen::Vector3d(visual[m].x, visual[m].y, visual[m].z);
    }
    mean /= mass;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t m = 0; m < visual.size(); ++m) {
      const Eigen::Vector3d d = Eigen::Vector3d(visual[m].x, visual[m].y, visual[m].z) - mean;
      cov += alpha(static_cast<Eigen::Index>(m), n) * d * d.transpose();
    }
    cov /= mass;
    cov = 0.5 * (cov + cov.transpose()).eval();
    out.push_back({static_cast<std::size_t>(n), {mean.x(), mean.y(), mean.z()}, cov, mass});
  }
  return out;
}

/// Speaking threshold K / (N + 2).
[[nodiscard]] inline double speaking_threshold(std::size_t k, std::size_t n_components) noexcept {
  return static_cast<double>(k) / static_cast<double>(n_components + 2);
}

/// Summed auditory responsibility of each Gaussian component.
[[nodiscard]] inline std::vector<double> auditory_masses(const PosteriorMatrix& beta,
                                                         std::size_t n_components) {
  std::vector<double> out(n_components, 0.0);
  if (beta.rows() == 0) return out;
  if (beta.cols() < static_cast<Eigen::Index>(n_components)) {
    throw InvalidInput("auditory posteriors have too few columns");
  }
  for (std::size_t n = 0; n < n_components; ++n) out[n] = beta.col(static_cast<Eigen::Index>(n)).sum();
  return out;
}

[[nodiscard]] inline std::vector<bool> estimate_speaking(const PosteriorMatrix& beta,
                                                         std::size_t n_components, std::size_t k) {
  if (beta.rows() != static_cast<Eigen::Index>(k)) {
    throw InvalidInput("estimate_speaking: posterior rows do not match K");
  }
  const auto masses = auditory_masses(beta, n_components);
  const double tau = speaking_threshold(k, n_components);
  std::vector<bool> out(n_components, false);
  for (std::size_t n = 0; n < n_components; ++n) out[n] = k > 0 && masses[n] > tau;
  return out;
}

/// A candidate model of a given order fitted by visual EM then vision-guided
/// fusion, and scored by BIC.
[[nodiscard]] inline ScoredModel fit_candidate(std::span<const double> v_proj, std::span<const double> a,
                                               const MixtureParams& init, const EmOptions& em) {
  auto vis = em_visual(v_proj, init, em);
  auto fus = em_fusion(v_proj, a, vis.alpha, vis.params, em);
  ScoredModel sm;
  sm.n_components = static_cast<int>(init.size());
  sm.loglik = log_likelihood(v_proj, a, fus.params);
  sm.bic = bic_score(sm.loglik, sm.n_components, v_proj.size() + a.size());
  sm.params = std::move(fus.params);
  sm.posteriors = std::move(fus.posteriors);
  return sm;
}

/// Fits every order 0..n_max, each initialised from `prev`.
[[nodiscard]] inline std::vector<ScoredModel> fit_candidates(std::span<const double> v_proj,
                                                             std::span<const double> a,
                                                             const std::optional<MixtureParams>& prev,
                                                             const OutlierDomain& domain,
                                                             const PipelineKnobs& knobs) {
  const int count = knobs.n_max + 1;
  std::vector<ScoredModel> models(static_cast<std::size_t>(count));
  auto fit = [&](int n) {
    return fit_candidate(v_proj, a, init_from_previous(prev, n, domain, knobs.n_max), knobs.em);
  };
  if (knobs.parallel) {
    std::vector<std::future<ScoredModel>> jobs;
    jobs.reserve(models.size());
    for (int n = 0; n < count; ++n) jobs.push_back(std::async(std::launch::async, fit, n));
    for (int n = 0; n < count; ++n) models[static_cast<std::size_t>(n)] = jobs[static_cast<std::size_t>(n)].get();
  } else {
    for (int n = 0; n < count; ++n) models[static_cast<std::size_t>(n)] = fit(n);
  }
  return models;
}

struct MotionGuidedResult {
  std::vector<AVObject> objects;
  std::optional<MixtureParams> model;  // warm start for the next interval
  int n_selected = 0;                  // order chosen by BIC, before merging
  std::vector<double> bic;             // score of every candidate order
};

/// Motion-guided detection for one interval.
[[nodiscard]] inline MotionGuidedResult motion_guided_interval(const IntervalObservations& obs,
                                                               const MicPairConfig& cfg,
                                                               const std::optional<MixtureParams>& prev,
                                                               const PipelineKnobs& knobs = {}) {
  cfg.validate();
  if (knobs.n_max < 0) throw InvalidInput("n_max must be non-negative");
  MotionGuidedResult res;
  if (obs.visual.empty() && obs.auditory.empty()) {
    res.model = prev;
    return res;
  }
  const auto domain = outlier_domain_for(cfg, knobs.domain_margin);
  const auto v_proj = project(obs.visual, cfg);
  const auto gated = gate_auditory(IntervalObservations{{}, obs.auditory, obs.auditory_energy}, knobs.energy_gate);
  const std::span<const double> a = gated.auditory;

  const auto models = fit_candidates(v_proj, a, prev, domain, knobs);
  for (const auto& m : models) res.bic.push_back(m.bic);
  const auto& chosen = models[select_model_index(models)];
  res.n_selected = chosen.n_components;

  auto [params, post] = merge_clusters(chosen.params, chosen.posteriors);
  const std::size_t n = params.size();
  const auto masses = auditory_masses(post.auditory, n);
  const double tau = speaking_threshold(a.size(), n);
  for (const auto& est : estimate_positions(obs.visual, post.visual)) {
    AVObject o;
    o.position = est.position;
    o.covariance = est.covariance;
    o.weight = params.weights[est.component];
    o.auditory_mass = masses[est.component];
    o.speaking = !a.empty() && o.auditory_mass > tau;
    res.objects.push_back(o);
  }
  res.objects = reject_spurious(std::move(res.objects), knobs.det_threshold);
  res.model = std::move(params);
  return res;
}

/// Face-guided speaking detection: one component per face, initialised at the
/// face's projection, refined by EM on the ITD values only. Reported
/// positions are the faces themselves.
[[nodiscard]] inline std::vector<AVObject> face_guided_interval(std::span<const ScenePoint> faces,
                                                                std::span<const double> auditory,
                                                                const MicPairConfig& cfg,
                                                                const PipelineKnobs& knobs = {}) {
  cfg.validate();
  std::vector<AVObject> out;
  if (faces.empty()) return out;
  const std::size_t n = faces.size();

  MixtureParams init;
  init.domain = outlier_domain_for(cfg, knobs.domain_margin);
  init.weights.assign(n + 1, 1.0 / static_cast<double>(n + 1));
  init.stddevs.assign(n, std::sqrt(kFaceInitVariance));
  for (const auto& f : faces) {
    init.means.push_back(std::clamp(itd_map_corrected(f, cfg), init.domain.lo, init.domain.hi));
  }

  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].position = faces[i];
    out[i].weight = init.weights[i];
  }
  if (auditory.empty()) return out;

  const auto fus = em_fusion({}, auditory, PosteriorMatrix(0, static_cast<Eigen::Index>(n + 1)), init, knobs.em);
  const auto masses = auditory_masses(fus.posteriors.auditory, n);
  const double tau = speaking_threshold(auditory.size(), n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].weight = fus.params.weights[i];
    out[i].auditory_mass = masses[i];
    out[i].speaking = masses[i] > tau;
  }
  return out;
}

}  // namespace avfusion
