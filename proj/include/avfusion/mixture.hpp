#pragma once

// One-dimensional Gaussian mixture with a uniform outlier component over the
// auditory space, together with the visual EM and the vision-guided EM fusion
// in which the visual responsibilities stay frozen.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "avfusion/error.hpp"
#include "avfusion/geometry.hpp"

namespace avfusion {

inline constexpr double kVarianceFloor = 1e-12;   // s^2
inline constexpr double kEmptyComponentMass = 1e-8;

/// Support of the uniform outlier density.
struct OutlierDomain {
  double lo = 0.0;
  double hi = 1.0;

  [[nodiscard]] double width() const noexcept { return hi - lo; }
  [[nodiscard]] bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  [[nodiscard]] double log_density(double x) const noexcept {
    return contains(x) ? -std::log(width()) : -std::numeric_limits<double>::infinity();
  }
};

/// Domain covering every physically plausible corrected ITD plus a margin
/// expressed as a fraction of that range.
[[nodiscard]] inline OutlierDomain outlier_domain_for(const MicPairConfig& cfg,
                                                      double margin_fraction = 0.1) {
  cfg.validate();
  if (!(margin_fraction >= 0.0)) throw InvalidInput("domain margin must be non-negative");
  const double half = std::abs(cfg.c1) * cfg.max_raw_itd();
  const double margin = margin_fraction * 2.0 * half;
  return {cfg.c0 - half - margin, cfg.c0 + half + margin};
}

/// Mixture parameters. `weights` has one more entry than `means`; the last
/// entry is the outlier weight.
struct MixtureParams {
  std::vector<double> weights{1.0};
  std::vector<double> means;
  std::vector<double> stddevs;
  OutlierDomain domain;

  [[nodiscard]] std::size_t size() const noexcept { return means.size(); }
  [[nodiscard]] double outlier_weight() const { return weights.back(); }

  void validate() const {
    if (weights.empty()) throw InvalidModel("mixture has no weights");
    if (weights.size() != means.size() + 1 || stddevs.size() != means.size()) {
      throw InvalidModel("mixture parameter vectors have inconsistent sizes");
    }
    if (!(domain.lo < domain.hi)) throw InvalidModel("outlier domain is empty");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidModel("mixture weight is negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidModel("mixture weights do not sum to one");
    for (std::size_t n = 0; n < means.size(); ++n) {
      if (!(stddevs[n] > 0.0) || !std::isfinite(stddevs[n])) {
        throw InvalidModel("mixture standard deviation must be positive");
      }
      if (!std::isfinite(means[n]) || !domain.contains(means[n])) {
        throw InvalidModel("mixture mean lies outside the outlier domain");
      }
    }
  }
};

using PosteriorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Responsibilities of the visual (alpha) and auditory (beta) observations.
/// Each has one column per Gaussian plus a final outlier column.
struct Posteriors {
  PosteriorMatrix visual;
  PosteriorMatrix auditory;
};

[[nodiscard]] inline double log_normal_pdf(double x, double mean, double stddev) noexcept {
  const double z = (x - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - 0.5 * std::log(2.0 * std::numbers::pi);
}

namespace detail {

inline double log_or_ninf(double w) noexcept {
  return w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
}

// Per-component constants so that log(pi_n * p_n(x)) costs one multiply-add.
struct ComponentTerms {
  std::vector<double> offset;     // log pi_n - log sigma_n - log(2 pi)/2
  std::vector<double> inv_sigma;  // 1 / sigma_n
  const MixtureParams* params = nullptr;
  double outlier_inside = 0.0;    // log pi_out + log of the uniform density

  explicit ComponentTerms(const MixtureParams& p) : params(&p) {
    const std::size_t n_gauss = p.size();
    offset.resize(n_gauss + 1);
    inv_sigma.resize(n_gauss);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (std::size_t n = 0; n < n_gauss; ++n) {
      offset[n] = log_or_ninf(p.weights[n]) - std::log(p.stddevs[n]) - half_log_2pi;
      inv_sigma[n] = 1.0 / p.stddevs[n];
    }
    offset[n_gauss] = log_or_ninf(p.weights[n_gauss]);
    outlier_inside = offset[n_gauss] - std::log(p.domain.width());
  }

  void eval(double x, double* terms) const noexcept {
    const std::size_t n_gauss = inv_sigma.size();
    const double* mu = params->means.data();
    for (std::size_t n = 0; n < n_gauss; ++n) {
      const double z = (x - mu[n]) * inv_sigma[n];
      terms[n] = offset[n] - 0.5 * z * z;
    }
    terms[n_gauss] = params->domain.contains(x) ? outlier_inside : -std::numeric_limits<double>::infinity();
  }
};

}  // namespace detail

/// E-step: posterior probabilities of each component for each observation.
/// An observation with zero density under every component is assigned
/// entirely to the outlier column. If `loglik` is given, it receives the sum
/// of log p(x) over the observations.
[[nodiscard]] inline PosteriorMatrix responsibilities(std::span<const double> x,
                                                      const MixtureParams& params,
                                                      double* loglik = nullptr) {
  if (params.weights.empty()) throw InvalidModel("mixture has no weights");
  const auto cols = static_cast<Eigen::Index>(params.weights.size());
  PosteriorMatrix out(static_cast<Eigen::Index>(x.size()), cols);
  const detail::ComponentTerms comp(params);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t m = 0; m < x.size(); ++m) {
    double* row = out.data() + static_cast<Eigen::Index>(m) * cols;
    comp.eval(x[m], row);
    double top = kNegInf;
    for (Eigen::Index n = 0; n < cols; ++n) top = std::max(top, row[n]);
    if (top == kNegInf) {
      std::fill(row, row + cols, 0.0);
      row[cols - 1] = 1.0;
      total = kNegInf;
      continue;
    }
    double sum = 0.0;
    for (Eigen::Index n = 0; n < cols; ++n) {
      const double d = row[n] - top;
      // exp(-745) underflows to zero anyway
      row[n] = d > -745.0 ? std::exp(d) : 0.0;
      sum += row[n];
    }
    const double inv = 1.0 / sum;
    for (Eigen::Index n = 0; n < cols; ++n) row[n] *= inv;
    total += top + std::log(sum);
  }
  if (loglik) *loglik = total;
  return out;
}

/// Sum of log p(x; params) over a single set of observations.
[[nodiscard]] inline double log_likelihood(std::span<const double> x, const MixtureParams& params) {
  double ll = 0.0;
  (void)responsibilities(x, params, &ll);
  return ll;
}

/// Joint log-likelihood of projected visual and auditory observations.
[[nodiscard]] inline double log_likelihood(std::span<const double> v_proj,
                                           std::span<const double> a,
                                           const MixtureParams& params) {
  return log_likelihood(v_proj, params) + log_likelihood(a, params);
}

[[nodiscard]] inline PosteriorMatrix e_step_visual(std::span<const double> v_proj,
                                                   const MixtureParams& params) {
  return responsibilities(v_proj, params);
}

/// M-step of the vision-guided fusion: both modalities are pooled with their
/// responsibilities. Components with (almost) no mass keep the mean and spread
/// of `prev`.
[[nodiscard]] inline MixtureParams m_step_fusion(std::span<const double> v_proj,
                                                 std::span<const double> a,
                                                 const PosteriorMatrix& alpha,
                                                 const PosteriorMatrix& beta,
                                                 const MixtureParams& prev) {
  const std::size_t n_gauss = prev.size();
  const auto cols = static_cast<Eigen::Index>(n_gauss + 1);
  if (alpha.rows() != static_cast<Eigen::Index>(v_proj.size()) ||
      beta.rows() != static_cast<Eigen::Index>(a.size())) {
    throw InvalidInput("posterior rows do not match the observation count");
  }
  if ((alpha.rows() > 0 && alpha.cols() != cols) || (beta.rows() > 0 && beta.cols() != cols)) {
    throw InvalidInput("posterior columns do not match the component count");
  }
  if (v_proj.empty() && a.empty()) return prev;

  // Row-wise accumulation of the zeroth and first weighted moments.
  std::vector<double> mass(n_gauss + 1, 0.0);
  std::vector<double> first(n_gauss, 0.0);
  auto accumulate_moments = [&](std::span<const double> obs, const PosteriorMatrix& post) {
    for (std::size_t r = 0; r < obs.size(); ++r) {
      const double* row = post.data() + static_cast<Eigen::Index>(r) * cols;
      for (std::size_t n = 0; n < n_gauss; ++n) {
        mass[n] += row[n];
        first[n] += row[n] * obs[r];
      }
      mass[n_gauss] += row[n_gauss];
    }
  };
  accumulate_moments(v_proj, alpha);
  accumulate_moments(a, beta);
  double total = 0.0;
  for (double g : mass) total += g;

  MixtureParams next = prev;
  for (std::size_t n = 0; n <= n_gauss; ++n) next.weights[n] = mass[n] / total;

  std::vector<double> mu(n_gauss);
  for (std::size_t n = 0; n < n_gauss; ++n) mu[n] = mass[n] >= kEmptyComponentMass ? first[n] / mass[n] : 0.0;
  std::vector<double> second(n_gauss, 0.0);
  auto accumulate_scatter = [&](std::span<const double> obs, const PosteriorMatrix& post) {
    for (std::size_t r = 0; r < obs.size(); ++r) {
      const double* row = post.data() + static_cast<Eigen::Index>(r) * cols;
      for (std::size_t n = 0; n < n_gauss; ++n) {
        const double d = obs[r] - mu[n];
        second[n] += row[n] * d * d;
      }
    }
  };
  accumulate_scatter(v_proj, alpha);
  accumulate_scatter(a, beta);

  for (std::size_t n = 0; n < n_gauss; ++n) {
    if (mass[n] < kEmptyComponentMass) continue;
    next.means[n] = mu[n];
    next.stddevs[n] = std::sqrt(std::max(second[n] / mass[n], kVarianceFloor));
  }
  return next;
}

/// Standard M-step on the projected visual data alone.
[[nodiscard]] inline MixtureParams m_step_visual(std::span<const double> v_proj,
                                                 const PosteriorMatrix& alpha,
                                                 const MixtureParams& prev) {
  return m_step_fusion(v_proj, {}, alpha, PosteriorMatrix(0, alpha.cols()), prev);
}

/// Objective maximised by the vision-guided EM: the expected complete-data
/// log-likelihood of the visual data under the frozen alpha, plus the
/// marginal log-likelihood of the auditory data.
[[nodiscard]] inline double fusion_objective(std::span<const double> v_proj,
                                             std::span<const double> a,
                                             const PosteriorMatrix& alpha,
                                             const MixtureParams& params) {
  const detail::ComponentTerms comp(params);
  std::vector<double> terms(params.weights.size());
  double q = 0.0;
  for (std::size_t m = 0; m < v_proj.size(); ++m) {
    comp.eval(v_proj[m], terms.data());
    for (std::size_t n = 0; n < terms.size(); ++n) {
      const double w = alpha(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      if (w > 0.0) q += w * terms[n];
    }
  }
  return q + log_likelihood(a, params);
}

struct EmOptions {
  double tol = 1e-6;
  int max_iter = 100;
};

struct VisualEmResult {
  MixtureParams params;
  PosteriorMatrix alpha;
  std::vector<double> loglik;  // one entry per evaluated parameter set
  int iterations = 0;
};

/// Plain EM on the projected visual features. Stops when the log-likelihood
/// gain drops below `tol` or after `max_iter` M-steps.
[[nodiscard]] inline VisualEmResult em_visual(std::span<const double> v_proj,
                                              const MixtureParams& init,
                                              const EmOptions& opts = {}) {
  init.validate();
  VisualEmResult res{init, PosteriorMatrix(0, static_cast<Eigen::Index>(init.weights.size())), {}, 0};
  if (v_proj.empty()) return res;
  double ll = 0.0;
  res.alpha = responsibilities(v_proj, res.params, &ll);
  res.loglik.push_back(ll);
  for (int it = 1; it <= opts.max_iter; ++it) {
    res.params = m_step_visual(v_proj, res.alpha, res.params);
    double next_ll = 0.0;
    res.alpha = responsibilities(v_proj, res.params, &next_ll);
    res.loglik.push_back(next_ll);
    res.iterations = it;
    if (!(next_ll - ll >= opts.tol)) break;
    ll = next_ll;
  }
  return res;
}

struct FusionEmResult {
  MixtureParams params;
  Posteriors posteriors;
  std::vector<double> objective;  // fusion_objective per evaluated parameter set
  int iterations = 0;
};

/// Vision-guided EM fusion. The E-step only refreshes the auditory
/// responsibilities; `alpha_fixed` is used as-is in every M-step.
[[nodiscard]] inline FusionEmResult em_fusion(std::span<const double> v_proj,
                                              std::span<const double> a,
                                              const PosteriorMatrix& alpha_fixed,
                                              const MixtureParams& init,
                                              const EmOptions& opts = {}) {
  init.validate();
  const auto cols = static_cast<Eigen::Index>(init.weights.size());
  if (alpha_fixed.rows() != static_cast<Eigen::Index>(v_proj.size()) ||
      (alpha_fixed.rows() > 0 && alpha_fixed.cols() != cols)) {
    throw InvalidInput("frozen visual posteriors do not match the observations");
  }
  FusionEmResult res{init, {alpha_fixed, PosteriorMatrix(0, cols)}, {}, 0};
  if (v_proj.empty() && a.empty()) return res;

  double lla = 0.0;
  res.posteriors.auditory = responsibilities(a, res.params, &lla);
  double obj = fusion_objective(v_proj, {}, alpha_fixed, res.params) + lla;
  res.objective.push_back(obj);
  for (int it = 1; it <= opts.max_iter; ++it) {
    res.params = m_step_fusion(v_proj, a, alpha_fixed, res.posteriors.auditory, res.params);
    res.posteriors.auditory = responsibilities(a, res.params, &lla);
    const double next = fusion_objective(v_proj, {}, alpha_fixed, res.params) + lla;
    res.objective.push_back(next);
    res.iterations = it;
    if (!(next - obj >= opts.tol)) break;
    obj = next;
  }
  return res;
}

}  // namespace avfusion
