#pragma once

// Model-order selection and the post-processing around it: BIC scoring,
// warm-start initialisation from the previous interval, merging of
// components that describe a single mode, and rejection of flat clusters.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "avfusion/av_object.hpp"
#include "avfusion/error.hpp"
#include "avfusion/mixture.hpp"

namespace avfusion {

inline constexpr int kDefaultMaxComponents = 10;
inline constexpr double kDefaultDetThreshold = 1e-10;  // m^6
inline constexpr double kMinInitWeight = 1e-3;
inline constexpr int kMergeScanPoints = 1000;

/// Free parameters of an N-component model (mean, spread and weight each).
[[nodiscard]] constexpr int free_parameters(int n_components) noexcept { return 3 * n_components; }

[[nodiscard]] inline double bic_score(double loglik, int n_components, std::size_t n_obs) {
  if (n_obs == 0) throw InvalidInput("bic_score: no observations");
  if (n_components < 0) throw InvalidInput("bic_score: negative component count");
  return loglik - 0.5 * free_parameters(n_components) * std::log(static_cast<double>(n_obs));
}

struct ScoredModel {
  int n_components = 0;
  MixtureParams params;
  Posteriors posteriors;
  double bic = 0.0;
  double loglik = 0.0;
};

/// Index of the highest-BIC model; ties go to the smaller model.
[[nodiscard]] inline std::size_t select_model_index(std::span<const ScoredModel> models) {
  if (models.empty()) throw InvalidInput("select_model: no candidate models");
  std::size_t best = 0;
  for (std::size_t i = 1; i < models.size(); ++i) {
    const auto& c = models[i];
    const auto& b = models[best];
    if (c.bic > b.bic || (c.bic == b.bic && c.n_components < b.n_components)) best = i;
  }
  return best;
}

[[nodiscard]] inline ScoredModel select_model(std::span<const ScoredModel> models) {
  return models[select_model_index(models)];
}

/// Davies-Bouldin style index of every component:
/// max over j != i of (sigma_i + sigma_j) / |mu_i - mu_j|.
/// A lone component gets 0; coincident means give +inf.
[[nodiscard]] inline std::vector<double> davies_bouldin_indices(const MixtureParams& p) {
  const std::size_t n = p.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double gap = std::abs(p.means[i] - p.means[j]);
      const double spread = p.stddevs[i] + p.stddevs[j];
      const double dw = gap > 0.0 ? spread / gap : std::numeric_limits<double>::infinity();
      out[i] = std::max(out[i], dw);
    }
  }
  return out;
}

/// Equally weighted components with means equally spaced over the domain.
[[nodiscard]] inline MixtureParams uniform_init(const OutlierDomain& domain, int n_components) {
  if (n_components < 0) throw InvalidInput("negative component count");
  const auto n = static_cast<std::size_t>(n_components);
  MixtureParams p;
  p.domain = domain;
  p.weights.assign(n + 1, 1.0 / static_cast<double>(n + 1));
  p.means.resize(n);
  p.stddevs.assign(n, n > 0 ? domain.width() / (2.0 * static_cast<double>(n)) : 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    p.means[i] = domain.lo + (static_cast<double>(i) + 0.5) * domain.width() / static_cast<double>(n);
  }
  return p;
}

namespace detail {

inline void floor_and_normalize(std::vector<double>& w) {
  for (double& x : w) x = std::max(x, kMinInitWeight);
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
}

}  // namespace detail

/// Initial model with `target_n` components derived from the previous
/// interval's model. Shrinking keeps the heaviest components; growing splits
/// the component with the largest Davies-Bouldin index at its mean into two
/// halves offset by one standard deviation.
[[nodiscard]] inline MixtureParams init_from_previous(const std::optional<MixtureParams>& prev,
                                                      int target_n, const OutlierDomain& domain,
                                                      int n_max = kDefaultMaxComponents) {
  if (target_n < 0 || target_n > n_max) throw InvalidInput("init_from_previous: target out of range");
  if (!prev || prev->size() == 0) return uniform_init(domain, target_n);

  const auto target = static_cast<std::size_t>(target_n);
  MixtureParams out;
  out.domain = domain;
  out.weights.clear();

  if (target <= prev->size()) {
    std::vector<std::size_t> order(prev->size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return prev->weights[a] > prev->weights[b];
    });
    order.resize(target);
    std::sort(order.begin(), order.end());
    for (std::size_t i : order) {
      out.weights.push_back(prev->weights[i]);
      out.means.push_back(prev->means[i]);
      out.stddevs.push_back(prev->stddevs[i]);
    }
    out.weights.push_back(prev->outlier_weight());
  } else {
    out.weights = prev->weights;
    out.means = prev->means;
    out.stddevs = prev->stddevs;
    while (out.size() < target) {
      const auto dw = davies_bouldin_indices(out);
      // The most crowded pair shares its index; split the wider member.
      std::size_t i = 0;
      for (std::size_t j = 1; j < dw.size(); ++j) {
        if (dw[j] > dw[i] || (dw[j] == dw[i] && out.stddevs[j] > out.stddevs[i])) i = j;
      }
      const double mu = out.means[i];
      const double sd = out.stddevs[i];
      const double half = 0.5 * out.weights[i];
      out.means[i] = mu - sd;
      out.weights[i] = half;
      out.means.insert(out.means.begin() + static_cast<std::ptrdiff_t>(i) + 1, mu + sd);
      out.stddevs.insert(out.stddevs.begin() + static_cast<std::ptrdiff_t>(i) + 1, sd);
      out.weights.insert(out.weights.begin() + static_cast<std::ptrdiff_t>(i) + 1, half);
    }
  }
  for (double& m : out.means) m = std::clamp(m, domain.lo, domain.hi);
  for (double& s : out.stddevs) s = std::max(s, std::sqrt(kVarianceFloor));
  detail::floor_and_normalize(out.weights);
  return out;
}

/// True when the two-component sub-mixture has a single mode. The density is
/// scanned between the two means; outside that segment it is monotone.
[[nodiscard]] inline bool is_unimodal_pair(double w1, double mu1, double sd1, double w2, double mu2,
                                           double sd2, int scan_points = kMergeScanPoints) {
  if (mu1 == mu2) return true;
  std::vector<double> f(static_cast<std::size_t>(scan_points));
  for (int i = 0; i < scan_points; ++i) {
    const double x = mu1 + (mu2 - mu1) * i / (scan_points - 1);
    f[static_cast<std::size_t>(i)] =
        w1 * std::exp(log_normal_pdf(x, mu1, sd1)) + w2 * std::exp(log_normal_pdf(x, mu2, sd2));
  }
  // A dip is a point strictly below the running maxima on both sides.
  std::vector<double> suffix(f.size());
  double run = 0.0;
  for (std::size_t i = f.size(); i-- > 0;) suffix[i] = run = std::max(run, f[i]);
  double prefix = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    prefix = std::max(prefix, f[i]);
    const double ceiling = std::min(prefix, suffix[i]);
    if (f[i] < ceiling * (1.0 - 1e-12)) return false;
  }
  return true;
}

/// Repeatedly merges the closest pair of components whose sub-mixture is
/// unimodal, moment-matching the pair and summing their posterior columns.
[[nodiscard]] inline std::pair<MixtureParams, Posteriors> merge_clusters(MixtureParams params,
                                                                         Posteriors post) {
  auto drop_column = [](PosteriorMatrix& m, Eigen::Index keep, Eigen::Index drop) {
    if (m.rows() == 0) {
      m.resize(0, m.cols() - 1);
      return;
    }
    m.col(keep) += m.col(drop);
    PosteriorMatrix out(m.rows(), m.cols() - 1);
    out.leftCols(drop) = m.leftCols(drop);
    out.rightCols(m.cols() - drop - 1) = m.rightCols(m.cols() - drop - 1);
    m = std::move(out);
  };

  for (;;) {
    const std::size_t n = params.size();
    std::optional<std::pair<std::size_t, std::size_t>> best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double gap = std::abs(params.means[i] - params.means[j]);
        if (gap >= best_gap) continue;
        if (is_unimodal_pair(params.weights[i], params.means[i], params.stddevs[i],
                             params.weights[j], params.means[j], params.stddevs[j])) {
          best = {i, j};
          best_gap = gap;
        }
      }
    }
    if (!best) break;
    const auto [i, j] = *best;
    const double wi = params.weights[i];
    const double wj = params.weights[j];
    const double w = wi + wj;
    const double fi = w > 0.0 ? wi / w : 0.5;
    const double fj = w > 0.0 ? wj / w : 0.5;
    const double mu = fi * params.means[i] + fj * params.means[j];
    const double second = fi * (params.stddevs[i] * params.stddevs[i] + params.means[i] * params.means[i]) +
                          fj * (params.stddevs[j] * params.stddevs[j] + params.means[j] * params.means[j]);
    params.weights[i] = w;
    params.means[i] = mu;
    params.stddevs[i] = std::sqrt(std::max(second - mu * mu, kVarianceFloor));
    params.weights.erase(params.weights.begin() + static_cast<std::ptrdiff_t>(j));
    params.means.erase(params.means.begin() + static_cast<std::ptrdiff_t>(j));
    params.stddevs.erase(params.stddevs.begin() + static_cast<std::ptrdiff_t>(j));
    drop_column(post.visual, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    drop_column(post.auditory, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return {std::move(params), std::move(post)};
}

/// Drops objects whose 3D covariance is too flat to be a real speaker, i.e.
/// clusters spread along one hyperboloid of constant ITD.
[[nodiscard]] inline std::vector<AVObject> reject_spurious(std::vector<AVObject> objects,
                                                           double det_threshold = kDefaultDetThreshold) {
  for (const auto& o : objects) {
    const Eigen::Matrix3d& c = o.covariance;
    if (!c.allFinite()) throw InvalidInput("reject_spurious: non-finite covariance");
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw InvalidInput("reject_spurious: covariance is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(c, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
      throw InvalidInput("reject_spurious: covariance is not positive semidefinite");
    }
  }
  std::erase_if(objects, [&](const AVObject& o) { return o.covariance.determinant() < det_threshold; });
  return objects;
}

}  // namespace avfusion
