#pragma once

// Detection scoring: nearest-truth assignment with a distance gate,
// localisation error of the matched pairs, and speaking-state scoring of the
// matched pairs.

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "avfusion/av_object.hpp"
#include "avfusion/geometry.hpp"

namespace avfusion {

inline constexpr double kDefaultTauLoc = 0.35;  // m

struct TruthCluster {
  ScenePoint position;
  bool speaking = false;
};

struct IntervalScore {
  int loc_fp = 0;
  int loc_fn = 0;
  int loc_tp = 0;
  std::vector<double> loc_errors;  // one per localisation TP, m
  int audio_fp = 0;  // detected speaking while silent
  int audio_fn = 0;  // detected silent while speaking
  int audio_tp = 0;
};

/// Scores one interval. Each detection is assigned to its nearest truth when
/// closer than `tau_loc`; the closest assignee of a truth is the true
/// positive and the other assignees are false positives.
[[nodiscard]] inline IntervalScore match_clusters(std::span<const AVObject> detected,
                                                  std::span<const TruthCluster> truth,
                                                  double tau_loc = kDefaultTauLoc) {
  IntervalScore s;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> owner(detected.size(), kNone);
  std::vector<double> dist(detected.size(), 0.0);
  for (std::size_t d = 0; d < detected.size(); ++d) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double e = distance(detected[d].position, truth[t].position);
      if (e < best) {
        best = e;
        owner[d] = t;
      }
    }
    dist[d] = best;
    if (!(best < tau_loc)) {
      owner[d] = kNone;
      ++s.loc_fp;
    }
  }
  for (std::size_t t = 0; t < truth.size(); ++t) {
    std::size_t winner = kNone;
    int assigned = 0;
    for (std::size_t d = 0; d < detected.size(); ++d) {
      if (owner[d] != t) continue;
      ++assigned;
      if (winner == kNone || dist[d] < dist[winner]) winner = d;
    }
    if (assigned == 0) {
      ++s.loc_fn;
      continue;
    }
    ++s.loc_tp;
    s.loc_fp += assigned - 1;
    s.loc_errors.push_back(dist[winner]);
    const bool said = detected[winner].speaking;
    const bool truly = truth[t].speaking;
    if (said && !truly) {
      ++s.audio_fp;
    } else if (!said && truly) {
      ++s.audio_fn;
    } else {
      ++s.audio_tp;
    }
  }
  return s;
}

struct SummaryTable {
  long long loc_fp = 0;
  long long loc_fn = 0;
  long long loc_tp = 0;
  double ale = 0.0;  // mean localisation error of the TPs, m
  long long audio_fp = 0;
  long long audio_fn = 0;
  long long audio_tp = 0;
  std::size_t intervals = 0;

  // Rates are taken over FN + TP.
  [[nodiscard]] static double percent(long long part, long long fn, long long tp) noexcept {
    return fn + tp > 0 ? 100.0 * static_cast<double>(part) / static_cast<double>(fn + tp) : 0.0;
  }
  [[nodiscard]] double loc_fn_pct() const noexcept { return percent(loc_fn, loc_fn, loc_tp); }
  [[nodiscard]] double loc_tp_pct() const noexcept { return percent(loc_tp, loc_fn, loc_tp); }
  [[nodiscard]] double audio_fn_pct() const noexcept { return percent(audio_fn, audio_fn, audio_tp); }
  [[nodiscard]] double audio_tp_pct() const noexcept { return percent(audio_tp, audio_fn, audio_tp); }
};

[[nodiscard]] inline SummaryTable aggregate(std::span<const IntervalScore> scores) {
  SummaryTable t;
  double err_sum = 0.0;
  std::size_t err_count = 0;
  for (const auto& s : scores) {
    t.loc_fp += s.loc_fp;
    t.loc_fn += s.loc_fn;
    t.loc_tp += s.loc_tp;
    t.audio_fp += s.audio_fp;
    t.audio_fn += s.audio_fn;
    t.audio_tp += s.audio_tp;
    for (double e : s.loc_errors) err_sum += e;
    err_count += s.loc_errors.size();
  }
  t.intervals = scores.size();
  t.ale = err_count > 0 ? err_sum / static_cast<double>(err_count) : 0.0;
  return t;
}

/// Aligned text rendering with one row per named summary, laid out like the
/// usual FP / FN (%) / TP (%) / ALE tables.
[[nodiscard]] inline std::string format_summary(
    std::span<const std::pair<std::string, SummaryTable>> rows) {
  auto count_pct = [](long long n, double pct) {
    std::ostringstream os;
    os << n << " (" << std::fixed << std::setprecision(1) << pct << "%)";
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(10) << "Seq." << std::right << std::setw(7) << "FP" << std::setw(16) << "FN"
     << std::setw(16) << "TP" << std::setw(9) << "ALE[m]" << " |" << std::setw(7) << "aFP" << std::setw(16)
     << "aFN" << std::setw(16) << "aTP" << '\n';
  for (const auto& [name, t] : rows) {
    os << std::left << std::setw(10) << name << std::right << std::setw(7) << t.loc_fp << std::setw(16)
       << count_pct(t.loc_fn, t.loc_fn_pct()) << std::setw(16) << count_pct(t.loc_tp, t.loc_tp_pct())
       << std::setw(9) << std::fixed << std::setprecision(3) << t.ale << " |" << std::setw(7) << t.audio_fp
       << std::setw(16) << count_pct(t.audio_fn, t.audio_fn_pct()) << std::setw(16)
       << count_pct(t.audio_tp, t.audio_tp_pct()) << '\n';
  }
  return os.str();
}

}  // namespace avfusion
