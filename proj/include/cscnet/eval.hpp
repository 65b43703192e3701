#pragma once

// Generalized evaluation protocol: a calibration bias added to unseen-pair
// scores is swept over a grid, tracing a (seen accuracy, unseen accuracy)
// curve from which Seen, Unseen, best harmonic mean, and AUC are read.
//
// Grid: n_biases uniform points spanning [-delta, +delta] with
// delta = max score - min score, plus two saturating endpoints at
// +-(delta + 1) where every argmax lands on an unseen (resp. seen) pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cscnet {

struct ScoreMatrix {
  std::size_t n_samples = 0;
  std::size_t n_pairs = 0;
  std::vector<double> scores;        // row-major, n_samples x n_pairs
  std::vector<std::size_t> truths;   // pair index per sample
  std::vector<std::uint8_t> unseen;  // per pair

  double at(std::size_t sample, std::size_t pair) const {
    return scores[sample * n_pairs + pair];
  }
};

struct BiasPoint {
  double bias = 0.0;
  double seen_acc = 0.0;
  double unseen_acc = 0.0;
};

struct EvalReport {
  double seen = 0.0;
  double unseen = 0.0;
  double hm = 0.0;
  double auc = 0.0;
  std::vector<BiasPoint> curve;  // ascending bias, saturating endpoints included
};

inline void validate_score_matrix(const ScoreMatrix& sm) {
  if (sm.n_samples == 0 || sm.n_pairs == 0) {
    throw std::runtime_error("score matrix: empty");
  }
  if (sm.scores.size() != sm.n_samples * sm.n_pairs) {
    throw std::runtime_error("score matrix: score buffer does not match dimensions");
  }
  if (sm.truths.size() != sm.n_samples) {
    throw std::runtime_error("score matrix: one truth per sample required");
  }
  if (sm.unseen.size() != sm.n_pairs) {
    throw std::runtime_error("score matrix: unseen mask must align with the pair axis");
  }
  for (double v : sm.scores) {
    if (!std::isfinite(v)) throw std::runtime_error("score matrix: non-finite score");
  }
  bool any_seen = false, any_unseen = false;
  for (std::size_t i = 0; i < sm.n_samples; ++i) {
    if (sm.truths[i] >= sm.n_pairs) throw std::runtime_error("score matrix: truth index out of range");
    (sm.unseen[sm.truths[i]] ? any_unseen : any_seen) = true;
  }
  if (!any_seen) throw std::runtime_error("score matrix: no seen test samples");
  if (!any_unseen) throw std::runtime_error("score matrix: no unseen test samples");
}

// Per-sample argmax with the bias added to every unseen pair; ties resolve to
// the lowest pair index. Accuracies are split by the truth's seen/unseen group.
inline std::pair<double, double> accuracy_at_bias(const ScoreMatrix& sm, double bias) {
  validate_score_matrix(sm);
  std::size_t seen_total = 0, seen_hit = 0, unseen_total = 0, unseen_hit = 0;
  for (std::size_t i = 0; i < sm.n_samples; ++i) {
    std::size_t best = 0;
    double best_v = sm.at(i, 0) + (sm.unseen[0] ? bias : 0.0);
    for (std::size_t k = 1; k < sm.n_pairs; ++k) {
      const double v = sm.at(i, k) + (sm.unseen[k] ? bias : 0.0);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    const bool correct = best == sm.truths[i];
    if (sm.unseen[sm.truths[i]]) {
      ++unseen_total;
      unseen_hit += correct;
    } else {
      ++seen_total;
      seen_hit += correct;
    }
  }
  return {static_cast<double>(seen_hit) / static_cast<double>(seen_total),
          static_cast<double>(unseen_hit) / static_cast<double>(unseen_total)};
}

inline std::vector<double> bias_grid(const ScoreMatrix& sm, std::size_t n_biases) {
  if (n_biases < 2) throw std::runtime_error("evaluate: n_biases must be at least 2");
  const auto [mn_it, mx_it] = std::minmax_element(sm.scores.begin(), sm.scores.end());
  const double delta = *mx_it - *mn_it;
  std::vector<double> grid;
  grid.reserve(n_biases + 2);
  grid.push_back(-(delta + 1.0));
  for (std::size_t i = 0; i < n_biases; ++i) {
    grid.push_back(-delta + (2.0 * delta * static_cast<double>(i)) /
                                (static_cast<double>(n_biases) - 1.0));
  }
  grid.push_back(delta + 1.0);
  return grid;
}

inline EvalReport evaluate(const ScoreMatrix& sm, std::size_t n_biases) {
  validate_score_matrix(sm);
  EvalReport report;
  for (double bias : bias_grid(sm, n_biases)) {
    const auto [seen_acc, unseen_acc] = accuracy_at_bias(sm, bias);
    report.curve.push_back({bias, seen_acc, unseen_acc});
  }

  for (std::size_t i = 1; i < report.curve.size(); ++i) {
    if (report.curve[i].seen_acc > report.curve[i - 1].seen_acc + 1e-15 ||
        report.curve[i].unseen_acc < report.curve[i - 1].unseen_acc - 1e-15) {
      throw std::logic_error("evaluate: bias curve lost monotonicity");
    }
  }

  for (const auto& p : report.curve) {
    report.seen = std::max(report.seen, p.seen_acc);
    report.unseen = std::max(report.unseen, p.unseen_acc);
    if (p.seen_acc + p.unseen_acc > 0.0) {
      report.hm = std::max(report.hm, 2.0 * p.seen_acc * p.unseen_acc / (p.seen_acc + p.unseen_acc));
    }
  }

  // Area under seen(unseen): sort by unseen accuracy, collapse duplicate
  // x-values to their best seen accuracy, integrate with trapezoids.
  std::vector<std::pair<double, double>> pts;
  pts.reserve(report.curve.size());
  for (const auto& p : report.curve) pts.emplace_back(p.unseen_acc, p.seen_acc);
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> collapsed;
  for (const auto& [u, s] : pts) {
    if (!collapsed.empty() && collapsed.back().first == u) {
      collapsed.back().second = std::max(collapsed.back().second, s);
    } else {
      collapsed.emplace_back(u, s);
    }
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < collapsed.size(); ++i) {
    auc += (collapsed[i].first - collapsed[i - 1].first) *
           (collapsed[i].second + collapsed[i - 1].second) / 2.0;
  }
  report.auc = auc;
  return report;
}

inline void write_curve_csv(const EvalReport& report, std::ostream& out) {
  out << "bias,seen_acc,unseen_acc\n";
  out.precision(17);
  for (const auto& p : report.curve) {
    out << p.bias << ',' << p.seen_acc << ',' << p.unseen_acc << "\n";
  }
}

inline std::string format_summary(const EvalReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "seen=%.4f\nunseen=%.4f\nhm=%.4f\nauc=%.4f\n", report.seen,
                report.unseen, report.hm, report.auc);
  return buf;
}

}  // namespace cscnet
