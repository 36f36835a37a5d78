#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mlfst/error.hpp"
#include "mlfst/geodesy.hpp"
#include "mlfst/labeler.hpp"
#include "mlfst/tensor.hpp"

namespace mlfst {

// 3-D position error in meters. Geodetic points are (lon deg, lat deg, alt m):
// ground distance via the Haversine formula, composed with the altitude delta.
inline double euclidean_3d_error(const std::array<double, 3>& pred,
                                 const std::array<double, 3>& truth, CoordMode coord) {
  const double dz = pred[2] - truth[2];
  if (coord == CoordMode::geodetic) {
    const double ground = haversine_m(pred[1], pred[0], truth[1], truth[0]);
    return std::sqrt(ground * ground + dz * dz);
  }
  const double dx = pred[0] - truth[0];
  const double dy = pred[1] - truth[1];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct TrajErrorTable {
  std::vector<double> per_step_mean;  // mean error at each horizon step, meters
  // (seconds ahead, mean error) for each whole second within the horizon
  std::vector<std::pair<int, double>> per_second_mean;
  std::size_t window_count = 0;
};

// Mean prediction error per horizon step, pooled over windows; the per-second
// rows read the step s*rate - 1 (the last step inside second s).
inline TrajErrorTable trajectory_errors(const Tensor3<double>& preds,
                                        const Tensor3<double>& trues, CoordMode coord,
                                        double sample_rate_hz) {
  require(preds.same_shape(trues) && preds.d2 == 3, Errc::shape_mismatch,
          "prediction and truth tensors must both be [N, HS, 3]");
  require(preds.d0 > 0, Errc::empty_input, "no windows to evaluate");

  TrajErrorTable out;
  out.window_count = preds.d0;
  out.per_step_mean.assign(preds.d1, 0.0);
  for (std::size_t w = 0; w < preds.d0; ++w)
    for (std::size_t t = 0; t < preds.d1; ++t) {
      const std::array<double, 3> p = {preds.at(w, t, 0), preds.at(w, t, 1), preds.at(w, t, 2)};
      const std::array<double, 3> q = {trues.at(w, t, 0), trues.at(w, t, 1), trues.at(w, t, 2)};
      out.per_step_mean[t] += euclidean_3d_error(p, q, coord);
    }
  for (double& v : out.per_step_mean) v /= static_cast<double>(preds.d0);

  const int whole_seconds = static_cast<int>(static_cast<double>(preds.d1) / sample_rate_hz);
  for (int s = 1; s <= whole_seconds; ++s) {
    const auto step = static_cast<std::size_t>(std::llround(s * sample_rate_hz)) - 1;
    if (step < out.per_step_mean.size())
      out.per_second_mean.emplace_back(s, out.per_step_mean[step]);
  }
  return out;
}

// Per-step error samples (one value per window) at a fixed horizon step, the
// raw material for CDFs.
inline std::vector<double> step_errors(const Tensor3<double>& preds, const Tensor3<double>& trues,
                                       std::size_t step, CoordMode coord) {
  require(preds.same_shape(trues) && preds.d2 == 3, Errc::shape_mismatch,
          "prediction and truth tensors must both be [N, HS, 3]");
  require(step < preds.d1, Errc::shape_mismatch, "horizon step out of range");
  std::vector<double> errs(preds.d0);
  for (std::size_t w = 0; w < preds.d0; ++w) {
    const std::array<double, 3> p = {preds.at(w, step, 0), preds.at(w, step, 1),
                                     preds.at(w, step, 2)};
    const std::array<double, 3> q = {trues.at(w, step, 0), trues.at(w, step, 1),
                                     trues.at(w, step, 2)};
    errs[w] = euclidean_3d_error(p, q, coord);
  }
  return errs;
}

// Empirical CDF: sorted (error, fraction of samples <= error) pairs.
inline std::vector<std::pair<double, double>> error_cdf(std::vector<double> errors) {
  require(!errors.empty(), Errc::empty_input, "cannot build a CDF from zero errors");
  std::sort(errors.begin(), errors.end());
  std::vector<std::pair<double, double>> cdf(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i)
    cdf[i] = {errors[i], static_cast<double>(i + 1) / static_cast<double>(errors.size())};
  return cdf;
}

// Linear-interpolation percentile over the sorted support: rank = q*(n-1).
inline double percentile(const std::vector<std::pair<double, double>>& cdf, double q) {
  require(!cdf.empty(), Errc::empty_input, "empty CDF");
  require(q >= 0.0 && q <= 1.0, Errc::config_invalid, "quantile must be in [0,1]");
  const double rank = q * static_cast<double>(cdf.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, cdf.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return cdf[lo].first * (1.0 - frac) + cdf[hi].first * frac;
}

struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumStates>, kNumStates> counts{};  // [true][pred]
  std::int64_t total = 0;
};

struct ClassMetrics {
  std::int64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool present = false;  // class appears in the ground truth
};

struct AverageMetrics {
  double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  std::vector<int> absent_classes;  // excluded from the macro averages
};

struct ClassificationReport {
  ConfusionMatrix confusion;
  std::array<ClassMetrics, kNumStates> per_class;
  AverageMetrics averages;
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace detail

// Confusion matrix plus precision/recall/F1 with micro and macro averaging.
// The 5x5 matrix reduces each window to one label: argmax of the predicted
// probabilities vs the window's dominant true class (the set bit when
// single-hot; callers with multi-hot truths pass the majority label in
// `dominant_true`, otherwise the lowest set bit stands in). TP/FP/FN for
// Precision = TP/(TP+FP), Recall = TP/(TP+FN) and their F1 come from the
// multi-label view, thresholding each probability at 0.5. Classes absent from
// the truth are excluded from the macro averages and listed in the report.
inline ClassificationReport confusion_and_metrics(
    const std::vector<std::array<double, kNumStates>>& probs,
    const std::vector<std::array<std::uint8_t, kNumStates>>& truth,
    const std::vector<int>& dominant_true = {}) {
  require(!probs.empty(), Errc::empty_input, "no windows to score");
  require(probs.size() == truth.size(), Errc::shape_mismatch,
          "probability and truth counts differ");
  require(dominant_true.empty() || dominant_true.size() == probs.size(), Errc::shape_mismatch,
          "dominant label count differs from window count");

  ClassificationReport rep;
  for (std::size_t w = 0; w < probs.size(); ++w) {
    const int pred = static_cast<int>(std::max_element(probs[w].begin(), probs[w].end()) -
                                      probs[w].begin());
    int tru;
    if (!dominant_true.empty()) {
      tru = dominant_true[w];
    } else {
      tru = static_cast<int>(std::find(truth[w].begin(), truth[w].end(), 1) - truth[w].begin());
      require(tru < kNumStates, Errc::degenerate_input,
              "window " + std::to_string(w) + " has an all-zero truth vector");
    }
    rep.confusion.counts[static_cast<std::size_t>(tru)][static_cast<std::size_t>(pred)] += 1;
    rep.confusion.total += 1;

    for (int c = 0; c < kNumStates; ++c) {
      const bool predicted = probs[w][static_cast<std::size_t>(c)] >= 0.5;
      const bool actual = truth[w][static_cast<std::size_t>(c)] != 0;
      if (predicted && actual) rep.per_class[static_cast<std::size_t>(c)].tp += 1;
      if (predicted && !actual) rep.per_class[static_cast<std::size_t>(c)].fp += 1;
      if (!predicted && actual) rep.per_class[static_cast<std::size_t>(c)].fn += 1;
    }
  }

  std::int64_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
  int present = 0;
  for (int c = 0; c < kNumStates; ++c) {
    ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
    m.present = m.tp + m.fn > 0;
    m.precision = detail::safe_div(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fp));
    m.recall = detail::safe_div(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fn));
    m.f1 = detail::f1_of(m.precision, m.recall);
    tp_sum += m.tp;
    fp_sum += m.fp;
    fn_sum += m.fn;
    if (m.present) {
      rep.averages.macro_precision += m.precision;
      rep.averages.macro_recall += m.recall;
      rep.averages.macro_f1 += m.f1;
      ++present;
    } else {
      rep.averages.absent_classes.push_back(c);
    }
  }
  rep.averages.micro_precision =
      detail::safe_div(static_cast<double>(tp_sum), static_cast<double>(tp_sum + fp_sum));
  rep.averages.micro_recall =
      detail::safe_div(static_cast<double>(tp_sum), static_cast<double>(tp_sum + fn_sum));
  rep.averages.micro_f1 = detail::f1_of(rep.averages.micro_precision, rep.averages.micro_recall);
  if (present > 0) {
    rep.averages.macro_precision /= present;
    rep.averages.macro_recall /= present;
    rep.averages.macro_f1 /= present;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Plot-ready report files
// ---------------------------------------------------------------------------

namespace detail {

inline void csv_num(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  os << buf;
}

}  // namespace detail

inline void write_cdf_csv(std::ostream& os, const std::vector<std::pair<double, double>>& cdf) {
  os << "error_m,fraction\n";
  for (const auto& [e, f] : cdf) {
    detail::csv_num(os, e);
    os << ',';
    detail::csv_num(os, f);
    os << '\n';
  }
}

inline void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm) {
  os << "true\\pred";
  for (int c = 0; c < kNumStates; ++c) os << ',' << state_name(c);
  os << '\n';
  for (int r = 0; r < kNumStates; ++r) {
    os << state_name(r);
    for (int c = 0; c < kNumStates; ++c)
      os << ',' << cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    os << '\n';
  }
}

inline void write_metrics_csv(std::ostream& os, const ClassificationReport& rep) {
  os << "class,precision,recall,f1,tp,fp,fn,present\n";
  for (int c = 0; c < kNumStates; ++c) {
    const ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
    os << state_name(c) << ',';
    detail::csv_num(os, m.precision);
    os << ',';
    detail::csv_num(os, m.recall);
    os << ',';
    detail::csv_num(os, m.f1);
    os << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << (m.present ? 1 : 0) << '\n';
  }
  os << "micro,";
  detail::csv_num(os, rep.averages.micro_precision);
  os << ',';
  detail::csv_num(os, rep.averages.micro_recall);
  os << ',';
  detail::csv_num(os, rep.averages.micro_f1);
  os << ",,,,\n";
  os << "macro,";
  detail::csv_num(os, rep.averages.macro_precision);
  os << ',';
  detail::csv_num(os, rep.averages.macro_recall);
  os << ',';
  detail::csv_num(os, rep.averages.macro_f1);
  os << ",,,,\n";
}

inline void write_traj_errors_csv(std::ostream& os, const TrajErrorTable& t) {
  os << "horizon_step,mean_error_m\n";
  for (std::size_t i = 0; i < t.per_step_mean.size(); ++i) {
    os << (i + 1) << ',';
    detail::csv_num(os, t.per_step_mean[i]);
    os << '\n';
  }
}

}  // namespace mlfst
