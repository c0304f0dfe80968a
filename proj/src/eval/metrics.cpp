#include "usonic/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace usonic::eval {

MetricsReport metrics(std::span<const int> preds, std::span<const int> truth) {
  if (preds.size() != truth.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " labels");
  }
  if (preds.empty()) throw std::invalid_argument("metrics: empty input");
  MetricsReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= kNumClasses || truth[i] < 0 || truth[i] >= kNumClasses) {
      throw std::out_of_range("metrics: label out of range");
    }
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(preds[i])];
  }
  r.total = static_cast<int>(preds.size());
  int trace = 0;
  int present = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    ClassMetrics& m = r.per_class[cc];
    const int tp = r.confusion[cc][cc];
    trace += tp;
    for (int o = 0; o < kNumClasses; ++o) {
      m.support += r.confusion[cc][static_cast<std::size_t>(o)];
      m.predicted += r.confusion[static_cast<std::size_t>(o)][cc];
    }
    if (m.predicted > 0) {
      m.precision = static_cast<double>(tp) / m.predicted;
    } else {
      m.precision_undefined = true;
    }
    if (m.support > 0) {
      m.recall = static_cast<double>(tp) / m.support;
    } else {
      m.recall_undefined = true;
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      m.f1_undefined = true;
    }
    if (m.support > 0 || m.predicted > 0) {
      ++present;
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
    }
  }
  r.macro_precision /= present;
  r.macro_recall /= present;
  r.macro_f1 /= present;
  r.accuracy = static_cast<double>(trace) / r.total;
  return r;
}

std::vector<IntervalPrediction> aggregate_interval(std::span<const ClassProbs> window_probs,
                                                   std::span<const int> assignment) {
  if (window_probs.size() != assignment.size()) throw std::invalid_argument("every window needs exactly one interval");
  std::map<int, IntervalPrediction> acc;
  for (std::size_t i = 0; i < window_probs.size(); ++i) {
    if (assignment[i] < 0) throw std::invalid_argument("negative interval index");
    IntervalPrediction& ip = acc[assignment[i]];
    ip.interval_index = assignment[i];
    for (std::size_t j = 0; j < ip.probs.size(); ++j) ip.probs[j] += window_probs[i][j];
    ++ip.num_windows;
  }
  std::vector<IntervalPrediction> out;
  out.reserve(acc.size());
  for (auto& [idx, ip] : acc) {
    for (double& p : ip.probs) p /= ip.num_windows;
    ip.label = static_cast<int>(std::max_element(ip.probs.begin(), ip.probs.end()) - ip.probs.begin());
    out.push_back(ip);
  }
  return out;
}

int window_interval(int window_index, const features::FeatureParams& params, double interval_s) {
  if (window_index < 0) throw std::out_of_range("negative window index");
  const auto interval_samples = static_cast<long long>(std::llround(interval_s * params.stft.sample_rate_hz));
  if (interval_samples <= 0) throw std::invalid_argument("interval shorter than one sample");
  const long long center_frame = static_cast<long long>(window_index) * params.hop_frames + params.win_frames / 2;
  return static_cast<int>(center_frame * params.stft.hop / interval_samples);
}

std::vector<int> interval_assignment(int num_windows, const features::FeatureParams& params, double interval_s) {
  std::vector<int> a(static_cast<std::size_t>(num_windows));
  for (int i = 0; i < num_windows; ++i) a[static_cast<std::size_t>(i)] = window_interval(i, params, interval_s);
  return a;
}

std::vector<int> no_evidence_intervals(std::span<const int> assignment) {
  if (assignment.empty()) return {};
  const int mx = *std::max_element(assignment.begin(), assignment.end());
  std::vector<bool> seen(static_cast<std::size_t>(mx) + 1, false);
  for (int a : assignment) seen[static_cast<std::size_t>(a)] = true;
  std::vector<int> out;
  for (int i = 0; i <= mx; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

int majority_label(std::span<const IntervalPrediction> intervals) {
  if (intervals.empty()) throw std::invalid_argument("majority vote over no intervals");
  std::array<int, kNumClasses> votes{};
  std::array<double, kNumClasses> mass{};
  for (const auto& ip : intervals) {
    ++votes[static_cast<std::size_t>(ip.label)];
    for (std::size_t j = 0; j < mass.size(); ++j) mass[j] += ip.probs[j];
  }
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    const auto bb = static_cast<std::size_t>(best);
    if (votes[cc] > votes[bb] || (votes[cc] == votes[bb] && mass[cc] > mass[bb])) best = c;
  }
  return best;
}

}  // namespace usonic::eval
