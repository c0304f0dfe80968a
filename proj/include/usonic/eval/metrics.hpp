#pragma once

#include <array>
#include <span>
#include <vector>

#include "usonic/common/types.hpp"
#include "usonic/features/features.hpp"
#include "usonic/nn/layers.hpp"

namespace usonic::eval {

using nn::ClassProbs;

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;    ///< true instances
  int predicted = 0;  ///< predicted instances
  /// 0/0 ratios are reported as 0 and flagged here.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct MetricsReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  /// Unweighted means over the classes that occur in the truth or the predictions.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::array<std::array<int, kNumClasses>, kNumClasses> confusion{};  ///< [truth][pred]
  int total = 0;
};

/// One-vs-rest metrics. Throws std::invalid_argument on a length mismatch or
/// empty input, std::out_of_range on a label outside [0, 5).
MetricsReport metrics(std::span<const int> preds, std::span<const int> truth);

struct IntervalPrediction {
  int interval_index = 0;
  ClassProbs probs{};  ///< mean of the member windows' probabilities
  int label = 0;       ///< argmax of probs
  int num_windows = 0;
};

/// Groups windows by interval and averages their probabilities. Only
/// intervals that receive at least one window are returned (ascending index);
/// intervals without windows carry no evidence and are skipped.
std::vector<IntervalPrediction> aggregate_interval(std::span<const ClassProbs> window_probs,
                                                   std::span<const int> assignment);

/// Interval holding window i: its centre sample (origin + win/2 frames, times
/// hop) integer-divided by the interval length in samples.
int window_interval(int window_index, const features::FeatureParams& params, double interval_s = 0.04);
std::vector<int> interval_assignment(int num_windows, const features::FeatureParams& params,
                                     double interval_s = 0.04);

/// Interval indices in [0, max assigned] that received no window.
std::vector<int> no_evidence_intervals(std::span<const int> assignment);

/// Majority vote over interval labels; ties go to the class with the larger
/// summed interval probability.
int majority_label(std::span<const IntervalPrediction> intervals);

}  // namespace usonic::eval
