#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alfia/matrix.hpp"

namespace alfia {

// Metrics take parallel score/label arrays; labels are 0/1.
using Labels = std::span<const int>;
using Scores = std::span<const double>;

// Step-wise average precision. Equal scores form one cut.
double auprc(Scores scores, Labels labels);
// Rank-sum AUROC with ties counted one half.
double auroc(Scores scores, Labels labels);

struct ThresholdScore {
  double threshold = 0.0;
  double value = 0.0;
};

// Best F-beta over thresholds drawn from the unique scores, predicting
// positive when score >= threshold. Equal values resolve to the lowest
// threshold.
ThresholdScore best_fbeta(Scores scores, Labels labels, double beta);

// Rejects empty input, mismatched lengths, non-binary labels and a single class.
void check_scored_set(Scores scores, Labels labels);

using Metric = std::function<double(Scores, Labels)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap (2.5, 97.5). Resamples drawing a single class are
// redrawn. Deterministic per seed for any thread count.
Interval bootstrap_ci(const Metric& metric, Scores scores, Labels labels, int n_resamples,
                      std::uint64_t seed);

struct MetricEstimate {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::optional<double> threshold;
};

struct EvalReport {
  MetricEstimate auprc;
  MetricEstimate auroc;
  MetricEstimate f1;
  MetricEstimate f2;
};

EvalReport evaluate(Scores scores, Labels labels, int n_resamples = 1000, std::uint64_t seed = 42);

// "metric,value,lo,hi,threshold" rows; doubles printed with 17 significant digits.
std::string format_eval_report(const EvalReport& report);
void write_eval_report(const std::filesystem::path& path, const EvalReport& report);

struct LatentReport {
  double centroid_distance = 0.0;
  double avg_min_neighbor_distance = 0.0;
  double intra_survived = 0.0;
  double intra_died = 0.0;
  // Empty when both intra-group distances are zero.
  std::optional<double> separation_ratio;
  bool degenerate() const { return !separation_ratio.has_value(); }
};

// Euclidean geometry of n x d embeddings split by label (0 survived, 1 died).
LatentReport latent_metrics(const Matrix& embeddings, Labels labels);

std::string format_latent_report(const LatentReport& report);

struct ProbeOptions {
  double learning_rate = 0.5;
  double tolerance = 1e-6;
  int max_iterations = 5000;
  double l2 = 0.0;
};

struct ProbeResult {
  EvalReport report;
  std::vector<double> weights;  // d weights followed by the bias
  int iterations = 0;
  bool converged = false;
};

// Logistic regression by full-batch gradient descent, stopped when the loss
// changes by less than the tolerance.
ProbeResult linear_probe(const Matrix& train_x, Labels train_y, const Matrix& eval_x,
                         Labels eval_y, const ProbeOptions& options = {},
                         int n_resamples = 1000, std::uint64_t seed = 42);

}  // namespace alfia
