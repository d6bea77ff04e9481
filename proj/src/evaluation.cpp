#include "alfia/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "alfia/error.hpp"
#include "alfia/kernels.hpp"
#include "alfia/ops.hpp"
#include "alfia/random.hpp"

namespace alfia {

void check_scored_set(Scores scores, Labels labels) {
  require(!scores.empty(), "empty scored set");
  require(scores.size() == labels.size(), "scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "labels must be 0 or 1");
    require(std::isfinite(scores[i]), "scores must be finite");
    pos += static_cast<std::size_t>(labels[i]);
  }
  require(pos > 0 && pos < labels.size(), "AUPRC undefined: both classes must be present");
}

namespace {

std::vector<std::size_t> descending_order(Scores scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

double count_positives(Labels labels) {
  return static_cast<double>(std::count(labels.begin(), labels.end(), 1));
}

}  // namespace

double auprc(Scores scores, Labels labels) {
  check_scored_set(scores, labels);
  const double n_pos = count_positives(labels);
  const auto idx = descending_order(scores);
  double tp = 0.0;
  double k = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    double dtp = 0.0;
    std::size_t j = i;
    for (; j < idx.size() && scores[idx[j]] == scores[idx[i]]; ++j) {
      dtp += labels[idx[j]];
      k += 1.0;
    }
    tp += dtp;
    if (dtp > 0.0) ap += (dtp / n_pos) * (tp / k);
    i = j;
  }
  return ap;
}

double auroc(Scores scores, Labels labels) {
  check_scored_set(scores, labels);
  const double n_pos = count_positives(labels);
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    // Ranks i+1 .. j share their mean.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) rank_sum += midrank;
    i = j;
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

ThresholdScore best_fbeta(Scores scores, Labels labels, double beta) {
  check_scored_set(scores, labels);
  require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  const double b2 = beta * beta;
  const double n_pos = count_positives(labels);
  const auto idx = descending_order(scores);
  ThresholdScore best{scores[idx.front()], -1.0};
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    for (; j < idx.size() && scores[idx[j]] == scores[idx[i]]; ++j)
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
    const double fn = n_pos - tp;
    const double f = (1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn + fp);
    // Sweeping downward, >= hands ties to the lower threshold.
    if (f >= best.value) best = {scores[idx[i]], f};
    i = j;
  }
  return best;
}

namespace {

double quantile7(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_ci(const Metric& metric, Scores scores, Labels labels, int n_resamples,
                      std::uint64_t seed) {
  check_scored_set(scores, labels);
  require(n_resamples >= 100, "bootstrap needs at least 100 resamples");
  const std::size_t n = scores.size();
  const auto reps = static_cast<std::size_t>(n_resamples);

  // Index draws are serial so the resamples do not depend on thread count.
  Rng rng = derive_rng(seed, {0x626f6f74});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::vector<std::size_t>> draws(reps);
  for (auto& d : draws) {
    for (;;) {
      d.resize(n);
      std::size_t pos = 0;
      for (auto& i : d) {
        i = pick(rng);
        pos += static_cast<std::size_t>(labels[i]);
      }
      if (pos > 0 && pos < n) break;
    }
  }

  std::vector<double> values(reps);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(reps); ++r) {
    std::vector<double> s(n);
    std::vector<int> y(n);
    const auto& d = draws[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores[d[i]];
      y[i] = labels[d[i]];
    }
    values[static_cast<std::size_t>(r)] = metric(s, y);
  }
  std::sort(values.begin(), values.end());
  return {quantile7(values, 0.025), quantile7(values, 0.975)};
}

namespace {

MetricEstimate estimate(const Metric& metric, double point, Scores scores, Labels labels,
                        int n_resamples, std::uint64_t seed) {
  const Interval ci = bootstrap_ci(metric, scores, labels, n_resamples, seed);
  // The percentile interval can miss a point estimate sitting at the edge of
  // a skewed resampling distribution; report the hull.
  return {point, std::min(ci.lo, point), std::max(ci.hi, point), std::nullopt};
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

EvalReport evaluate(Scores scores, Labels labels, int n_resamples, std::uint64_t seed) {
  check_scored_set(scores, labels);
  EvalReport r;
  r.auprc = estimate([](Scores s, Labels y) { return auprc(s, y); }, auprc(scores, labels), scores,
                     labels, n_resamples, seed);
  r.auroc = estimate([](Scores s, Labels y) { return auroc(s, y); }, auroc(scores, labels), scores,
                     labels, n_resamples, seed);
  for (double beta : {1.0, 2.0}) {
    const ThresholdScore best = best_fbeta(scores, labels, beta);
    MetricEstimate e = estimate([beta](Scores s, Labels y) { return best_fbeta(s, y, beta).value; },
                                best.value, scores, labels, n_resamples, seed);
    e.threshold = best.threshold;
    (beta == 1.0 ? r.f1 : r.f2) = e;
  }
  return r;
}

std::string format_eval_report(const EvalReport& report) {
  std::string out = "metric,value,lo,hi,threshold\n";
  const auto row = [&](const char* name, const MetricEstimate& m) {
    out += std::string(name) + "," + fmt17(m.value) + "," + fmt17(m.lo) + "," + fmt17(m.hi) + "," +
           (m.threshold ? fmt17(*m.threshold) : "") + "\n";
  };
  row("auprc", report.auprc);
  row("auroc", report.auroc);
  row("f1", report.f1);
  row("f2", report.f2);
  return out;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  out << format_eval_report(report);
}

LatentReport latent_metrics(const Matrix& embeddings, Labels labels) {
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  require(n == labels.size(), "embeddings and labels differ in length");
  require(n >= 4, "latent metrics need at least 4 samples");
  std::size_t n_pos = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, "labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  require(n_pos >= 2 && n - n_pos >= 2,
          "intra-group distance undefined: each class needs at least 2 samples");

  const Matrix dist = kernels::pairwise_distances(embeddings);

  LatentReport r;
  std::vector<double> c_pos(d, 0.0);
  std::vector<double> c_neg(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = labels[i] == 1 ? c_pos : c_neg;
    for (std::size_t k = 0; k < d; ++k) c[k] += embeddings(i, k);
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n - n_pos);
  double sq = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = c_pos[k] / np - c_neg[k] / nn;
    sq += diff * diff;
  }
  r.centroid_distance = std::sqrt(sq);

  double sum_pos = 0.0;
  double sum_neg = 0.0;
  double sum_nearest = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double nearest = INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      nearest = std::min(nearest, dist(i, j));
      if (j > i && labels[i] == labels[j]) (labels[i] == 1 ? sum_pos : sum_neg) += dist(i, j);
    }
    sum_nearest += nearest;
  }
  r.avg_min_neighbor_distance = sum_nearest / static_cast<double>(n);
  r.intra_died = sum_pos / (np * (np - 1.0) / 2.0);
  r.intra_survived = sum_neg / (nn * (nn - 1.0) / 2.0);
  const double intra = 0.5 * (r.intra_died + r.intra_survived);
  if (intra > 0.0) r.separation_ratio = r.centroid_distance / intra;
  return r;
}

std::string format_latent_report(const LatentReport& r) {
  std::string out = "metric,value\n";
  out += "centroid_distance," + fmt17(r.centroid_distance) + "\n";
  out += "avg_min_neighbor_distance," + fmt17(r.avg_min_neighbor_distance) + "\n";
  out += "intra_group_distance_survived," + fmt17(r.intra_survived) + "\n";
  out += "intra_group_distance_died," + fmt17(r.intra_died) + "\n";
  out += "separation_ratio," + (r.separation_ratio ? fmt17(*r.separation_ratio) : "degenerate") + "\n";
  return out;
}

namespace {

std::vector<double> probe_scores(const Matrix& x, const std::vector<double>& w) {
  const std::size_t d = x.cols();
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double z = w[d];
    for (std::size_t k = 0; k < d; ++k) z += x(i, k) * w[k];
    out[i] = ops::sigmoid(z);
  }
  return out;
}

double probe_loss(const std::vector<double>& p, Labels y, const std::vector<double>& w, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], 1e-15, 1.0 - 1e-15);
    loss -= y[i] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  double reg = 0.0;
  for (std::size_t k = 0; k + 1 < w.size(); ++k) reg += w[k] * w[k];
  return loss / static_cast<double>(p.size()) + 0.5 * l2 * reg;
}

}  // namespace

ProbeResult linear_probe(const Matrix& train_x, Labels train_y, const Matrix& eval_x,
                         Labels eval_y, const ProbeOptions& options, int n_resamples,
                         std::uint64_t seed) {
  require(train_x.rows() == train_y.size() && train_x.rows() > 0,
          "probe training embeddings and labels differ in length");
  require(eval_x.cols() == train_x.cols(), "probe embedding dimensions differ between sets");
  require(options.learning_rate > 0.0 && options.max_iterations > 0, "invalid probe options");
  const std::size_t n = train_x.rows();
  const std::size_t d = train_x.cols();
  ProbeResult result;
  auto& w = result.weights;
  w.assign(d + 1, 0.0);
  auto p = probe_scores(train_x, w);
  double loss = probe_loss(p, train_y, w, options.l2);
  for (int it = 1; it <= options.max_iterations; ++it) {
    std::vector<double> g(d + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = p[i] - train_y[i];
      for (std::size_t k = 0; k < d; ++k) g[k] += r * train_x(i, k);
      g[d] += r;
    }
    for (std::size_t k = 0; k <= d; ++k) {
      g[k] /= static_cast<double>(n);
      if (k < d) g[k] += options.l2 * w[k];
      w[k] -= options.learning_rate * g[k];
    }
    p = probe_scores(train_x, w);
    const double next = probe_loss(p, train_y, w, options.l2);
    result.iterations = it;
    const double delta = std::abs(loss - next);
    loss = next;
    if (delta < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  const auto eval_scores = probe_scores(eval_x, w);
  result.report = evaluate(eval_scores, eval_y, n_resamples, seed);
  return result;
}

}  // namespace alfia
