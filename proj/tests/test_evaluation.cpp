#include <doctest.h>

#include <cmath>

#include "alfia/error.hpp"
#include "alfia/evaluation.hpp"
#include "alfia/random.hpp"
#include "metric_oracle.hpp"

using namespace alfia;

namespace {

const std::vector<double> kScores{0.9, 0.8, 0.7, 0.6};
const std::vector<int> kLabels{1, 0, 1, 0};

Matrix rotate_translate(const Matrix& x, Rng& rng) {
  // Random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
  const std::size_t d = x.cols();
  Matrix q = random_normal(d, d, 1.0, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += q(i, k) * q(j, k);
      for (std::size_t k = 0; k < d; ++k) q(i, k) -= dot * q(j, k);
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += q(i, k) * q(i, k);
    for (std::size_t k = 0; k < d; ++k) q(i, k) /= std::sqrt(norm);
  }
  const Matrix shift = random_normal(1, d, 5.0, rng);
  Matrix out(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      double v = shift[c];
      for (std::size_t k = 0; k < d; ++k) v += x(r, k) * q(c, k);
      out(r, c) = v;
    }
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("hand-derived examples") {
    CHECK(auprc(kScores, kLabels) == 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
    CHECK(auroc(kScores, kLabels) == 0.75);
    const ThresholdScore f1 = best_fbeta(kScores, kLabels, 1.0);
    CHECK(f1.threshold == 0.7);
    CHECK(f1.value == doctest::Approx(0.8).epsilon(1e-15));
    const ThresholdScore f2 = best_fbeta(kScores, kLabels, 2.0);
    CHECK(f2.threshold == 0.7);
    CHECK(f2.value == doctest::Approx(5.0 * (2.0 / 3.0) / (4.0 * (2.0 / 3.0) + 1.0)).epsilon(1e-15));
    CHECK(f2.value == doctest::Approx(0.9090909090909).epsilon(1e-12));
  }

  TEST_CASE("degenerate rankings") {
    const std::vector<double> perfect{0.9, 0.8, 0.3, 0.1};
    const std::vector<int> y{1, 1, 0, 0};
    CHECK(auprc(perfect, y) == 1.0);
    CHECK(auroc(perfect, y) == 1.0);
    const ThresholdScore f = best_fbeta(perfect, y, 1.0);
    CHECK(f.value == 1.0);
    CHECK(f.threshold == 0.8);
    const std::vector<double> flat(5, 0.4);
    const std::vector<int> yf{1, 0, 0, 1, 0};
    CHECK(auprc(flat, yf) == 0.4);
    CHECK(auroc(flat, yf) == 0.5);
  }

  TEST_CASE("single class is rejected") {
    const std::vector<int> ones{1, 1, 1, 1};
    CHECK_THROWS_WITH_AS(auprc(kScores, ones), "AUPRC undefined: both classes must be present",
                         Error);
    CHECK_THROWS_AS(auroc(kScores, ones), Error);
    CHECK_THROWS_AS(best_fbeta(kScores, ones, 1.0), Error);
  }

  TEST_CASE("exhaustive agreement with brute force for n <= 8") {
    Rng rng = derive_rng(1, {});
    for (std::size_t n = 2; n <= 8; ++n) {
      std::vector<std::vector<double>> patterns(4, std::vector<double>(n));
      for (std::size_t i = 0; i < n; ++i) {
        patterns[0][i] = 1.0 - 0.1 * double(i);
        patterns[1][i] = double((i * 5) % 3) / 4.0;
        patterns[2][i] = 0.5;
        patterns[3][i] = std::round(uniform(rng) * 4) / 4;
      }
      for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1u;
        for (const auto& s : patterns) {
          CHECK(auprc(s, y) == oracle::average_precision(s, y));
          CHECK(auroc(s, y) == oracle::pairwise_auroc(s, y));
          for (double beta : {0.5, 1.0, 2.0}) {
            const auto got = best_fbeta(s, y, beta);
            const auto want = oracle::best_fbeta(s, y, beta);
            CHECK(got.value == want.value);
            CHECK(got.threshold == want.threshold);
          }
        }
      }
    }
  }

  TEST_CASE("monotone transforms") {
    Rng rng = derive_rng(2, {});
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> s(40);
      std::vector<int> y(40);
      for (std::size_t i = 0; i < 40; ++i) {
        s[i] = std::round(normal(rng) * 4) / 4;
        y[i] = uniform(rng) < 0.3 ? 1 : 0;
      }
      y[0] = 1;
      y[1] = 0;
      std::vector<double> t(40);
      for (std::size_t i = 0; i < 40; ++i) t[i] = std::exp(2.0 * s[i]) + 3.0;
      CHECK(auroc(s, y) == auroc(t, y));
      CHECK(auprc(s, y) == auprc(t, y));
      const auto a = best_fbeta(s, y, 1.0), b = best_fbeta(t, y, 1.0);
      CHECK(a.value == b.value);
      CHECK(b.threshold == std::exp(2.0 * a.threshold) + 3.0);
    }
  }

  TEST_CASE("bootstrap intervals") {
    Rng rng = derive_rng(3, {});
    std::vector<double> s(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = uniform(rng) < 0.2 ? 1 : 0;
      s[i] = normal(rng) + 1.2 * y[i];
    }
    const Interval a = bootstrap_ci(auprc, s, y, 500, 42);
    const Interval b = bootstrap_ci(auprc, s, y, 500, 42);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    CHECK(a.lo <= auprc(s, y));
    CHECK(auprc(s, y) <= a.hi);
    CHECK(a.lo < a.hi);
    const Interval c = bootstrap_ci(auprc, s, y, 500, 43);
    CHECK((c.lo != a.lo || c.hi != a.hi));
    CHECK_THROWS_AS(bootstrap_ci(auprc, s, y, 99, 42), Error);

    std::vector<double> sep(300);
    std::vector<int> ys(300);
    for (std::size_t i = 0; i < 300; ++i) {
      ys[i] = i % 3 == 0;
      sep[i] = ys[i] ? 2.0 + uniform(rng) : uniform(rng);
    }
    const Interval p = bootstrap_ci(auroc, sep, ys, 200, 1);
    CHECK(p.lo == 1.0);
    CHECK(p.hi == 1.0);
  }

  TEST_CASE("evaluate report") {
    const EvalReport r = evaluate(kScores, kLabels, 200, 42);
    CHECK(r.auprc.value == auprc(kScores, kLabels));
    CHECK(r.f1.threshold == 0.7);
    CHECK_FALSE(r.auroc.threshold.has_value());
    for (const auto* m : {&r.auprc, &r.auroc, &r.f1, &r.f2}) {
      CHECK(m->lo <= m->value);
      CHECK(m->value <= m->hi);
    }
    const std::string text = format_eval_report(r);
    CHECK(text.rfind("metric,value,lo,hi,threshold\n", 0) == 0);
    CHECK(text.find("\nauroc,0.75,") != std::string::npos);
    CHECK(text == format_eval_report(evaluate(kScores, kLabels, 200, 42)));
  }

  TEST_CASE("latent metrics: limits and rejections") {
    Matrix two(6, 2, 0.0);
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    for (std::size_t i = 3; i < 6; ++i) {
      two(i, 0) = 3.0;
      two(i, 1) = 4.0;
    }
    two(0, 0) = 1e-9;
    two(3, 1) = 4.0 + 1e-9;
    const LatentReport r = latent_metrics(two, y);
    CHECK(r.centroid_distance == doctest::Approx(5.0).epsilon(1e-9));
    REQUIRE(r.separation_ratio.has_value());

    const LatentReport same = latent_metrics(Matrix(6, 3, 0.7), y);
    CHECK(same.centroid_distance == 0.0);
    CHECK(same.avg_min_neighbor_distance == 0.0);
    CHECK(same.intra_died == 0.0);
    CHECK(same.intra_survived == 0.0);
    CHECK(same.degenerate());
    CHECK(format_latent_report(same).find("separation_ratio,degenerate") != std::string::npos);

    CHECK_THROWS_WITH_AS(latent_metrics(Matrix(5, 2, 0.0), std::vector<int>{0, 0, 0, 0, 1}),
                         doctest::Contains("at least 2 samples"), Error);
  }

  TEST_CASE("latent metrics equal the double-loop oracle") {
    Rng rng = derive_rng(4, {});
    for (std::size_t n : {10, 50}) {
      const Matrix x = random_normal(n, 7, 1.0, rng);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = i % 4 == 0;
      const LatentReport r = latent_metrics(x, y);
      const oracle::Latent o = oracle::latent(x, y);
      CHECK(r.centroid_distance == o.centroid);
      CHECK(r.avg_min_neighbor_distance == o.nearest);
      CHECK(r.intra_died == o.intra_pos);
      CHECK(r.intra_survived == o.intra_neg);
      CHECK(*r.separation_ratio == *o.ratio);

      const LatentReport moved = latent_metrics(rotate_translate(x, rng), y);
      CHECK(std::abs(moved.centroid_distance - r.centroid_distance) < 1e-9);
      CHECK(std::abs(moved.avg_min_neighbor_distance - r.avg_min_neighbor_distance) < 1e-9);
      CHECK(std::abs(moved.intra_died - r.intra_died) < 1e-9);
      CHECK(std::abs(moved.intra_survived - r.intra_survived) < 1e-9);
      CHECK(std::abs(*moved.separation_ratio - *r.separation_ratio) < 1e-9);
    }
  }

  TEST_CASE("linear probe") {
    Rng rng = derive_rng(5, {});
    const std::size_t n = 400;
    Matrix x(n, 3);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i % 5 == 0;
      x(i, 0) = (y[i] ? 1.5 : -1.5) + 0.3 * normal(rng);
      x(i, 1) = normal(rng);
      x(i, 2) = normal(rng);
    }
    const ProbeResult sep = linear_probe(x, y, x, y, {}, 200, 1);
    CHECK(sep.report.auprc.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sep.report.auroc.value == 1.0);
    CHECK(sep.weights.size() == 4);

    const std::size_t m = 4000;
    Matrix noise = random_normal(m, 4, 1.0, rng);
    std::vector<int> yn(m);
    int pos = 0;
    for (std::size_t i = 0; i < m; ++i) pos += yn[i] = uniform(rng) < 0.1;
    Matrix eval = random_normal(m, 4, 1.0, rng);
    const ProbeResult rnd = linear_probe(noise, yn, eval, yn, {}, 100, 1);
    CHECK(std::abs(rnd.report.auprc.value - pos / double(m)) < 0.05);
    CHECK(rnd.converged);
  }
}
