#include <doctest.h>

#include "alf_oracle.hpp"
#include "alfia/error.hpp"
#include "alfia/gradcheck.hpp"
#include "alfia/model_check.hpp"
#include "fixtures.hpp"

using namespace alfia;

namespace {

std::vector<Var> constants(Tape& tape, const std::vector<Matrix>& layers) {
  std::vector<Var> out;
  for (const auto& m : layers) out.push_back(tape.constant(m));
  return out;
}

oracle::Vec values(Var v) { return oracle::row_of(v.value(), 0); }

FusionConfig fusion_config(int n_fuse, bool gating = true, int heads = 2) {
  FusionConfig c;
  c.n_fuse = n_fuse;
  c.n_heads = heads;
  c.gating_enabled = gating;
  return c;
}

void zero(Linear& l) {
  l.weight.value.fill(0.0);
  l.bias.value.fill(0.0);
}

}  // namespace

TEST_SUITE("alf") {
  TEST_CASE("summarize_layers examples") {
    Tape tape;
    const Matrix single = Matrix::from_rows({{0.5, -2.0, 7.0}});
    LayerSummaries s = summarize_layers(tape, {tape.constant(single)}, {1.0});
    CHECK(s.stack.value() == single);
    CHECK(s.query.value() == single);

    const Matrix constant(4, 3, 1.75);
    LayerSummaries c = summarize_layers(tape, {tape.constant(constant)}, {1, 0, 1, 0});
    CHECK(c.stack.value() == Matrix(1, 3, 1.75));

    const Matrix h = Matrix::from_rows({{1, 0}, {3, 0}, {99, 99}});
    LayerSummaries m = summarize_layers(tape, {tape.constant(h), tape.constant(h)}, {1, 1, 0});
    CHECK(m.stack.value() == Matrix::from_rows({{2, 0}, {2, 0}}));
    CHECK(m.query.value() == Matrix::from_rows({{2, 0}}));

    CHECK_THROWS_WITH_AS(summarize_layers(tape, {tape.constant(h)}, {0, 0, 0}),
                         "empty attention support", Error);
  }

  TEST_CASE("identical summaries give uniform head scores") {
    Rng rng = derive_rng(1, {});
    AdaptiveLayerFusion alf(8, fusion_config(3), rng);
    const Matrix h = random_normal(5, 8, 1.0, rng);
    Tape tape;
    LayerWeights w = compute_layer_weights(
        tape, summarize_layers(tape, constants(tape, {h, h, h}), std::vector<double>(5, 1.0)), alf);
    for (double v : w.raw_attention.value().data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }

  TEST_CASE("layer weight normalization") {
    Rng rng = derive_rng(2, {});
    AdaptiveLayerFusion gated(8, fusion_config(4, true), rng);
    AdaptiveLayerFusion plain(8, fusion_config(4, false), rng);
    for (int trial = 0; trial < 20; ++trial) {
      const auto layers = fixtures::random_layers(4, 6, 8, rng);
      const std::vector<double> mask{1, 1, 1, 0, 1, 0};
      Tape tape;
      const LayerSummaries s = summarize_layers(tape, constants(tape, layers), mask);
      LayerWeights g = compute_layer_weights(tape, s, gated);
      for (double v : g.lambda.value().data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
      const Matrix& raw = g.raw_attention.value();
      for (std::size_t h = 0; h < raw.rows(); ++h) {
        double total = 0.0;
        for (double v : raw.row(h)) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
      }
      LayerWeights p = compute_layer_weights(tape, s, plain);
      double total = 0.0;
      for (double v : p.lambda.value().data()) total += v;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("N_f = 2 layer weights match the straight-line oracle") {
    for (bool gating : {true, false}) {
      Rng rng = derive_rng(3, {gating ? 1u : 0u});
      AdaptiveLayerFusion alf(6, fusion_config(2, gating), rng);
      const auto layers = fixtures::random_layers(2, 4, 6, rng);
      const std::vector<double> mask{1, 0, 1, 1};
      Tape tape;
      LayerWeights w = compute_layer_weights(
          tape, summarize_layers(tape, constants(tape, layers), mask), alf);
      const auto ref = oracle::alf_forward(layers, mask, alf);
      CHECK(oracle::max_abs_diff(values(w.lambda), ref.lambda) < 1e-14);
      for (std::size_t h = 0; h < ref.raw.size(); ++h)
        CHECK(oracle::max_abs_diff(oracle::row_of(w.raw_attention.value(), h), ref.raw[h]) < 1e-14);
    }
  }

  TEST_CASE("fuse_layers examples") {
    Tape tape;
    const Matrix a(3, 1, 4.0), b(3, 1, 2.0);
    Var fused = fuse_layers({tape.constant(a), tape.constant(b)},
                            tape.constant(Matrix::from_rows({{0.25, 0.5}})));
    CHECK(fused.value() == Matrix(3, 1, 2.0));

    Rng rng = derive_rng(4, {});
    const auto layers = fixtures::random_layers(3, 4, 5, rng);
    Var one = fuse_layers({tape.constant(layers[0])}, tape.constant(Matrix(1, 1, 1.0)));
    CHECK(one.value() == layers[0]);
    for (std::size_t j = 0; j < 3; ++j) {
      Matrix hot(1, 3, 0.0);
      hot[j] = 1.0;
      CHECK(fuse_layers(constants(tape, layers), tape.constant(hot)).value() == layers[j]);
    }
  }

  TEST_CASE("enhance with zeroed maps is the layer norm of its input") {
    Rng rng = derive_rng(5, {});
    AdaptiveLayerFusion alf(6, fusion_config(1), rng);
    zero(alf.interaction);
    zero(alf.projection);
    const Matrix x = random_normal(4, 6, 2.0, rng);
    Tape tape;
    const Matrix out = enhance(tape, tape.constant(x), alf, nullptr).value();
    for (std::size_t t = 0; t < 4; ++t) {
      const auto row = oracle::row_of(out, t);
      CHECK(oracle::max_abs_diff(row, oracle::layer_norm(oracle::row_of(x, t), alf.enhance_norm)) <
            1e-14);
      double mean = 0.0, var = 0.0;
      for (double v : row) mean += v / 6;
      for (double v : row) var += (v - mean) * (v - mean) / 6;
      CHECK(std::abs(mean) < 1e-12);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("token attention degenerate cases") {
    Rng rng = derive_rng(6, {});
    AdaptiveLayerFusion alf(5, fusion_config(1, true, 1), rng);
    Tape tape;
    const Matrix one = random_normal(1, 5, 1.0, rng);
    TokenAttention a = token_attention(tape, tape.constant(one), {1.0}, alf);
    CHECK(a.beta.value() == Matrix(1, 1, 1.0));
    CHECK(a.local.value() == one);

    Matrix same(4, 5);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < 5; ++c) same(t, c) = one[c];
    TokenAttention b = token_attention(tape, tape.constant(same), {1, 1, 0, 1}, alf);
    CHECK(b.beta.value()[2] == 0.0);
    CHECK(max_abs_diff(b.local.value(), one) < 1e-15);
    CHECK_THROWS_AS(token_attention(tape, tape.constant(same), {0, 0, 0, 0}, alf), Error);
  }

  TEST_CASE("fuse_contexts with zeroed output projection") {
    Rng rng = derive_rng(7, {});
    AdaptiveLayerFusion alf(6, fusion_config(1), rng);
    zero(alf.output_projection);
    const Matrix local = random_normal(1, 6, 1.0, rng), global = random_normal(1, 6, 1.0, rng);
    Tape tape;
    Var out = fuse_contexts(tape, tape.constant(local), tape.constant(global), alf, nullptr);
    CHECK(out.cols() == 6);
    oracle::Vec both = oracle::row_of(local, 0);
    for (double v : global.data()) both.push_back(v);
    const auto cf = oracle::layer_norm(oracle::gelu(oracle::affine(both, alf.context_map)),
                                       alf.context_norm);
    CHECK(oracle::max_abs_diff(values(out), oracle::layer_norm(cf, alf.output_norm)) < 1e-14);
  }

  TEST_CASE("alf_forward matches the straight-line oracle at every stage") {
    for (int nf : {1, 2, 3}) {
      for (bool gating : {true, false}) {
        Rng rng = derive_rng(8, {static_cast<std::uint64_t>(nf), gating ? 1u : 0u});
        FusionConfig cfg = fusion_config(nf, gating);
        cfg.d_k = 3;
        AdaptiveLayerFusion alf(6, cfg, rng);
        const auto layers = fixtures::random_layers(static_cast<std::size_t>(nf), 5, 6, rng);
        const std::vector<double> mask{1, 1, 0, 1, 0};
        Tape tape;
        FusionVars fv = alf_forward(tape, constants(tape, layers), mask, alf, nullptr);
        const auto ref = oracle::alf_forward(layers, mask, alf);
        CHECK(oracle::max_abs_diff(values(fv.weights.lambda), ref.lambda) < 1e-13);
        CHECK(oracle::max_abs_diff(values(fv.tokens.beta), ref.beta) < 1e-13);
        CHECK(oracle::max_abs_diff(values(fv.tokens.local), ref.local) < 1e-13);
        CHECK(oracle::max_abs_diff(values(fv.query), ref.query) < 1e-13);
        CHECK(oracle::max_abs_diff(values(fv.embedding), ref.embedding) < 1e-12);
        CHECK(fv.tokens.beta.value()[2] == 0.0);
        CHECK(fv.tokens.beta.value()[4] == 0.0);
      }
    }
  }

  TEST_CASE("alf_forward is padding invariant and deterministic") {
    Rng rng = derive_rng(9, {});
    AdaptiveLayerFusion alf(8, fusion_config(2), rng);
    for (int trial = 0; trial < 10; ++trial) {
      const auto layers = fixtures::random_layers(2, 4, 8, rng);
      auto padded = layers;
      for (auto& m : padded) {
        Matrix big = random_normal(9, 8, 50.0, rng);
        for (std::size_t t = 0; t < 4; ++t)
          for (std::size_t c = 0; c < 8; ++c) big(t, c) = m(t, c);
        m = big;
      }
      std::vector<double> mask(4, 1.0), pmask(9, 0.0);
      std::fill_n(pmask.begin(), 4, 1.0);
      Tape tape;
      FusionVars a = alf_forward(tape, constants(tape, layers), mask, alf, nullptr);
      FusionVars b = alf_forward(tape, constants(tape, padded), pmask, alf, nullptr);
      FusionVars c = alf_forward(tape, constants(tape, layers), mask, alf, nullptr);
      CHECK(max_abs_diff(a.embedding.value(), b.embedding.value()) < 1e-9);
      CHECK(max_abs_diff(a.weights.lambda.value(), b.weights.lambda.value()) < 1e-9);
      CHECK(a.embedding.value() == c.embedding.value());
    }
  }

  TEST_CASE("N_f = 1 without gating reduces to the top layer") {
    Rng rng = derive_rng(10, {});
    AdaptiveLayerFusion alf(6, fusion_config(1, false), rng);
    const Matrix top = random_normal(5, 6, 1.0, rng);
    Tape tape;
    const std::vector<double> mask{1, 1, 1, 0, 0};
    LayerWeights w = compute_layer_weights(tape, summarize_layers(tape, {tape.constant(top)}, mask),
                                           alf);
    CHECK(w.lambda.value() == Matrix(1, 1, 1.0));
    CHECK(fuse_layers({tape.constant(top)}, w.lambda).value() == top);
  }

  TEST_CASE("N_f mismatch is rejected") {
    Rng rng = derive_rng(11, {});
    AdaptiveLayerFusion alf(6, fusion_config(3), rng);
    const auto layers = fixtures::random_layers(2, 3, 6, rng);
    Tape tape;
    CHECK_THROWS_WITH_AS(compute_layer_weights(
                             tape, summarize_layers(tape, constants(tape, layers), {1, 1, 1}), alf),
                         doctest::Contains("N_f = 3"), Error);
  }

  TEST_CASE("fusion gradients match finite differences") {
    AlfiaModel model(fixtures::tiny_config(2));
    Rng rng = derive_rng(12, {});
    const TokenRow row = random_token_row(40, 10, 8, rng);
    ModelGradCheckOptions opt;
    opt.fd.step = 1e-3;
    opt.fd.stencil = 4;
    opt.fd.floor = 1e-6;
    for (const BlockGradCheck& b : check_model_gradients(model, row, 1, opt)) {
      INFO(block_name(b.block), " worst ", b.worst_parameter);
      CHECK(b.max_relative_error < 1e-5);
    }
  }
}
