#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "alfia/binary_io.hpp"
#include "alfia/error.hpp"
#include "alfia/training.hpp"
#include "fixtures.hpp"

using namespace alfia;

namespace {

std::vector<Example> toy_examples(std::size_t n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, {});
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 4 + i % 5;
    Example e{random_token_row(40, len, len, rng), static_cast<int>(i % 3 == 0)};
    // Positives carry a marker token.
    if (e.label) e.row.ids[1] = 7;
    out.push_back(e);
  }
  return out;
}

std::vector<Matrix> values_of(const std::vector<Parameter*>& ps) {
  std::vector<Matrix> out;
  for (const Parameter* p : ps) out.push_back(p->value);
  return out;
}

double batch_loss(AlfiaModel& model, const std::vector<Example>& data) {
  double loss = 0.0;
  for (const auto& e : data) {
    Tape tape;
    loss += ops::bce_with_logits(model.forward(tape, e.row, nullptr).logits, e.label).value()[0];
  }
  return loss / static_cast<double>(data.size());
}

const std::filesystem::path kDir = std::filesystem::temp_directory_path() / "alfia_training_test";

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("early stopping on scripted sequences") {
    const std::vector<double> flat{0.50, 0.60, 0.60, 0.60, 0.60, 0.60, 0.60};
    const StoppingOutcome a = simulate_early_stopping(flat, 5, 50);
    CHECK(a.epochs_run == 7);
    CHECK(a.best_epoch == 2);
    std::vector<double> rising;
    for (int i = 0; i < 12; ++i) rising.push_back(0.1 * i);
    const StoppingOutcome b = simulate_early_stopping(rising, 5, 10);
    CHECK(b.epochs_run == 10);
    CHECK(b.best_epoch == 10);
    const StoppingOutcome c = simulate_early_stopping(std::vector<double>{0.3, 0.2, 0.1, 0.4}, 2, 10);
    CHECK(c.epochs_run == 3);
    CHECK(c.best_epoch == 1);
  }

  TEST_CASE("early stopper keeps the first of equal maxima") {
    EarlyStopper s(3);
    CHECK(s.update(0.0));
    CHECK_FALSE(s.update(0.0));
    CHECK(s.update(0.5));
    CHECK_FALSE(s.update(0.5));
    CHECK(s.best_epoch() == 3);
    CHECK_FALSE(s.should_stop());
    s.update(0.1);
    s.update(0.2);
    CHECK(s.should_stop());
  }

  TEST_CASE("trainable inventory per mode") {
    AlfiaModel model(fixtures::tiny_config());
    const ParameterInventory adapter = trainable_parameters(model, TrainMode::kAdapter);
    const ParameterInventory scratch = trainable_parameters(model, TrainMode::kFromScratch);
    CHECK(adapter.block_total(Block::kBackbone) == 0);
    CHECK(scratch.block_total(Block::kBackbone) > 0);
    CHECK(adapter.total() == adapter.block_total(Block::kLora) + adapter.block_total(Block::kAlf) +
                                 adapter.block_total(Block::kAch));
    CHECK(scratch.total() == adapter.total() + scratch.block_total(Block::kBackbone));

    ModelConfig plain_cfg = fixtures::tiny_config();
    plain_cfg.lora.reset();
    AlfiaModel plain(plain_cfg);
    const std::size_t added = trainable_parameters(model, TrainMode::kAdapter).total() -
                              trainable_parameters(plain, TrainMode::kAdapter).total();
    // 4 targets x 3 layers, each 8 -> 8 with rank 2.
    CHECK(added == 12 * 2 * (8 + 8));
    CHECK(added == model.adapters().total_entries());
  }

  TEST_CASE("a small optimizer step lowers the batch loss") {
    AlfiaModel model(fixtures::tiny_config());
    model.configure_training(TrainMode::kFromScratch);
    const auto data = toy_examples(8, 1);
    std::vector<std::size_t> batch(data.size());
    std::iota(batch.begin(), batch.end(), 0);
    const double before = batch_loss(model, data);
    std::vector<Parameter*> trainable;
    for (Parameter* p : model.all_parameters())
      if (p->trainable) trainable.push_back(p);
    for (Parameter* p : trainable) p->zero_grad();
    const double summed = accumulate_batch_gradients(model, data, batch, 1, 1, false);
    CHECK(summed / 8 == doctest::Approx(before).epsilon(1e-12));
    for (Parameter* p : trainable) {
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= 1e-4 * p->grad[i];
    }
    CHECK(batch_loss(model, data) < before);
  }

  TEST_CASE("clip_grad_norm") {
    Parameter a("a", 1, 2), b("b", 1, 1);
    a.grad = Matrix::from_rows({{3, 0}});
    b.grad = Matrix::from_rows({{4}});
    CHECK(clip_grad_norm({&a, &b}, 1.0) == 5.0);
    CHECK(a.grad[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(b.grad[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(clip_grad_norm({&a, &b}, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(b.grad[0] == doctest::Approx(0.8).epsilon(1e-15));
  }

  TEST_CASE("AdamW first step moves each entry by lr") {
    Parameter p("p", 1, 3);
    p.value = Matrix::from_rows({{1, -2, 0.5}});
    p.grad = Matrix::from_rows({{0.3, -7, 1e-3}});
    AdamW opt({&p}, {.learning_rate = 0.01, .weight_decay = 0.0});
    opt.step();
    CHECK(p.value[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(p.value[1] == doctest::Approx(-1.99).epsilon(1e-9));
    CHECK(p.value[2] == doctest::Approx(0.49).epsilon(1e-6));
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("adapter training leaves backbone bits untouched and is deterministic") {
    const auto train_set = toy_examples(24, 2);
    const auto val_set = toy_examples(12, 3);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 4;
    cfg.max_epochs = 3;
    AlfiaModel a(fixtures::tiny_config());
    const auto frozen = values_of(a.parameters(Block::kBackbone));
    const TrainResult ra = train(a, train_set, val_set, cfg);
    CHECK(values_of(a.parameters(Block::kBackbone)) == frozen);
    CHECK(ra.history.size() == 3);

    AlfiaModel b(fixtures::tiny_config());
    const TrainResult rb = train(b, train_set, val_set, cfg);
    CHECK(format_history(ra.history) == format_history(rb.history));
    CHECK(values_of(a.all_parameters()) == values_of(b.all_parameters()));
  }

  TEST_CASE("single-class validation is rejected") {
    auto val_set = toy_examples(6, 4);
    for (auto& e : val_set) e.label = 0;
    AlfiaModel m(fixtures::tiny_config());
    CHECK_THROWS_WITH_AS(train(m, toy_examples(6, 5), val_set, TrainConfig{}),
                         doctest::Contains("AUPRC undefined"), Error);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    std::filesystem::create_directories(kDir);
    AlfiaModel model(fixtures::tiny_config());
    Rng rng = derive_rng(6, {});
    for (Parameter* p : model.all_parameters())
      p->value = random_normal(p->value.rows(), p->value.cols(), 1.0, rng);
    CheckpointBundle bundle = capture_checkpoint(model, "{\"x\":1}");
    bundle.best_epoch = 4;
    bundle.best_val_auprc = 0.123456789012345678;
    save_checkpoint(bundle, kDir / "ck.bin");
    const CheckpointBundle back = load_checkpoint(kDir / "ck.bin");
    CHECK(back.config == bundle.config);
    CHECK(back.best_epoch == 4);
    CHECK(back.best_val_auprc == bundle.best_val_auprc);

    AlfiaModel fresh(fixtures::tiny_config());
    restore_checkpoint(fresh, back);
    CHECK(values_of(fresh.all_parameters()) == values_of(model.all_parameters()));
  }

  TEST_CASE("corrupt or truncated checkpoints are rejected without partial load") {
    std::filesystem::create_directories(kDir);
    AlfiaModel model(fixtures::tiny_config());
    save_checkpoint(capture_checkpoint(model, "{}"), kDir / "ck.bin");
    const std::string bytes = binary::read_file(kDir / "ck.bin");
    binary::write_file(kDir / "short.bin", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(kDir / "short.bin"), Error);
    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x10;
    binary::write_file(kDir / "flip.bin", flipped);
    CHECK_THROWS_WITH_AS(load_checkpoint(kDir / "flip.bin"), doctest::Contains("checksum"), Error);
    std::string wrong = bytes;
    wrong[8] = 9;  // version field
    binary::write_file(kDir / "ver.bin", wrong);
    CHECK_THROWS_AS(load_checkpoint(kDir / "ver.bin"), Error);
    CHECK_THROWS_AS(load_checkpoint(kDir / "missing.bin"), Error);
  }

  TEST_CASE("mismatched N_f is named and nothing is written") {
    AlfiaModel three(fixtures::tiny_config(3));
    AlfiaModel two(fixtures::tiny_config(2));
    const auto before = values_of(two.all_parameters());
    CHECK_THROWS_WITH_AS(restore_checkpoint(two, capture_checkpoint(three, "{}")),
                         doctest::Contains("N_f is 3 in the checkpoint but 2 in the model"), Error);
    CHECK(values_of(two.all_parameters()) == before);
  }
}
