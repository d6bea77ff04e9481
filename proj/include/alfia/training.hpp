#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alfia/model.hpp"

namespace alfia {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 16;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 42;
  TrainMode mode = TrainMode::kAdapter;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // 0 disables clipping

  void validate() const;
};

struct Example {
  TokenRow row;
  int label = 0;
};

// Decoupled-weight-decay Adam over the trainable parameters it was given.
class AdamW {
 public:
  struct Options {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::vector<Parameter*> params, Options options);
  void step();
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  Options opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

// Forward + backward for the listed examples; p.grad receives the gradient
// of the batch-mean loss. Per-example work may run concurrently, the
// reduction follows list order. Returns the summed (not averaged) loss.
double accumulate_batch_gradients(AlfiaModel& model, const std::vector<Example>& data,
                                  std::span<const std::size_t> batch, std::uint64_t seed,
                                  int epoch, bool dropout);

// Positive-class probabilities in input order, evaluation mode.
std::vector<double> predict_all(AlfiaModel& model, const std::vector<Example>& data);

// Patience rule on a metric that should increase. Improvement is strict.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  // Records the next epoch's metric; returns true when it is a new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  int epochs() const { return epochs_; }

 private:
  int patience_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_ = 0.0;
};

struct StoppingOutcome {
  int epochs_run = 0;
  int best_epoch = 0;
};

// Runs the stopping rule over a scripted metric sequence.
StoppingOutcome simulate_early_stopping(std::span<const double> metrics, int patience,
                                        int max_epochs);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auprc = 0.0;
  double val_auroc = 0.0;
};

struct TensorData {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

struct BlockData {
  std::string name;
  std::vector<TensorData> tensors;
};

struct CheckpointBundle {
  std::string config;  // JSON snapshot needed to rebuild the model
  int best_epoch = 0;
  double best_val_auprc = 0.0;
  std::vector<BlockData> blocks;
};

// Copies every parameter block (backbone, LoRA, ALF, ACH) out of the model.
CheckpointBundle capture_checkpoint(AlfiaModel& model, std::string config);
// Writes checkpoint tensors into the model. Every block and shape is checked
// before any value is written.
void restore_checkpoint(AlfiaModel& model, const CheckpointBundle& bundle);

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
  CheckpointBundle checkpoint;
  std::vector<EpochRecord> history;
};

// Called after each epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with validation-AUPRC early stopping. The model ends
// holding its best-epoch parameters.
TrainResult train(AlfiaModel& model, const std::vector<Example>& train_data,
                  const std::vector<Example>& val_data, const TrainConfig& cfg,
                  const std::string& config_snapshot = "{}",
                  const EpochCallback& on_epoch = nullptr);

std::string format_history(const std::vector<EpochRecord>& history);
void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace alfia
