#include "alfia/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "alfia/binary_io.hpp"
#include "alfia/error.hpp"
#include "alfia/evaluation.hpp"
#include "alfia/ops.hpp"

namespace alfia {

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "train.learning_rate must be positive");
  require(batch_size >= 1, "train.batch_size must be at least 1");
  require(max_epochs >= 1, "train.max_epochs must be at least 1");
  require(patience >= 1, "train.patience must be at least 1");
  require(weight_decay >= 0.0, "train.weight_decay must be non-negative");
  require(clip_norm >= 0.0, "train.clip_norm must be non-negative");
}

// --- optimizer -----------------------------------------------------------------

AdamW::AdamW(std::vector<Parameter*> params, Options options)
    : params_(std::move(params)), opt_(options) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.trainable) continue;
    auto w = p.value.data();
    const auto g = p.grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
      w[i] -= opt_.learning_rate * (update + opt_.weight_decay * w[i]);
    }
  }
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

// --- per-batch work ------------------------------------------------------------

double accumulate_batch_gradients(AlfiaModel& model, const std::vector<Example>& data,
                                  std::span<const std::size_t> batch, std::uint64_t seed,
                                  int epoch, bool dropout) {
  const std::size_t n = batch.size();
  require(n > 0, "empty batch");
  std::vector<Gradients> grads(n);
  std::vector<double> losses(n);
  const double inv = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const auto i = static_cast<std::size_t>(k);
    const Example& ex = data[batch[i]];
    Rng rng = derive_rng(seed, {0x747261696e, static_cast<std::uint64_t>(epoch), batch[i]});
    Tape tape;
    const ForwardResult r = model.forward(tape, ex.row, dropout ? &rng : nullptr);
    const Var loss = ops::bce_with_logits(r.logits, ex.label);
    losses[i] = loss.value()[0];
    grads[i] = tape.backward(ops::scale(loss, inv));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    grads[i].accumulate_into_parameters();
    total += losses[i];
  }
  return total;
}

std::vector<double> predict_all(AlfiaModel& model, const std::vector<Example>& data) {
  std::vector<double> out(data.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(data.size()); ++k)
    out[static_cast<std::size_t>(k)] = predict(model, data[static_cast<std::size_t>(k)].row);
  return out;
}

// --- early stopping ------------------------------------------------------------

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  require(patience >= 1, "patience must be at least 1");
}

bool EarlyStopper::update(double metric) {
  ++epochs_;
  if (epochs_ == 1 || metric > best_) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

StoppingOutcome simulate_early_stopping(std::span<const double> metrics, int patience,
                                        int max_epochs) {
  EarlyStopper stopper(patience);
  for (double m : metrics) {
    if (stopper.epochs() >= max_epochs) break;
    stopper.update(m);
    if (stopper.should_stop()) break;
  }
  return {stopper.epochs(), stopper.best_epoch()};
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'L', 'F', 'I', 'A', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr Block kBlocks[] = {Block::kBackbone, Block::kLora, Block::kAlf, Block::kAch};

std::vector<Matrix> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

CheckpointBundle capture_checkpoint(AlfiaModel& model, std::string config) {
  CheckpointBundle b;
  b.config = std::move(config);
  for (Block block : kBlocks) {
    BlockData data{block_name(block), {}};
    for (const Parameter* p : model.parameters(block))
      data.tensors.push_back({p->name, p->value.rows(), p->value.cols(), p->value.values()});
    b.blocks.push_back(std::move(data));
  }
  return b;
}

void restore_checkpoint(AlfiaModel& model, const CheckpointBundle& bundle) {
  std::map<std::string, const BlockData*> by_name;
  for (const auto& blk : bundle.blocks) by_name[blk.name] = &blk;
  std::vector<std::pair<Parameter*, const TensorData*>> plan;
  for (Block block : kBlocks) {
    const auto params = model.parameters(block);
    const auto it = by_name.find(block_name(block));
    if (params.empty() && it == by_name.end()) continue;
    require(it != by_name.end(), std::string("checkpoint lacks the ") + block_name(block) + " block");
    const BlockData& blk = *it->second;
    require(blk.tensors.size() == params.size(),
            std::string("checkpoint ") + block_name(block) + " block holds " +
                std::to_string(blk.tensors.size()) + " tensors, model expects " +
                std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      const TensorData& t = blk.tensors[i];
      require(t.name == p.name, "checkpoint tensor '" + t.name + "' does not match '" + p.name + "'");
      const std::size_t want[2] = {p.value.rows(), p.value.cols()};
      const std::size_t got[2] = {t.rows, t.cols};
      for (int a = 0; a < 2; ++a)
        require(want[a] == got[a], std::string(block_name(block)) + " tensor " + p.name + ": " +
                                       p.axes[static_cast<std::size_t>(a)] + " is " +
                                       std::to_string(got[a]) + " in the checkpoint but " +
                                       std::to_string(want[a]) + " in the model");
      plan.emplace_back(&p, &t);
    }
  }
  for (auto& [p, t] : plan) p->value = Matrix(t->rows, t->cols, t->values);
}

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  binary::Writer w;
  w.put_raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.put(kCheckpointVersion);
  w.put_string(bundle.config);
  w.put(static_cast<std::int64_t>(bundle.best_epoch));
  w.put(bundle.best_val_auprc);
  w.put(static_cast<std::uint32_t>(bundle.blocks.size()));
  for (const auto& blk : bundle.blocks) {
    w.put_string(blk.name);
    w.put(static_cast<std::uint32_t>(blk.tensors.size()));
    for (const auto& t : blk.tensors) {
      w.put_string(t.name);
      w.put(static_cast<std::uint64_t>(t.rows));
      w.put(static_cast<std::uint64_t>(t.cols));
      for (double v : t.values) w.put(v);
    }
  }
  w.seal();
  binary::write_file(path, w.bytes());
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  const std::string file = binary::read_file(path);
  const std::string ctx = "checkpoint " + path.string();
  require(file.size() >= sizeof kCheckpointMagic &&
              std::equal(kCheckpointMagic, kCheckpointMagic + sizeof kCheckpointMagic, file.begin()),
          ctx + ": not a checkpoint (bad magic)");
  binary::Reader r(binary::checked_payload(file, ctx), ctx);
  r.get_raw(sizeof kCheckpointMagic);
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ctx + ": unsupported format version " +
                                             std::to_string(version) + " (expected " +
                                             std::to_string(kCheckpointVersion) + ")");
  CheckpointBundle b;
  b.config = r.get_string();
  b.best_epoch = static_cast<int>(r.get<std::int64_t>());
  b.best_val_auprc = r.get<double>();
  const auto n_blocks = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < n_blocks; ++k) {
    BlockData blk;
    blk.name = r.get_string();
    (void)block_from_name(blk.name);
    const auto n_tensors = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      TensorData t;
      t.name = r.get_string();
      t.rows = r.get<std::uint64_t>();
      t.cols = r.get<std::uint64_t>();
      require(t.rows * t.cols <= r.remaining() / sizeof(double), ctx + ": tensor " + t.name + " overruns the file");
      t.values.resize(t.rows * t.cols);
      for (double& v : t.values) v = r.get<double>();
      blk.tensors.push_back(std::move(t));
    }
    b.blocks.push_back(std::move(blk));
  }
  require(r.remaining() == 0, ctx + ": trailing bytes after the last block");
  return b;
}

// --- training loop -------------------------------------------------------------

namespace {

void check_validation(const std::vector<Example>& val) {
  require(!val.empty(), "validation split is empty");
  bool pos = false;
  bool neg = false;
  for (const auto& e : val) (e.label == 1 ? pos : neg) = true;
  require(pos && neg, "AUPRC undefined: validation split holds a single class");
}

std::vector<int> labels_of(const std::vector<Example>& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back(e.label);
  return out;
}

}  // namespace

TrainResult train(AlfiaModel& model, const std::vector<Example>& train_data,
                  const std::vector<Example>& val_data, const TrainConfig& cfg,
                  const std::string& config_snapshot, const EpochCallback& on_epoch) {
  cfg.validate();
  require(!train_data.empty(), "training split is empty");
  check_validation(val_data);
  model.configure_training(cfg.mode);

  const auto all = model.all_parameters();
  std::vector<Parameter*> trainable;
  for (Parameter* p : all)
    if (p->trainable) trainable.push_back(p);
  AdamW opt(trainable, {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  EarlyStopper stopper(cfg.patience);
  std::vector<Matrix> best = snapshot(all);
  const auto val_labels = labels_of(val_data);

  TrainResult result;
  std::vector<std::size_t> order(train_data.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(cfg.seed, {0x73687566, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      for (Parameter* p : trainable) p->zero_grad();
      loss_sum += accumulate_batch_gradients(model, train_data,
                                             std::span(order).subspan(start, len), cfg.seed,
                                             epoch, true);
      clip_grad_norm(trainable, cfg.clip_norm);
      opt.step();
    }

    const auto probs = predict_all(model, val_data);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train_data.size()),
                    auprc(probs, val_labels), auroc(probs, val_labels)};
    result.history.push_back(rec);
    if (stopper.update(rec.val_auprc)) best = snapshot(all);
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop()) break;
  }

  restore(all, best);
  for (Parameter* p : trainable) p->zero_grad();
  result.checkpoint = capture_checkpoint(model, config_snapshot);
  result.checkpoint.best_epoch = stopper.best_epoch();
  result.checkpoint.best_val_auprc = stopper.best_value();
  return result;
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_auprc,val_auroc\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_auprc,
                  h.val_auroc);
    out += buf;
  }
  return out;
}

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  binary::write_file(path, format_history(history));
}

}  // namespace alfia
