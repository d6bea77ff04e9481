// Command-line driver: synth -> encode -> vocab -> split -> train -> eval,
// plus embedding export, diagnostics, probing and gradient checks.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "alfia/binary_io.hpp"
#include "alfia/clinical.hpp"
#include "alfia/config.hpp"
#include "alfia/error.hpp"
#include "alfia/evaluation.hpp"
#include "alfia/model_check.hpp"
#include "alfia/pipeline.hpp"
#include "alfia/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace alfia;

namespace {

std::optional<std::uint64_t> g_seed;

std::uint64_t seed_or(std::uint64_t fallback) { return g_seed.value_or(fallback); }

void echo_config(const fs::path& target, const json& resolved) {
  binary::write_file(target, resolved.dump(2) + "\n");
}

fs::path echo_path(const fs::path& out) { return fs::path(out.string() + ".config.json"); }

bool same_bundle(const CheckpointBundle& a, const CheckpointBundle& b) {
  if (a.config != b.config || a.best_epoch != b.best_epoch || a.blocks.size() != b.blocks.size())
    return false;
  if (std::memcmp(&a.best_val_auprc, &b.best_val_auprc, sizeof(double)) != 0) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& x = a.blocks[i];
    const auto& y = b.blocks[i];
    if (x.name != y.name || x.tensors.size() != y.tensors.size()) return false;
    for (std::size_t k = 0; k < x.tensors.size(); ++k) {
      const auto& s = x.tensors[k];
      const auto& t = y.tensors[k];
      if (s.name != t.name || s.rows != t.rows || s.cols != t.cols ||
          std::memcmp(s.values.data(), t.values.data(), s.values.size() * sizeof(double)) != 0)
        return false;
    }
  }
  return true;
}

// --- subcommands ---------------------------------------------------------

struct SynthArgs {
  int n = 1000;
  double prevalence = 0.10;
  fs::path out;
};

void run_synth(const SynthArgs& a) {
  const std::uint64_t seed = seed_or(42);
  write_records(a.out, generate_synthetic_cohort(a.n, a.prevalence, seed));
  echo_config(echo_path(a.out), {{"command", "synth"}, {"n", a.n}, {"prevalence", a.prevalence},
                                 {"seed", seed}, {"out", a.out.string()}});
}

struct EncodeArgs {
  fs::path records;
  fs::path out;
};

void run_encode(const EncodeArgs& a) {
  std::vector<NarrativeDocument> docs;
  for (const auto& r : read_records(a.records)) docs.push_back(encode_record(r));
  write_documents(a.out, docs);
  echo_config(echo_path(a.out),
              {{"command", "encode"}, {"records", a.records.string()}, {"out", a.out.string()}});
}

struct VocabArgs {
  fs::path docs;
  int min_freq = 1;
  fs::path out;
};

void run_vocab(const VocabArgs& a) {
  require(a.min_freq >= 1, "min-freq must be at least 1");
  write_vocab(a.out, build_vocab(read_documents(a.docs), a.min_freq));
  echo_config(echo_path(a.out), {{"command", "vocab"}, {"docs", a.docs.string()},
                                 {"min_freq", a.min_freq}, {"out", a.out.string()}});
}

struct SplitArgs {
  fs::path docs;
  fs::path out_dir;
  SplitSpec spec;
};

void run_split(SplitArgs a) {
  a.spec.seed = seed_or(a.spec.seed);
  a.spec.validate();
  const auto parts = split_dataset(read_documents(a.docs), a.spec);
  fs::create_directories(a.out_dir);
  write_documents(a.out_dir / "train.jsonl", parts.train);
  write_documents(a.out_dir / "val.jsonl", parts.val);
  write_documents(a.out_dir / "test.jsonl", parts.test);
  echo_config(a.out_dir / "split.config.json",
              {{"command", "split"}, {"docs", a.docs.string()}, {"out_dir", a.out_dir.string()},
               {"train", a.spec.train}, {"val", a.spec.val}, {"test", a.spec.test},
               {"seed", a.spec.seed}});
}

struct TrainArgs {
  fs::path config;
  fs::path out_dir;
  bool quiet = false;
};

void run_train(const TrainArgs& a) {
  RunConfig cfg = read_run_config(a.config);
  if (g_seed) cfg.apply_seed(*g_seed);
  require(!cfg.data.train.empty() && !cfg.data.val.empty(), "config must name data.train and data.val");
  const auto train_docs = read_documents(cfg.data.train);
  const auto val_docs = read_documents(cfg.data.val);
  const Vocabulary vocab = cfg.data.vocab.empty() ? build_vocab(train_docs, 1) : read_vocab(cfg.data.vocab);
  auto& enc = cfg.model.encoder;
  if (enc.vocab_size == 0) enc.vocab_size = static_cast<int>(vocab.size());
  require(enc.vocab_size == static_cast<int>(vocab.size()),
          "encoder.vocab_size disagrees with the vocabulary size " + std::to_string(vocab.size()));
  cfg.validate();

  // Recorded copies keep data paths relative to the config file so that the
  // same run in another directory writes the same bytes.
  RunConfig recorded = cfg;
  const fs::path base = fs::absolute(a.config).parent_path().lexically_normal();
  for (fs::path* p : {&recorded.data.train, &recorded.data.val, &recorded.data.vocab}) {
    if (p->empty()) continue;
    const fs::path rel = fs::absolute(*p).lexically_normal().lexically_relative(base);
    if (!rel.empty()) *p = rel;
  }

  fs::create_directories(a.out_dir);
  echo_config(a.out_dir / "config.json", to_json(recorded));
  write_vocab(a.out_dir / "vocab.txt", vocab);

  AlfiaModel model(cfg.model);
  const auto train_set = to_examples(train_docs, vocab, enc.max_seq_len);
  const auto val_set = to_examples(val_docs, vocab, enc.max_seq_len);
  const TrainResult result =
      train(model, train_set, val_set, cfg.train, make_snapshot(recorded, vocab), [&](const EpochRecord& r) {
        if (!a.quiet)
          std::printf("epoch %d train_loss %.6f val_auprc %.6f val_auroc %.6f\n", r.epoch,
                      r.train_loss, r.val_auprc, r.val_auroc);
        std::fflush(stdout);
      });

  const fs::path ckpt = a.out_dir / "checkpoint.bin";
  save_checkpoint(result.checkpoint, ckpt);
  require(same_bundle(load_checkpoint(ckpt), result.checkpoint),
          "checkpoint verification failed: reload differs from the saved state");
  write_history(a.out_dir / "history.csv", result.history);
  if (!a.quiet)
    std::printf("best_epoch %d best_val_auprc %.6f\n", result.checkpoint.best_epoch,
                result.checkpoint.best_val_auprc);
}

struct EvalArgs {
  fs::path checkpoint;
  fs::path docs;
  fs::path out;
  int resamples = 1000;
};

void run_eval(const EvalArgs& a) {
  LoadedModel m = load_model(a.checkpoint);
  const auto docs = read_documents(a.docs);
  const auto examples = to_examples(docs, m.vocab, m.config.model.encoder.max_seq_len);
  std::vector<int> labels;
  for (const auto& d : docs) labels.push_back(d.label);
  check_scored_set(std::vector<double>(labels.size(), 0.5), labels);
  const std::uint64_t seed = seed_or(m.config.seed);
  const auto probs = predict_all(*m.model, examples);
  write_eval_report(a.out, evaluate(probs, labels, a.resamples, seed));
  echo_config(echo_path(a.out), {{"command", "eval"}, {"checkpoint", a.checkpoint.string()},
                                 {"docs", a.docs.string()}, {"resamples", a.resamples},
                                 {"seed", seed}, {"out", a.out.string()}});
}

struct EmbedArgs {
  fs::path checkpoint;
  fs::path docs;
  fs::path out;
  int batch_size = 16;
  std::optional<int> n_fuse;
};

void run_embed(const EmbedArgs& a) {
  LoadedModel m = load_model(a.checkpoint);
  const int n_f = a.n_fuse.value_or(m.config.model.fusion.n_fuse);
  const auto table = embed_corpus(*m.model, m.vocab, read_documents(a.docs), a.batch_size, n_f);
  write_embedding_table(a.out, table);
  echo_config(echo_path(a.out), {{"command", "embed"}, {"checkpoint", a.checkpoint.string()},
                                 {"docs", a.docs.string()}, {"batch_size", a.batch_size},
                                 {"n_fuse", n_f}, {"out", a.out.string()}});
}

struct ExportArgs {
  fs::path embeddings;
  fs::path records;
  fs::path out;
};

void run_export(const ExportArgs& a) {
  export_for_downstream(read_embedding_table(a.embeddings), read_records(a.records), a.out);
  echo_config(echo_path(a.out), {{"command", "export"}, {"embeddings", a.embeddings.string()},
                                 {"records", a.records.string()}, {"out", a.out.string()}});
}

struct DiagnoseArgs {
  fs::path embeddings;
  fs::path labels;
  fs::path out;
};

void run_diagnose(const DiagnoseArgs& a) {
  EmbeddingTable table = read_embedding_table(a.embeddings);
  if (!a.labels.empty()) {
    std::map<std::string, int> by_id;
    for (const auto& d : read_documents(a.labels)) by_id[d.id] = d.label;
    for (auto& row : table.rows) {
      const auto it = by_id.find(row.id);
      require(it != by_id.end(), "no label for embedding id " + row.id);
      row.label = it->second;
    }
  }
  const LatentReport r = latent_metrics(table.embeddings(), table.labels());
  binary::write_file(a.out, format_latent_report(r));
  echo_config(echo_path(a.out), {{"command", "diagnose"}, {"embeddings", a.embeddings.string()},
                                 {"labels", a.labels.string()}, {"out", a.out.string()}});
}

struct ProbeArgs {
  fs::path train_embeddings;
  fs::path eval_embeddings;
  fs::path out;
  int resamples = 1000;
  ProbeOptions options;
};

void run_probe(const ProbeArgs& a) {
  const EmbeddingTable tr = read_embedding_table(a.train_embeddings);
  const EmbeddingTable ev = read_embedding_table(a.eval_embeddings);
  const std::uint64_t seed = seed_or(42);
  const ProbeResult r = linear_probe(tr.embeddings(), tr.labels(), ev.embeddings(), ev.labels(),
                                     a.options, a.resamples, seed);
  std::string text = format_eval_report(r.report);
  text += "probe_iterations," + std::to_string(r.iterations) + ",,,\n";
  text += std::string("probe_converged,") + (r.converged ? "1" : "0") + ",,,\n";
  binary::write_file(a.out, text);
  echo_config(echo_path(a.out),
              {{"command", "probe"}, {"train_embeddings", a.train_embeddings.string()},
               {"eval_embeddings", a.eval_embeddings.string()}, {"resamples", a.resamples},
               {"learning_rate", a.options.learning_rate}, {"tolerance", a.options.tolerance},
               {"max_iterations", a.options.max_iterations}, {"seed", seed}, {"out", a.out.string()}});
}

struct GradcheckArgs {
  fs::path config;
  double tolerance = 1e-5;
  int length = 32;
  int entries = 64;
};

int run_gradcheck(const GradcheckArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = read_run_config(a.config);
  if (g_seed) cfg.apply_seed(*g_seed);
  if (cfg.model.encoder.vocab_size == 0) cfg.model.encoder.vocab_size = 100;
  require(a.length >= 2 && a.length <= cfg.model.encoder.max_seq_len, "--length must fit max_seq_len");
  cfg.validate();
  AlfiaModel model(cfg.model);
  Rng rng = derive_rng(cfg.seed, {0x6763});
  const auto len = static_cast<std::size_t>(a.length);
  const TokenRow row = random_token_row(cfg.model.encoder.vocab_size, len, len - len / 8, rng);
  ModelGradCheckOptions opt;
  opt.fd.step = 1e-3;
  opt.fd.stencil = 4;
  opt.fd.max_entries_per_parameter = static_cast<std::size_t>(a.entries);
  opt.fd.seed = cfg.seed;
  opt.fd.floor = 1e-6;
  opt.mode = cfg.train.mode;
  bool ok = true;
  std::printf("block,checked,max_relative_error,worst_parameter,status\n");
  for (const auto& b : check_model_gradients(model, row, 1, opt)) {
    const bool pass = b.max_relative_error < a.tolerance;
    ok = ok && pass;
    std::printf("%s,%zu,%.3e,%s,%s\n", block_name(b.block), b.checked, b.max_relative_error,
                b.worst_parameter.c_str(), pass ? "PASS" : "FAIL");
  }
  if (!ok) {
    std::fprintf(stderr, "error: gradient check exceeded tolerance %.1e\n", a.tolerance);
    return 1;
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clinical narrative mortality classification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option_function<std::uint64_t>("--seed", [](std::uint64_t s) { g_seed = s; },
                                         "Seed overriding config and defaults (default 42)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic patient cohort");
  c_synth->add_option("--n", synth.n, "Number of records")->required();
  c_synth->add_option("--prevalence", synth.prevalence, "Target mortality prevalence");
  c_synth->add_option("--out", synth.out, "Records file (JSON lines)")->required();

  EncodeArgs encode;
  auto* c_encode = app.add_subcommand("encode", "Render records as narrative documents");
  c_encode->add_option("--records", encode.records)->required()->check(CLI::ExistingFile);
  c_encode->add_option("--out", encode.out)->required();

  VocabArgs vocab;
  auto* c_vocab = app.add_subcommand("vocab", "Build a word vocabulary");
  c_vocab->add_option("--docs", vocab.docs)->required()->check(CLI::ExistingFile);
  c_vocab->add_option("--min-freq", vocab.min_freq);
  c_vocab->add_option("--out", vocab.out)->required();

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Stratified train/val/test split");
  c_split->add_option("--docs", split.docs)->required()->check(CLI::ExistingFile);
  c_split->add_option("--out-dir", split.out_dir)->required();
  c_split->add_option("--train", split.spec.train);
  c_split->add_option("--val", split.spec.val);
  c_split->add_option("--test", split.spec.test);

  TrainArgs trn;
  auto* c_train = app.add_subcommand("train", "Train with validation-AUPRC early stopping");
  c_train->add_option("--config", trn.config)->required()->check(CLI::ExistingFile);
  c_train->add_option("--out-dir", trn.out_dir)->required();
  c_train->add_flag("--quiet", trn.quiet, "Suppress per-epoch progress");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "AUPRC, AUROC, best F1/F2 with bootstrap CIs");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--docs", ev.docs)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out)->required();
  c_eval->add_option("--resamples", ev.resamples);

  EmbedArgs emb;
  auto* c_embed = app.add_subcommand("embed", "Export normalized fused embeddings");
  c_embed->add_option("--checkpoint", emb.checkpoint)->required()->check(CLI::ExistingFile);
  c_embed->add_option("--docs", emb.docs)->required()->check(CLI::ExistingFile);
  c_embed->add_option("--batch-size", emb.batch_size);
  c_embed->add_option("--n-fuse", emb.n_fuse, "0 selects the zero-embedding branch");
  c_embed->add_option("--out", emb.out)->required();

  ExportArgs exp;
  auto* c_export = app.add_subcommand("export", "Join embeddings with the original features");
  c_export->add_option("--embeddings", exp.embeddings)->required()->check(CLI::ExistingFile);
  c_export->add_option("--records", exp.records)->required()->check(CLI::ExistingFile);
  c_export->add_option("--out", exp.out)->required();

  DiagnoseArgs diag;
  auto* c_diag = app.add_subcommand("diagnose", "Latent-space separation metrics");
  c_diag->add_option("--embeddings", diag.embeddings)->required()->check(CLI::ExistingFile);
  c_diag->add_option("--labels", diag.labels, "Documents file whose labels override the table's")
      ->check(CLI::ExistingFile);
  c_diag->add_option("--out", diag.out)->required();

  ProbeArgs probe;
  auto* c_probe = app.add_subcommand("probe", "Logistic probe on exported embeddings");
  c_probe->add_option("--train-embeddings", probe.train_embeddings)->required()->check(CLI::ExistingFile);
  c_probe->add_option("--eval-embeddings", probe.eval_embeddings)->required()->check(CLI::ExistingFile);
  c_probe->add_option("--out", probe.out)->required();
  c_probe->add_option("--resamples", probe.resamples);

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  c_grad->add_option("--config", gc.config)->check(CLI::ExistingFile);
  c_grad->add_option("--tolerance", gc.tolerance);
  c_grad->add_option("--length", gc.length);
  c_grad->add_option("--entries", gc.entries, "Entries sampled per parameter tensor (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (c_synth->parsed()) run_synth(synth);
    else if (c_encode->parsed()) run_encode(encode);
    else if (c_vocab->parsed()) run_vocab(vocab);
    else if (c_split->parsed()) run_split(split);
    else if (c_train->parsed()) run_train(trn);
    else if (c_eval->parsed()) run_eval(ev);
    else if (c_embed->parsed()) run_embed(emb);
    else if (c_export->parsed()) run_export(exp);
    else if (c_diag->parsed()) run_diagnose(diag);
    else if (c_probe->parsed()) run_probe(probe);
    else if (c_grad->parsed()) return run_gradcheck(gc);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
