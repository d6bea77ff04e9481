#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "alfia/clinical.hpp"
#include "alfia/config.hpp"
#include "alfia/model.hpp"
#include "alfia/training.hpp"

namespace alfia {

// A model rebuilt from a checkpoint, with the vocabulary it was trained on.
struct LoadedModel {
  RunConfig config;
  Vocabulary vocab;
  std::unique_ptr<AlfiaModel> model;
  int best_epoch = 0;
  double best_val_auprc = 0.0;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

// Tokenized examples, unpadded, truncated to the encoder's max_seq_len.
std::vector<Example> to_examples(const std::vector<NarrativeDocument>& docs, const Vocabulary& vocab,
                                 int max_len);

struct EmbeddingRecord {
  std::string id;
  int label = 0;
  double probability = 0.0;
  std::vector<double> embedding;      // unit L2 norm, or all zero when N_f = 0
  std::vector<double> layer_weights;  // raw lambda
};

struct EmbeddingTable {
  std::vector<EmbeddingRecord> rows;
  Matrix embeddings() const;  // n x d
  std::vector<int> labels() const;
  std::vector<double> probabilities() const;
};

// Divides by the Euclidean norm; a zero vector stays zero.
void l2_normalize(std::vector<double>& v);

// Per-example fusion + head over precomputed hidden states of the selected
// top layers (each T x d). n_f = 0 takes the zero-embedding branch.
EmbeddingRecord embed_states(AlfiaModel& model, const std::vector<Matrix>& selected,
                             const std::vector<double>& mask, int n_f);

// Batched inference in evaluation mode. Each batch is padded to its longest
// sequence. n_f must be 0 or the configured fusion width. Output order is
// input order.
EmbeddingTable embed_corpus(AlfiaModel& model, const Vocabulary& vocab,
                            const std::vector<NarrativeDocument>& docs, int batch_size, int n_f);

std::string format_embedding_table(const EmbeddingTable& table);
void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_table(const std::filesystem::path& path);

// Names of the original-feature columns, in export order.
const std::vector<std::string>& feature_columns();

// id, emb_*, layerw_*, original features, label.
void export_for_downstream(const EmbeddingTable& table, const std::vector<PatientRecord>& records,
                           const std::filesystem::path& path);

// Per-layer hidden states of a batch, padded to a shared length T.
struct HiddenStateDump {
  std::size_t n_layers = 0;  // layers available (embedding output included)
  std::size_t seq_len = 0;
  std::size_t d_model = 0;
  std::vector<std::vector<Matrix>> states;  // [example][layer], T x d each
  std::vector<std::vector<double>> masks;   // [example], 0/1 of length T

  void validate() const;
};

HiddenStateDump dump_hidden_states(AlfiaModel& model, const Vocabulary& vocab,
                                   const std::vector<NarrativeDocument>& docs);
void write_hidden_states(const std::filesystem::path& path, const HiddenStateDump& dump);
HiddenStateDump read_hidden_states(const std::filesystem::path& path);

struct SelectedStates {
  std::vector<std::vector<Matrix>> layers;  // [example][n_f]
  std::vector<std::vector<double>> masks;
};

// The last n_f layers of every example in a dump.
SelectedStates ingest_hidden_states(const std::filesystem::path& path, int n_f);

// Minimal CSV helpers shared by the table readers.
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);
std::string format_double(double v);

}  // namespace alfia
