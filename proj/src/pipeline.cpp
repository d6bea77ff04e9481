#include "alfia/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "alfia/binary_io.hpp"
#include "alfia/error.hpp"
#include "alfia/ops.hpp"

namespace alfia {

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const CheckpointBundle bundle = load_checkpoint(checkpoint);
  Snapshot snap = parse_snapshot(bundle.config);
  LoadedModel out{std::move(snap.config), std::move(snap.vocab), nullptr, bundle.best_epoch,
                  bundle.best_val_auprc};
  require(out.config.model.encoder.vocab_size == static_cast<int>(out.vocab.size()),
          "checkpoint vocabulary size disagrees with encoder.vocab_size");
  out.model = std::make_unique<AlfiaModel>(out.config.model);
  restore_checkpoint(*out.model, bundle);
  return out;
}

std::vector<Example> to_examples(const std::vector<NarrativeDocument>& docs, const Vocabulary& vocab,
                                 int max_len) {
  std::vector<Example> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back({tokenize(d, vocab, max_len, false), d.label});
  return out;
}

Matrix EmbeddingTable::embeddings() const {
  const std::size_t d = rows.empty() ? 0 : rows.front().embedding.size();
  Matrix m(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].embedding.size() == d, "embedding table rows differ in width");
    std::copy(rows[i].embedding.begin(), rows[i].embedding.end(), m.row(i).begin());
  }
  return m;
}

std::vector<int> EmbeddingTable::labels() const {
  std::vector<int> out;
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

std::vector<double> EmbeddingTable::probabilities() const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.probability);
  return out;
}

void l2_normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) return;
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
}

EmbeddingRecord embed_states(AlfiaModel& model, const std::vector<Matrix>& selected,
                             const std::vector<double>& mask, int n_f) {
  const int configured = model.config().fusion.n_fuse;
  require(n_f == 0 || n_f == configured,
          "N_f = " + std::to_string(n_f) + " does not match the checkpoint (0 or " +
              std::to_string(configured) + ")");
  const auto d = static_cast<std::size_t>(model.config().encoder.d_model);
  EmbeddingRecord rec;
  Tape tape;
  Var z;
  if (n_f == 0) {
    rec.embedding.assign(d, 0.0);
    rec.layer_weights.assign(static_cast<std::size_t>(configured), 1.0 / configured);
    z = tape.constant(Matrix(1, d));
  } else {
    require(selected.size() == static_cast<std::size_t>(n_f), "expected N_f selected layers");
    std::vector<Var> vars;
    for (const Matrix& m : selected) {
      require(m.cols() == d && m.rows() == mask.size(), "hidden state shape disagrees with the model");
      vars.push_back(tape.constant(m));
    }
    const FusionVars f = alf_forward(tape, vars, mask, model.fusion(), nullptr);
    rec.embedding = f.embedding.value().values();
    rec.layer_weights = f.weights.lambda.value().values();
    z = f.embedding;
  }
  rec.probability = ops::sigmoid(classify(tape, z, model.head(), nullptr).value()[0]);
  l2_normalize(rec.embedding);
  return rec;
}

EmbeddingTable embed_corpus(AlfiaModel& model, const Vocabulary& vocab,
                            const std::vector<NarrativeDocument>& docs, int batch_size, int n_f) {
  require(batch_size >= 1, "batch size must be at least 1");
  const int configured = model.config().fusion.n_fuse;
  require(n_f == 0 || n_f == configured,
          "N_f = " + std::to_string(n_f) + " does not match the checkpoint (0 or " +
              std::to_string(configured) + ")");
  const int max_len = model.config().encoder.max_seq_len;
  EmbeddingTable table;
  table.rows.resize(docs.size());
  const auto bs = static_cast<std::size_t>(batch_size);
  const std::size_t n_batches = (docs.size() + bs - 1) / bs;

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n_batches); ++b) {
    const std::size_t start = static_cast<std::size_t>(b) * bs;
    const std::size_t end = std::min(docs.size(), start + bs);
    TokenBatch batch;
    std::size_t longest = 0;
    for (std::size_t i = start; i < end; ++i) {
      batch.rows.push_back(tokenize(docs[i], vocab, max_len, false));
      longest = std::max(longest, batch.rows.back().ids.size());
    }
    for (auto& row : batch.rows) {
      row.ids.resize(longest, Vocabulary::kPad);
      row.mask.resize(longest, 0.0);
    }
    std::vector<std::vector<Matrix>> top(batch.rows.size());
    if (n_f > 0) {
      const LayerStates states = encode(model.encoder(), batch, Mode::kEval);
      const auto selected = select_top_layers(states, n_f);
      for (std::size_t i = 0; i < batch.rows.size(); ++i)
        for (const auto& layer : selected) top[i].push_back(layer[i]);
    }
    for (std::size_t i = start; i < end; ++i) {
      EmbeddingRecord rec = embed_states(model, top[i - start], batch.rows[i - start].mask, n_f);
      rec.id = docs[i].id;
      rec.label = docs[i].label;
      table.rows[i] = std::move(rec);
    }
  }
  return table;
}

// --- delimited text ------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  require(!quoted, "unterminated quoted field");
  return out;
}

std::string format_embedding_table(const EmbeddingTable& table) {
  const std::size_t d = table.rows.empty() ? 0 : table.rows.front().embedding.size();
  const std::size_t nf = table.rows.empty() ? 0 : table.rows.front().layer_weights.size();
  std::string out = "id,label,probability";
  for (std::size_t k = 0; k < d; ++k) out += ",emb_" + std::to_string(k);
  for (std::size_t k = 0; k < nf; ++k) out += ",layerw_" + std::to_string(k);
  out += '\n';
  for (const auto& r : table.rows) {
    out += csv_escape(r.id) + "," + std::to_string(r.label) + "," + format_double(r.probability);
    for (double v : r.embedding) out += "," + format_double(v);
    for (double v : r.layer_weights) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  binary::write_file(path, format_embedding_table(table));
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), where + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), path.string() + ": missing header");
  const auto header = csv_split(line);
  require(header.size() >= 3 && header[0] == "id" && header[1] == "label" && header[2] == "probability",
          path.string() + ": header must start with id,label,probability");
  std::size_t d = 0;
  std::size_t nf = 0;
  for (std::size_t k = 3; k < header.size(); ++k) {
    if (header[k] == "emb_" + std::to_string(d) && nf == 0) ++d;
    else if (header[k] == "layerw_" + std::to_string(nf)) ++nf;
    else throw Error(path.string() + ": unexpected column '" + header[k] + "'");
  }
  EmbeddingTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = csv_split(line);
    require(f.size() == header.size(), where + ": expected " + std::to_string(header.size()) + " fields");
    EmbeddingRecord r;
    r.id = f[0];
    const double label = parse_double(f[1], where);
    require(label == 0.0 || label == 1.0, where + ": label must be 0 or 1");
    r.label = static_cast<int>(label);
    r.probability = parse_double(f[2], where);
    for (std::size_t k = 0; k < d; ++k) r.embedding.push_back(parse_double(f[3 + k], where));
    for (std::size_t k = 0; k < nf; ++k) r.layer_weights.push_back(parse_double(f[3 + d + k], where));
    table.rows.push_back(std::move(r));
  }
  return table;
}

const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"age", "gender", "ethnicity", "admission_type", "admission_location",
                                  "unit", "height", "weight", "smoker", "alcohol_abuse", "drug_abuse"};
    for (const char* block : {"gcs", "sofa"})
      for (const char* s : {"max", "min", "first", "last", "mean", "std"})
        c.push_back(std::string(block) + "_" + s);
    for (const char* s : {"apache", "saps2", "oasis", "sirs", "lods", "meld"}) c.emplace_back(s);
    return c;
  }();
  return cols;
}

namespace {

std::vector<std::string> feature_values(const PatientRecord& r) {
  std::vector<std::string> v;
  const auto num = [&](const std::optional<double>& x) { v.push_back(x ? format_double(*x) : ""); };
  const auto cat = [&](const std::optional<std::string>& x) { v.push_back(x ? csv_escape(*x) : ""); };
  const auto tri = [&](const std::optional<TriState>& x) {
    if (!x) v.emplace_back();
    else v.emplace_back(*x == TriState::kYes ? "yes" : *x == TriState::kNo ? "no" : "unknown");
  };
  num(r.age);
  cat(r.gender);
  cat(r.ethnicity);
  cat(r.admission_type);
  cat(r.admission_location);
  cat(r.unit);
  num(r.height);
  num(r.weight);
  tri(r.smoker);
  tri(r.alcohol_abuse);
  tri(r.drug_abuse);
  for (const auto* s : {&r.gcs_stats, &r.sofa_stats}) {
    if (*s) {
      for (double x : {(*s)->max, (*s)->min, (*s)->first, (*s)->last, (*s)->mean, (*s)->std})
        v.push_back(format_double(x));
    } else {
      v.insert(v.end(), 6, "");
    }
  }
  for (const auto& x : {r.severity.apache, r.severity.saps2, r.severity.oasis, r.severity.sirs,
                        r.severity.lods, r.severity.meld})
    num(x);
  return v;
}

}  // namespace

void export_for_downstream(const EmbeddingTable& table, const std::vector<PatientRecord>& records,
                           const std::filesystem::path& path) {
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<std::string> missing;
  for (const auto& row : table.rows)
    if (!by_id.contains(row.id)) missing.push_back(row.id);
  if (!missing.empty()) {
    std::string msg = "embedding ids missing from records:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    if (missing.size() > 10) msg += " (+" + std::to_string(missing.size() - 10) + " more)";
    throw Error(msg);
  }
  const std::size_t d = table.rows.empty() ? 0 : table.rows.front().embedding.size();
  const std::size_t nf = table.rows.empty() ? 0 : table.rows.front().layer_weights.size();
  std::string out = "id";
  for (std::size_t k = 0; k < d; ++k) out += ",emb_" + std::to_string(k);
  for (std::size_t k = 0; k < nf; ++k) out += ",layerw_" + std::to_string(k);
  for (const auto& c : feature_columns()) out += "," + c;
  out += ",label\n";
  for (const auto& row : table.rows) {
    const PatientRecord& rec = *by_id.at(row.id);
    out += csv_escape(row.id);
    for (double v : row.embedding) out += "," + format_double(v);
    for (double v : row.layer_weights) out += "," + format_double(v);
    for (const auto& f : feature_values(rec)) out += "," + f;
    out += "," + std::to_string(rec.label) + "\n";
  }
  binary::write_file(path, out);
}

// --- hidden-state dumps ------------------------------------------------------

namespace {
constexpr char kDumpMagic[8] = {'A', 'L', 'F', 'I', 'A', 'H', 'S', 'D'};
constexpr std::uint32_t kDumpVersion = 1;
}  // namespace

void HiddenStateDump::validate() const {
  require(states.size() == masks.size(), "hidden-state dump: states and masks differ in count");
  for (std::size_t e = 0; e < states.size(); ++e) {
    const std::string at = "hidden-state dump: example " + std::to_string(e);
    require(states[e].size() == n_layers, at + " has the wrong number of layers");
    require(masks[e].size() == seq_len, at + " mask has the wrong length");
    for (double m : masks[e]) require(m == 0.0 || m == 1.0, at + " mask must be 0/1");
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Matrix& s = states[e][l];
      require(s.rows() == seq_len && s.cols() == d_model,
              at + " layer " + std::to_string(l) + " has the wrong shape");
      for (std::size_t i = 0; i < s.size(); ++i)
        require(std::isfinite(s[i]), at + " layer " + std::to_string(l) + " token " +
                                         std::to_string(i / d_model) + " dim " +
                                         std::to_string(i % d_model) + " is not finite");
    }
  }
}

HiddenStateDump dump_hidden_states(AlfiaModel& model, const Vocabulary& vocab,
                                   const std::vector<NarrativeDocument>& docs) {
  const int max_len = model.config().encoder.max_seq_len;
  TokenBatch batch;
  std::size_t longest = 0;
  for (const auto& d : docs) {
    batch.rows.push_back(tokenize(d, vocab, max_len, false));
    longest = std::max(longest, batch.rows.back().ids.size());
  }
  for (auto& row : batch.rows) {
    row.ids.resize(longest, Vocabulary::kPad);
    row.mask.resize(longest, 0.0);
  }
  const LayerStates states = encode(model.encoder(), batch, Mode::kEval);
  HiddenStateDump dump;
  dump.n_layers = states.layers.size();
  dump.seq_len = longest;
  dump.d_model = static_cast<std::size_t>(model.config().encoder.d_model);
  for (std::size_t e = 0; e < docs.size(); ++e) {
    dump.states.emplace_back();
    for (const auto& layer : states.layers) dump.states.back().push_back(layer[e]);
    dump.masks.push_back(batch.rows[e].mask);
  }
  return dump;
}

void write_hidden_states(const std::filesystem::path& path, const HiddenStateDump& dump) {
  dump.validate();
  binary::Writer w;
  w.put_raw(std::string_view(kDumpMagic, sizeof kDumpMagic));
  w.put(kDumpVersion);
  w.put(static_cast<std::uint64_t>(dump.states.size()));
  w.put(static_cast<std::uint64_t>(dump.n_layers));
  w.put(static_cast<std::uint64_t>(dump.seq_len));
  w.put(static_cast<std::uint64_t>(dump.d_model));
  for (std::size_t e = 0; e < dump.states.size(); ++e) {
    for (double m : dump.masks[e]) w.put(static_cast<std::uint8_t>(m == 1.0 ? 1 : 0));
    for (const Matrix& s : dump.states[e])
      for (double v : s.data()) w.put(v);
  }
  w.seal();
  binary::write_file(path, w.bytes());
}

HiddenStateDump read_hidden_states(const std::filesystem::path& path) {
  const std::string file = binary::read_file(path);
  const std::string ctx = "hidden-state dump " + path.string();
  require(file.size() >= sizeof kDumpMagic &&
              std::equal(kDumpMagic, kDumpMagic + sizeof kDumpMagic, file.begin()),
          ctx + ": malformed header (bad magic)");
  binary::Reader r(binary::checked_payload(file, ctx), ctx);
  r.get_raw(sizeof kDumpMagic);
  const auto version = r.get<std::uint32_t>();
  require(version == kDumpVersion, ctx + ": unsupported version " + std::to_string(version));
  HiddenStateDump dump;
  const auto n = r.get<std::uint64_t>();
  dump.n_layers = r.get<std::uint64_t>();
  dump.seq_len = r.get<std::uint64_t>();
  dump.d_model = r.get<std::uint64_t>();
  require(dump.n_layers >= 1 && dump.seq_len >= 1 && dump.d_model >= 1,
          ctx + ": malformed header (zero dimension)");
  const std::size_t per_example = dump.seq_len + dump.n_layers * dump.seq_len * dump.d_model * 8;
  require(per_example > 0 && r.remaining() / per_example == n && r.remaining() % per_example == 0,
          ctx + ": payload size disagrees with the header shapes");
  for (std::uint64_t e = 0; e < n; ++e) {
    std::vector<double> mask(dump.seq_len);
    for (std::size_t t = 0; t < dump.seq_len; ++t) {
      const auto m = r.get<std::uint8_t>();
      require(m <= 1, ctx + ": example " + std::to_string(e) + " token " + std::to_string(t) +
                          " has mask byte " + std::to_string(m));
      mask[t] = m;
    }
    std::vector<Matrix> layers;
    for (std::size_t l = 0; l < dump.n_layers; ++l) {
      Matrix s(dump.seq_len, dump.d_model);
      for (double& v : s.data()) v = r.get<double>();
      layers.push_back(std::move(s));
    }
    dump.masks.push_back(std::move(mask));
    dump.states.push_back(std::move(layers));
  }
  try {
    dump.validate();
  } catch (const Error& err) {
    throw Error(path.string() + ": " + err.what());
  }
  return dump;
}

SelectedStates ingest_hidden_states(const std::filesystem::path& path, int n_f) {
  HiddenStateDump dump = read_hidden_states(path);
  require(n_f >= 0 && static_cast<std::size_t>(n_f) <= dump.n_layers,
          "N_f = " + std::to_string(n_f) + " exceeds the " + std::to_string(dump.n_layers) +
              " layers available in " + path.string());
  SelectedStates out;
  for (auto& layers : dump.states)
    out.layers.push_back(select_top_layers(layers, n_f));
  out.masks = std::move(dump.masks);
  return out;
}

}  // namespace alfia
