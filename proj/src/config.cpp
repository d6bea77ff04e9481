#include "alfia/config.hpp"

#include <fstream>
#include <set>

#include "alfia/error.hpp"

namespace alfia {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and rejects any it was not asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), "config section '" + label() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error("config key '" + where(key) + "' has the wrong type");
    }
  }

  void get_int(const char* key, int& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    require(v.is_number_integer(), "config key '" + where(key) + "' must be an integer");
    out = v.get<int>();
  }

  void get_seed(const char* key, std::uint64_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0),
            "config key '" + where(key) + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      require(seen_.contains(k), "unknown config key '" + where(k) + "'");
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

const char* train_mode_name(TrainMode m) {
  return m == TrainMode::kAdapter ? "adapter" : "from-scratch";
}

TrainMode train_mode_from_name(const std::string& s) {
  if (s == "adapter") return TrainMode::kAdapter;
  if (s == "from-scratch") return TrainMode::kFromScratch;
  throw Error("train.mode must be 'adapter' or 'from-scratch', got '" + s + "'");
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  model.init_seed = s;
  train.seed = s;
  split.seed = s;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  split.validate();
}

json to_json(const ModelConfig& cfg) {
  json j;
  const auto& e = cfg.encoder;
  j["encoder"] = {{"vocab_size", e.vocab_size}, {"d_model", e.d_model}, {"n_layers", e.n_layers},
                  {"n_heads", e.n_heads},       {"d_ff", e.d_ff},       {"max_seq_len", e.max_seq_len},
                  {"dropout", e.dropout}};
  if (cfg.lora) {
    j["lora"] = {{"enabled", true},
                 {"rank", cfg.lora->rank},
                 {"alpha", cfg.lora->alpha},
                 {"dropout", cfg.lora->dropout},
                 {"targets", std::vector<std::string>(cfg.lora->targets.begin(), cfg.lora->targets.end())}};
  } else {
    j["lora"] = {{"enabled", false}};
  }
  const auto& f = cfg.fusion;
  j["fusion"] = {{"n_fuse", f.n_fuse}, {"n_heads", f.n_heads}, {"d_k", f.d_k}, {"d_v", f.d_v},
                 {"gating_enabled", f.gating_enabled}, {"dropout", f.dropout}};
  const auto& h = cfg.head;
  j["head"] = {{"n_heads", h.n_heads}, {"d_ff", h.d_ff}, {"dropout", h.dropout}, {"n_outputs", h.n_outputs}};
  j["init_seed"] = cfg.init_seed;
  return j;
}

namespace {

void read_model_sections(Section& root, ModelConfig& m) {
  if (root.has("encoder")) {
    Section s(root.at("encoder"), root.where("encoder"));
    auto& e = m.encoder;
    s.get_int("vocab_size", e.vocab_size);
    s.get_int("d_model", e.d_model);
    s.get_int("n_layers", e.n_layers);
    s.get_int("n_heads", e.n_heads);
    s.get_int("d_ff", e.d_ff);
    s.get_int("max_seq_len", e.max_seq_len);
    s.get("dropout", e.dropout);
    s.finish();
  }
  if (root.has("lora")) {
    Section s(root.at("lora"), root.where("lora"));
    bool enabled = true;
    s.get("enabled", enabled);
    LoraConfig l;
    s.get_int("rank", l.rank);
    s.get("alpha", l.alpha);
    s.get("dropout", l.dropout);
    if (s.has("targets")) {
      std::vector<std::string> t;
      s.get("targets", t);
      l.targets = std::set<std::string>(t.begin(), t.end());
    }
    s.finish();
    m.lora = enabled ? std::optional<LoraConfig>(l) : std::nullopt;
  }
  if (root.has("fusion")) {
    Section s(root.at("fusion"), root.where("fusion"));
    auto& f = m.fusion;
    s.get_int("n_fuse", f.n_fuse);
    s.get_int("n_heads", f.n_heads);
    s.get_int("d_k", f.d_k);
    s.get_int("d_v", f.d_v);
    s.get("gating_enabled", f.gating_enabled);
    s.get("dropout", f.dropout);
    s.finish();
  }
  if (root.has("head")) {
    Section s(root.at("head"), root.where("head"));
    auto& h = m.head;
    s.get_int("n_heads", h.n_heads);
    s.get_int("d_ff", h.d_ff);
    s.get("dropout", h.dropout);
    s.get_int("n_outputs", h.n_outputs);
    s.finish();
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  Section root(j, "");
  read_model_sections(root, m);
  root.get_seed("init_seed", m.init_seed);
  root.finish();
  return m;
}

json to_json(const RunConfig& cfg) {
  json j = to_json(cfg.model);
  j.erase("init_seed");
  j["seed"] = cfg.seed;
  j["data"] = {{"train", cfg.data.train.string()},
               {"val", cfg.data.val.string()},
               {"vocab", cfg.data.vocab.string()}};
  const auto& t = cfg.train;
  j["train"] = {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},       {"patience", t.patience},
                {"mode", train_mode_name(t.mode)},  {"weight_decay", t.weight_decay},
                {"clip_norm", t.clip_norm}};
  j["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}};
  return j;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  Section root(j, "");
  std::uint64_t seed = 42;
  root.get_seed("seed", seed);
  read_model_sections(root, cfg.model);
  if (root.has("data")) {
    Section s(root.at("data"), "data");
    std::string train, val, vocab;
    s.get("train", train);
    s.get("val", val);
    s.get("vocab", vocab);
    s.finish();
    const auto resolve = [&](const std::string& p) -> std::filesystem::path {
      if (p.empty()) return {};
      const std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    cfg.data = {resolve(train), resolve(val), resolve(vocab)};
  }
  if (root.has("train")) {
    Section s(root.at("train"), "train");
    auto& t = cfg.train;
    s.get("learning_rate", t.learning_rate);
    s.get_int("batch_size", t.batch_size);
    s.get_int("max_epochs", t.max_epochs);
    s.get_int("patience", t.patience);
    std::string mode = train_mode_name(t.mode);
    s.get("mode", mode);
    t.mode = train_mode_from_name(mode);
    s.get("weight_decay", t.weight_decay);
    s.get("clip_norm", t.clip_norm);
    s.finish();
  }
  if (root.has("split")) {
    Section s(root.at("split"), "split");
    s.get("train", cfg.split.train);
    s.get("val", cfg.split.val);
    s.get("test", cfg.split.test);
    s.finish();
  }
  root.finish();
  cfg.apply_seed(seed);
  // vocab_size 0 is filled from the vocabulary once it is known.
  RunConfig probe = cfg;
  if (probe.model.encoder.vocab_size == 0) probe.model.encoder.vocab_size = 1;
  probe.validate();
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

std::string make_snapshot(const RunConfig& cfg, const Vocabulary& vocab) {
  json j = to_json(cfg);
  j["vocab"] = vocab.tokens();
  return j.dump();
}

Snapshot parse_snapshot(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint config snapshot is not valid JSON: ") + e.what());
  }
  require(j.is_object() && j.contains("vocab"), "checkpoint config snapshot lacks a vocabulary");
  Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
  j.erase("vocab");
  return {run_config_from_json(j), std::move(vocab)};
}

}  // namespace alfia
