#include "alfia/clinical.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "alfia/error.hpp"
#include "alfia/ops.hpp"
#include "alfia/random.hpp"

namespace alfia {

using nlohmann::json;

namespace {

std::string one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  std::string s(buf);
  if (s == "-0.0") s = "0.0";
  return s;
}

std::string integer(double v) { return std::to_string(std::lround(v)); }

void check_stats(const StatsBlock& s, const char* name, double lo, double hi) {
  const std::string n(name);
  for (double v : {s.max, s.min, s.first, s.last, s.mean})
    require(std::isfinite(v) && v >= lo && v <= hi, n + " values must lie in [" + one_decimal(lo) +
                                                        ", " + one_decimal(hi) + "]");
  require(s.min <= s.mean && s.mean <= s.max, n + " requires min <= mean <= max");
  require(s.min <= s.first && s.first <= s.max && s.min <= s.last && s.last <= s.max,
          n + " first/last must lie within [min, max]");
  require(std::isfinite(s.std) && s.std >= 0.0, n + ".std must be non-negative");
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string stats_sentences(const std::string& abbr, const StatsBlock& s) {
  return "The " + abbr + " had a maximum of " + one_decimal(s.max) + ", a minimum of " +
         one_decimal(s.min) + ", a first value of " + one_decimal(s.first) +
         " and a last value of " + one_decimal(s.last) + ". The mean " + abbr + " was " +
         one_decimal(s.mean) + " with a standard deviation of " + one_decimal(s.std) + ".";
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || static_cast<unsigned char>(c) >= 0x80;
}

// Expands the first whole-word occurrence of each abbreviation.
std::string expand_abbreviations(std::string text) {
  for (const auto& [abbr, full] : abbreviation_table()) {
    std::size_t pos = 0;
    while ((pos = text.find(abbr, pos)) != std::string::npos) {
      const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
      const std::size_t end = pos + abbr.size();
      const bool right_ok = end == text.size() || !is_word_char(text[end]);
      if (left_ok && right_ok) {
        text.replace(pos, abbr.size(), full + " (" + abbr + ")");
        break;
      }
      pos = end;
    }
  }
  return text;
}

const char* tri_state_name(TriState t) {
  switch (t) {
    case TriState::kNo: return "no";
    case TriState::kYes: return "yes";
    case TriState::kUnknown: return "unknown";
  }
  return "unknown";
}

TriState tri_state_from(const std::string& s) {
  if (s == "no") return TriState::kNo;
  if (s == "yes") return TriState::kYes;
  if (s == "unknown") return TriState::kUnknown;
  throw Error("tri-state field must be yes, no or unknown, got '" + s + "'");
}

}  // namespace

void PatientRecord::validate() const {
  require(!id.empty(), "record id must not be empty");
  require(label == 0 || label == 1, "record " + id + ": label must be 0 or 1");
  if (age) require(std::isfinite(*age) && *age >= 18.0, "record " + id + ": age must be >= 18");
  if (height) require(std::isfinite(*height), "record " + id + ": height must be finite");
  if (weight) require(std::isfinite(*weight) && *weight > 0.0, "record " + id + ": weight must be positive");
  if (gcs_stats) check_stats(*gcs_stats, "gcs_stats", 3.0, 15.0);
  if (sofa_stats) check_stats(*sofa_stats, "sofa_stats", 0.0, 1e9);
  for (const auto& v : {severity.apache, severity.saps2, severity.oasis, severity.sirs,
                        severity.lods, severity.meld})
    if (v) require(std::isfinite(*v), "record " + id + ": severity scores must be finite");
}

const std::vector<std::pair<std::string, std::string>>& abbreviation_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"MICU", "medical intensive care unit"},
      {"SICU", "surgical intensive care unit"},
      {"CCU", "coronary care unit"},
      {"CVICU", "cardiac vascular intensive care unit"},
      {"TSICU", "trauma surgical intensive care unit"},
      {"BMI", "body mass index"},
      {"GCS", "Glasgow Coma Scale"},
      {"SOFA", "Sequential Organ Failure Assessment"},
      {"APACHE", "Acute Physiology and Chronic Health Evaluation"},
      {"SAPS II", "Simplified Acute Physiology Score II"},
      {"OASIS", "Oxford Acute Severity of Illness Score"},
      {"SIRS", "Systemic Inflammatory Response Syndrome"},
      {"LODS", "Logistic Organ Dysfunction Score"},
      {"MELD", "Model for End-Stage Liver Disease"},
  };
  return table;
}

NarrativeDocument encode_record(const PatientRecord& rec) {
  std::vector<std::string> sentences;

  // Demographics.
  if (rec.age && rec.gender)
    sentences.push_back("The patient is a " + integer(*rec.age) + "-year-old " + *rec.gender + ".");
  else if (rec.age)
    sentences.push_back("The patient is " + integer(*rec.age) + " years old.");
  else if (rec.gender)
    sentences.push_back("The patient is " + *rec.gender + ".");
  if (rec.ethnicity) sentences.push_back("Recorded ethnicity is " + *rec.ethnicity + ".");

  // Admission details.
  if (rec.admission_type) sentences.push_back("The admission type is " + *rec.admission_type + ".");
  if (rec.admission_location)
    sentences.push_back("The patient was admitted from " + *rec.admission_location + ".");
  if (rec.unit) sentences.push_back("The patient was cared for in the " + *rec.unit + ".");

  // Physical measurements.
  if (rec.height && rec.weight) {
    std::string s = "Height is " + one_decimal(*rec.height) + " cm and weight is " +
                    one_decimal(*rec.weight) + " kg";
    if (*rec.height > 0.0) {
      const double m = *rec.height / 100.0;
      s += ", giving a BMI of " + one_decimal(*rec.weight / (m * m));
    }
    sentences.push_back(s + ".");
  } else if (rec.height) {
    sentences.push_back("Height is " + one_decimal(*rec.height) + " cm.");
  } else if (rec.weight) {
    sentences.push_back("Weight is " + one_decimal(*rec.weight) + " kg.");
  }

  // Lifestyle.
  if (rec.smoker) {
    switch (*rec.smoker) {
      case TriState::kYes: sentences.push_back("The patient is a smoker."); break;
      case TriState::kNo: sentences.push_back("The patient is not a smoker."); break;
      case TriState::kUnknown: sentences.push_back("Smoking status is unknown."); break;
    }
  }
  const auto history = [&](const std::optional<TriState>& v, const std::string& what) {
    if (!v) return;
    switch (*v) {
      case TriState::kYes: sentences.push_back("There is a history of " + what + "."); break;
      case TriState::kNo: sentences.push_back("There is no history of " + what + "."); break;
      case TriState::kUnknown: sentences.push_back("History of " + what + " is unknown."); break;
    }
  };
  history(rec.alcohol_abuse, "alcohol abuse");
  history(rec.drug_abuse, "drug abuse");

  // Clinical scores.
  if (rec.gcs_stats) sentences.push_back(stats_sentences("GCS", *rec.gcs_stats));
  if (rec.sofa_stats) sentences.push_back(stats_sentences("SOFA", *rec.sofa_stats));
  std::vector<std::string> scores;
  const auto score = [&](const std::optional<double>& v, const std::string& name) {
    if (v) scores.push_back(name + " " + one_decimal(*v));
  };
  score(rec.severity.apache, "APACHE");
  score(rec.severity.saps2, "SAPS II");
  score(rec.severity.oasis, "OASIS");
  score(rec.severity.sirs, "SIRS");
  score(rec.severity.lods, "LODS");
  score(rec.severity.meld, "MELD");
  if (!scores.empty()) sentences.push_back("Severity scores are " + join_list(scores) + ".");

  if (sentences.empty()) sentences.push_back("No structured clinical details are available.");

  std::string text;
  for (const auto& s : sentences) text += (text.empty() ? "" : " ") + s;
  return {rec.id, expand_abbreviations(std::move(text)), rec.label};
}

// --- vocabulary and tokenizer ------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  const std::vector<std::string> reserved = {"[PAD]", "[UNK]", "[BOS]", "[EOS]"};
  if (tokens.empty()) tokens = reserved;
  require(tokens.size() >= reserved.size() &&
              std::equal(reserved.begin(), reserved.end(), tokens.begin()),
          "vocabulary must start with [PAD], [UNK], [BOS], [EOS]");
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const bool inserted = index_.emplace(tokens_[i], static_cast<int>(i)).second;
    require(inserted, "duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

int Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (is_word_char(c)) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary build_vocab(const std::vector<NarrativeDocument>& corpus, int min_freq) {
  require(!corpus.empty(), "cannot build a vocabulary from an empty corpus");
  std::map<std::string, long> counts;
  for (const auto& doc : corpus)
    for (auto& w : split_words(doc.text)) ++counts[w];
  std::vector<std::pair<std::string, long>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[BOS]", "[EOS]"};
  for (const auto& [w, c] : entries)
    if (c >= min_freq) tokens.push_back(w);
  return Vocabulary(std::move(tokens));
}

TokenRow tokenize(const NarrativeDocument& doc, const Vocabulary& vocab, int max_len, bool pad) {
  require(max_len >= 2, "max_len must leave room for [BOS] and [EOS]");
  const auto words = split_words(doc.text);
  const auto budget = static_cast<std::size_t>(max_len - 2);
  TokenRow row;
  row.ids.push_back(Vocabulary::kBos);
  for (std::size_t i = 0; i < words.size() && i < budget; ++i) row.ids.push_back(vocab.id(words[i]));
  row.ids.push_back(Vocabulary::kEos);
  row.mask.assign(row.ids.size(), 1.0);
  if (pad) {
    row.ids.resize(static_cast<std::size_t>(max_len), Vocabulary::kPad);
    row.mask.resize(static_cast<std::size_t>(max_len), 0.0);
  }
  return row;
}

// --- synthetic cohort -------------------------------------------------------

double calibrate_intercept(double prevalence, double slope) {
  require(prevalence > 0.0 && prevalence < 1.0, "prevalence must lie strictly between 0 and 1");
  // E[sigmoid(b + slope z)] by the trapezoid rule on [-10, 10].
  const auto expected = [slope](double b) {
    constexpr int kSteps = 8000;
    constexpr double kLo = -10.0;
    constexpr double kHi = 10.0;
    const double h = (kHi - kLo) / kSteps;
    double s = 0.0;
    for (int i = 0; i <= kSteps; ++i) {
      const double z = kLo + h * i;
      const double w = (i == 0 || i == kSteps) ? 0.5 : 1.0;
      s += w * ops::sigmoid(b + slope * z) * std::exp(-0.5 * z * z);
    }
    return s * h / std::sqrt(2.0 * M_PI);
  };
  double lo = -50.0;
  double hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < prevalence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

double round1(double v) { return std::round(v * 10.0) / 10.0; }

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items, const std::vector<double>& weights) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return items[d(rng)];
}

StatsBlock make_stats(Rng& rng, double mean, double spread, double lo, double hi) {
  StatsBlock s;
  s.mean = round1(std::clamp(mean, lo, hi));
  s.std = round1(std::abs(normal(rng, spread, 0.3 * spread)));
  s.min = round1(std::clamp(s.mean - s.std * uniform(rng, 1.0, 2.5), lo, s.mean));
  s.max = round1(std::clamp(s.mean + s.std * uniform(rng, 1.0, 2.5), s.mean, hi));
  s.first = round1(uniform(rng, s.min, s.max));
  s.last = round1(uniform(rng, s.min, s.max));
  s.first = std::clamp(s.first, s.min, s.max);
  s.last = std::clamp(s.last, s.min, s.max);
  return s;
}

TriState tri(Rng& rng, double p_yes, double p_unknown) {
  const double u = uniform(rng);
  if (u < p_unknown) return TriState::kUnknown;
  return u < p_unknown + p_yes ? TriState::kYes : TriState::kNo;
}

}  // namespace

std::vector<PatientRecord> generate_synthetic_cohort(int n, double prevalence, std::uint64_t seed) {
  require(n >= 1, "cohort size must be at least 1");
  require(prevalence > 0.0 && prevalence < 1.0, "prevalence must lie strictly between 0 and 1");
  const double intercept = calibrate_intercept(prevalence, kSeveritySlope);

  static const std::vector<std::string> ethnicities = {"white", "black", "hispanic", "asian",
                                                       "other", "unknown"};
  static const std::vector<std::string> admission_types = {"emergency", "urgent", "elective",
                                                           "observation"};
  static const std::vector<std::string> locations = {"the emergency room", "a physician referral",
                                                     "another hospital", "the operating room"};
  static const std::vector<std::string> units = {"MICU", "SICU", "CCU", "CVICU", "TSICU"};

  std::vector<PatientRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(i)});
    // Latent severity and a noisy view of it per instrument.
    const double z = normal(rng);
    const auto view = [&](double noise) { return z + normal(rng, 0.0, noise); };

    PatientRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "P%06d", i);
    r.id = id;
    r.age = std::round(std::clamp(normal(rng, 64.0 + 5.0 * view(1.0), 15.0), 18.0, 95.0));
    r.gender = uniform(rng) < 0.56 ? "male" : "female";
    r.ethnicity = pick(rng, ethnicities, {0.62, 0.11, 0.05, 0.04, 0.08, 0.10});
    r.admission_type = pick(rng, admission_types, {0.62, 0.18, 0.12, 0.08});
    r.admission_location = pick(rng, locations, {0.50, 0.20, 0.18, 0.12});
    r.unit = pick(rng, units, {0.35, 0.20, 0.17, 0.16, 0.12});
    if (uniform(rng) > 0.02) r.height = round1(std::clamp(normal(rng, 170.0, 10.6), 140.0, 205.0));
    r.weight = round1(std::clamp(normal(rng, 82.0, 20.0), 35.0, 200.0));
    r.smoker = tri(rng, 0.064, 0.05);
    r.alcohol_abuse = tri(rng, 0.01, 0.03);
    r.drug_abuse = tri(rng, 0.02, 0.10);

    // SOFA is deliberately the noisiest instrument.
    r.sofa_stats = make_stats(rng, 3.3 + 2.2 * view(1.6), 0.75, 0.0, 24.0);
    r.gcs_stats = make_stats(rng, 14.6 - 0.9 * std::max(0.0, view(0.8)) - 0.3 * view(0.8), 0.5,
                             3.0, 15.0);
    r.severity.apache = round1(std::max(0.0, 42.0 + 18.0 * view(0.8)));
    r.severity.saps2 = round1(std::max(0.0, 35.0 + 12.0 * view(0.8)));
    r.severity.oasis = round1(std::max(0.0, 30.5 + 7.5 * view(0.8)));
    r.severity.sirs = std::clamp(std::round(2.4 + 0.9 * view(1.0)), 0.0, 4.0);
    if (uniform(rng) < 0.75) r.severity.lods = round1(std::max(0.0, 4.1 + 2.5 * view(0.9)));
    if (uniform(rng) < 0.65) r.severity.meld = round1(std::max(6.0, 13.0 + 6.0 * view(1.0)));

    r.label = uniform(rng) < ops::sigmoid(intercept + kSeveritySlope * z) ? 1 : 0;
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

// --- splitting ---------------------------------------------------------------

void SplitSpec::validate() const {
  require(train > 0.0 && val > 0.0 && test > 0.0, "split ratios must be positive");
  require(std::abs(train + val + test - 1.0) < 1e-9, "split ratios must sum to 1");
}

namespace {

// Largest-remainder apportionment of total over ratios.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(total) * ratios[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

}  // namespace

DataSplit<NarrativeDocument> split_dataset(const std::vector<NarrativeDocument>& docs,
                                           const SplitSpec& spec) {
  spec.validate();
  const std::array<double, 3> ratios{spec.train, spec.val, spec.test};
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < docs.size(); ++i) (docs[i].label == 1 ? pos : neg).push_back(i);

  Rng rng = derive_rng(spec.seed, {0x73706c6974});
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  const auto sizes = apportion(docs.size(), ratios);
  const auto pos_counts = apportion(pos.size(), ratios);
  static const char* names[3] = {"train", "val", "test"};
  std::array<std::vector<NarrativeDocument>, 3> parts;
  std::size_t pi = 0;
  std::size_t ni = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    require(pos.empty() || pos_counts[s] > 0,
            std::string("split '") + names[s] + "' received no positive examples; increase n");
    require(pos_counts[s] <= sizes[s], "stratified split could not place positives");
    std::vector<std::size_t> idx(pos.begin() + static_cast<std::ptrdiff_t>(pi),
                                 pos.begin() + static_cast<std::ptrdiff_t>(pi + pos_counts[s]));
    pi += pos_counts[s];
    const std::size_t n_neg = sizes[s] - pos_counts[s];
    require(ni + n_neg <= neg.size(), "stratified split ran out of negatives");
    idx.insert(idx.end(), neg.begin() + static_cast<std::ptrdiff_t>(ni),
               neg.begin() + static_cast<std::ptrdiff_t>(ni + n_neg));
    ni += n_neg;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) parts[s].push_back(docs[i]);
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

// --- I/O ---------------------------------------------------------------------

namespace {

json stats_json(const StatsBlock& s) {
  return {{"max", s.max}, {"min", s.min}, {"first", s.first},
          {"last", s.last}, {"mean", s.mean}, {"std", s.std}};
}

StatsBlock stats_from(const json& j) {
  StatsBlock s;
  for (const auto& [k, v] : j.items()) {
    const double x = v.get<double>();
    if (k == "max") s.max = x;
    else if (k == "min") s.min = x;
    else if (k == "first") s.first = x;
    else if (k == "last") s.last = x;
    else if (k == "mean") s.mean = x;
    else if (k == "std") s.std = x;
    else throw Error("unknown stats field '" + k + "'");
  }
  for (const char* k : {"max", "min", "first", "last", "mean", "std"})
    require(j.contains(k), std::string("stats block missing '") + k + "'");
  return s;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  return out;
}

}  // namespace

std::string record_to_json_line(const PatientRecord& r) {
  json j;
  j["id"] = r.id;
  if (r.age) j["age"] = *r.age;
  if (r.gender) j["gender"] = *r.gender;
  if (r.ethnicity) j["ethnicity"] = *r.ethnicity;
  if (r.admission_type) j["admission_type"] = *r.admission_type;
  if (r.admission_location) j["admission_location"] = *r.admission_location;
  if (r.unit) j["unit"] = *r.unit;
  if (r.height) j["height"] = *r.height;
  if (r.weight) j["weight"] = *r.weight;
  if (r.smoker) j["smoker"] = tri_state_name(*r.smoker);
  if (r.alcohol_abuse) j["alcohol_abuse"] = tri_state_name(*r.alcohol_abuse);
  if (r.drug_abuse) j["drug_abuse"] = tri_state_name(*r.drug_abuse);
  if (r.gcs_stats) j["gcs_stats"] = stats_json(*r.gcs_stats);
  if (r.sofa_stats) j["sofa_stats"] = stats_json(*r.sofa_stats);
  json sev = json::object();
  const auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) sev[k] = *v;
  };
  put("apache", r.severity.apache);
  put("saps2", r.severity.saps2);
  put("oasis", r.severity.oasis);
  put("sirs", r.severity.sirs);
  put("lods", r.severity.lods);
  put("meld", r.severity.meld);
  if (!sev.empty()) j["severity"] = sev;
  j["label"] = r.label;
  return j.dump();
}

PatientRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed record line: ") + e.what());
  }
  require(j.is_object(), "record line is not an object");
  PatientRecord r;
  require(j.contains("id") && j.contains("label"), "record requires 'id' and 'label'");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "id") r.id = v.get<std::string>();
      else if (k == "label") r.label = v.get<int>();
      else if (k == "age") r.age = v.get<double>();
      else if (k == "gender") r.gender = v.get<std::string>();
      else if (k == "ethnicity") r.ethnicity = v.get<std::string>();
      else if (k == "admission_type") r.admission_type = v.get<std::string>();
      else if (k == "admission_location") r.admission_location = v.get<std::string>();
      else if (k == "unit") r.unit = v.get<std::string>();
      else if (k == "height") r.height = v.get<double>();
      else if (k == "weight") r.weight = v.get<double>();
      else if (k == "smoker") r.smoker = tri_state_from(v.get<std::string>());
      else if (k == "alcohol_abuse") r.alcohol_abuse = tri_state_from(v.get<std::string>());
      else if (k == "drug_abuse") r.drug_abuse = tri_state_from(v.get<std::string>());
      else if (k == "gcs_stats") r.gcs_stats = stats_from(v);
      else if (k == "sofa_stats") r.sofa_stats = stats_from(v);
      else if (k == "severity") {
        for (const auto& [sk, sv] : v.items()) {
          const double x = sv.get<double>();
          if (sk == "apache") r.severity.apache = x;
          else if (sk == "saps2") r.severity.saps2 = x;
          else if (sk == "oasis") r.severity.oasis = x;
          else if (sk == "sirs") r.severity.sirs = x;
          else if (sk == "lods") r.severity.lods = x;
          else if (sk == "meld") r.severity.meld = x;
          else throw Error("unknown severity field '" + sk + "'");
        }
      } else {
        throw Error("unknown record field '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("record field has the wrong type: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<PatientRecord> read_records(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<PatientRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<PatientRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

std::vector<NarrativeDocument> read_documents(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<NarrativeDocument> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const json j = json::parse(line);
      NarrativeDocument d{j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                          j.at("label").get<int>()};
      for (const auto& [k, v] : j.items())
        require(k == "id" || k == "text" || k == "label", where + "unknown document field '" + k + "'");
      require(d.label == 0 || d.label == 1, where + "label must be 0 or 1");
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw Error(where + "malformed document: " + e.what());
    }
  }
  return out;
}

void write_documents(const std::filesystem::path& path, const std::vector<NarrativeDocument>& docs) {
  auto out = open_out(path);
  for (const auto& d : docs) out << json{{"id", d.id}, {"text", d.text}, {"label", d.label}}.dump() << '\n';
}

Vocabulary read_vocab(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = open_out(path);
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

}  // namespace alfia
