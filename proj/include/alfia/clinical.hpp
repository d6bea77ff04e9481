#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "alfia/backbone.hpp"

namespace alfia {

enum class TriState { kNo, kYes, kUnknown };

// Summary statistics of a repeated bedside assessment over the first day.
struct StatsBlock {
  double max = 0.0;
  double min = 0.0;
  double first = 0.0;
  double last = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

struct SeverityScores {
  std::optional<double> apache;
  std::optional<double> saps2;
  std::optional<double> oasis;
  std::optional<double> sirs;
  std::optional<double> lods;
  std::optional<double> meld;
};

// One ICU stay. Every field except id and label is optional.
struct PatientRecord {
  std::string id;
  std::optional<double> age;
  std::optional<std::string> gender;
  std::optional<std::string> ethnicity;
  std::optional<std::string> admission_type;
  std::optional<std::string> admission_location;
  std::optional<std::string> unit;
  std::optional<double> height;  // cm
  std::optional<double> weight;  // kg
  std::optional<TriState> smoker;
  std::optional<TriState> alcohol_abuse;
  std::optional<TriState> drug_abuse;
  std::optional<StatsBlock> gcs_stats;
  std::optional<StatsBlock> sofa_stats;
  SeverityScores severity;
  int label = 0;

  // Throws on violated range invariants (age >= 18, GCS in [3, 15], ...).
  void validate() const;
};

struct NarrativeDocument {
  std::string id;
  std::string text;
  int label = 0;
};

// Renders a record as clinical prose. Pure and deterministic.
NarrativeDocument encode_record(const PatientRecord& rec);

// Abbreviation -> expansion table used by encode_record.
const std::vector<std::pair<std::string, std::string>>& abbreviation_table();

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercased runs of letters/digits; everything else separates words.
std::vector<std::string> split_words(const std::string& text);

// Reserved tokens first, then words with count >= min_freq ordered by
// descending frequency and then lexicographically.
Vocabulary build_vocab(const std::vector<NarrativeDocument>& corpus, int min_freq);

// [BOS] words [EOS], truncated to max_len (still ending in [EOS]) and, when
// pad is set, padded with [PAD] up to max_len.
TokenRow tokenize(const NarrativeDocument& doc, const Vocabulary& vocab, int max_len, bool pad = true);

// Synthetic ICU cohort. A latent severity drives SOFA, GCS and the
// severity scores jointly and sets mortality through a logistic link whose
// intercept is calibrated to the requested prevalence.
std::vector<PatientRecord> generate_synthetic_cohort(int n, double prevalence, std::uint64_t seed);

// Logistic slope of mortality on latent severity used by the generator.
inline constexpr double kSeveritySlope = 2.5;
// Intercept b such that E[sigmoid(b + slope * z)] = prevalence for z ~ N(0, 1).
double calibrate_intercept(double prevalence, double slope);

struct SplitSpec {
  double train = 0.75;
  double val = 0.125;
  double test = 0.125;
  std::uint64_t seed = 42;

  void validate() const;
};

template <typename T>
struct DataSplit {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

// Stratified seeded partition. Split sizes are within 1 of n * ratio.
DataSplit<NarrativeDocument> split_dataset(const std::vector<NarrativeDocument>& docs,
                                           const SplitSpec& spec);

// Line-delimited JSON I/O.
std::vector<PatientRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<PatientRecord>& records);
std::vector<NarrativeDocument> read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, const std::vector<NarrativeDocument>& docs);
Vocabulary read_vocab(const std::filesystem::path& path);
void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab);

std::string record_to_json_line(const PatientRecord& rec);
PatientRecord record_from_json_line(const std::string& line);

}  // namespace alfia
