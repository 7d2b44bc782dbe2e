#pragma once

// Data-generation and curation mechanics: pass@k bucketing, RL-set sampling,
// quality filtering, chart information density, and the resumable
// provider-backed stages (generate, judge, reconstruct, filter).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focusrl/focus_trace.hpp"
#include "focusrl/jsonl.hpp"
#include "focusrl/provider.hpp"
#include "focusrl/rewards.hpp"

namespace focusrl::pipeline {

using jsonl::Json;

enum class Bucket { Easy, Medium, Hard };

std::string_view to_string(Bucket b);
std::optional<Bucket> parse_bucket(std::string_view s);

struct CandidatePath {
  std::string text;
  std::optional<bool> correct;  ///< unset until judged

  friend bool operator==(const CandidatePath&, const CandidatePath&) = default;
};

/// One training sample. Fields this struct does not know about are kept in
/// `extra` and written back unchanged.
struct SampleRecord {
  std::string id;
  std::string image;  ///< path or URL
  std::string question;
  std::string ground_truth;
  AnswerType answer_type = AnswerType::Exact;  ///< inferred when absent
  std::vector<CandidatePath> paths;
  std::optional<int> pass_count;
  std::optional<Bucket> bucket;
  Json extra = Json::object();

  /// Throws std::invalid_argument.
  void validate() const;
  AnswerSpec answer_spec() const { return {ground_truth, answer_type}; }

  Json to_json() const;
  /// Throws std::invalid_argument on missing or mistyped fields.
  static SampleRecord from_json(const Json& j);
};

/// Number of correct paths. Throws std::invalid_argument when empty.
int pass_at_k(const std::vector<bool>& judgements);

struct BucketThresholds {
  int hi = 7;  ///< Easy iff pass_count >= hi
  int lo = 0;  ///< Hard iff pass_count <= lo

  void validate() const;
};

Bucket bucket_for(int pass_count, const BucketThresholds& t);

struct BucketResult {
  std::vector<SampleRecord> records;  ///< bucketed records, input order
  std::vector<std::string> warnings;  ///< one per skipped record
};

/// Records without pass_count are skipped with a warning.
BucketResult bucket_samples(std::vector<SampleRecord> records,
                            const BucketThresholds& t);

/// Largest-remainder apportionment of `total` over `weights` (ties go to the
/// lower index). Zero weights get zero seats.
std::vector<std::size_t> largest_remainder(std::span<const double> weights,
                                           std::size_t total);

inline constexpr std::array<double, 3> kRlRatio = {1.0, 7.0, 2.0};

struct RlSelection {
  std::vector<std::string> rl_ids;  ///< Easy, then Medium, then Hard; input order within
  std::array<std::size_t, 3> counts{};
  std::vector<std::string> cold_start_ids;  ///< unselected Easy and Hard
  std::vector<std::string> warnings;
};

/// Seeded sample of `total_n` ids at the given Easy:Medium:Hard ratio. Empty
/// buckets drop out of the ratio; a bucket smaller than its quota is taken
/// whole and the shortfall re-apportioned over the others. Throws
/// std::invalid_argument when fewer than total_n bucketed records exist or
/// ids repeat.
RlSelection sample_rl_set(std::span<const SampleRecord> records,
                          std::size_t total_n, std::uint64_t seed,
                          std::array<double, 3> ratio = kRlRatio);

struct QualityConfig {
  RewardConfig reward;
  double max_penalty = 0.5;
  bool require_correct = true;

  void validate() const;
};

struct QualityVerdict {
  bool kept = false;
  std::vector<std::string> reasons;  ///< "format", "answer", "redundancy"
  FormatClass format = FormatClass::Malformed;
  double accuracy = 0.0;
  double p_redundancy = 0.0;
};

/// Rule-based review of a Focus-CoT text.
QualityVerdict quality_filter(std::string_view text, const AnswerSpec& spec,
                              const QualityConfig& cfg);

struct ChartIdScores {
  int s_rich = 1;
  int s_eff = 1;
  int s_clar = 1;
  int s_inter = 1;

  /// Throws std::invalid_argument when a score is outside [1, 5].
  void validate() const;
};

/// s_rich/2 + s_eff/5 + s_clar/5 + s_inter/10, evaluated in exact tenths.
double chart_id(const ChartIdScores& s);

inline constexpr double kHidThreshold = 3.7;

struct ChartRecord {
  std::string id;
  ChartIdScores scores;
};

std::vector<ChartRecord> filter_hid(std::span<const ChartRecord> charts,
                                    double threshold = kHidThreshold);

// ---------------------------------------------------------------------------
// Stages

enum class Stage { Generate, Judge, Reconstruct, Filter };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

enum class JudgeMode { Rule, Llm };

struct StageConfig {
  Stage stage = Stage::Generate;
  std::filesystem::path input;
  std::filesystem::path output;
  bool resume = false;  ///< required to append to a non-empty output
  std::filesystem::path prompt_dir;
  std::string model;
  int paths_per_sample = 8;
  double temperature = 1.0;
  int max_tokens = 1024;
  JudgeMode judge_mode = JudgeMode::Rule;
  BucketThresholds thresholds;
  QualityConfig quality;
  bool llm_filter = false;
  std::size_t jobs = 1;

  void validate() const;
};

enum class ErrorKind { Validation, Provider, Io };

std::string_view to_string(ErrorKind k);

struct RecordError {
  std::string id;
  std::size_t line = 0;
  ErrorKind kind = ErrorKind::Validation;
  std::string message;
};

struct StageReport {
  Stage stage = Stage::Generate;
  std::size_t total = 0;      ///< records in the input
  std::size_t skipped = 0;    ///< already present in the output
  std::size_t processed = 0;  ///< written this run
  std::vector<RecordError> errors;
  std::vector<std::string> warnings;

  std::size_t failed() const { return errors.size(); }
  std::size_t count(ErrorKind k) const;
};

/// Error sidecar next to a stage output.
std::filesystem::path errors_path(const std::filesystem::path& output);
/// Provider call log next to a stage output.
std::filesystem::path calls_path(const std::filesystem::path& output);

/// Runs one stage over the input records. Output is append-only and keyed by
/// id; records already in the output are skipped. Per-record failures go to
/// errors_path(output) and are retried by a later resume. `provider` may be
/// null for stages that do not need one. Throws jsonl::IoError when the input
/// or prompts cannot be read, std::invalid_argument on bad configuration.
StageReport run_stage(const StageConfig& cfg, Provider* provider);

/// Loads `<dir>/<name>.txt` and replaces each {{key}} with its value.
std::string render_prompt(const std::filesystem::path& dir, std::string_view name,
                          std::span<const std::pair<std::string, std::string>> vars);

/// Reads a judge reply: leading "correct"/"yes"/"pass" or
/// "incorrect"/"no"/"fail"/"wrong". Throws ProviderError otherwise.
bool parse_verdict(std::string_view reply);

}  // namespace focusrl::pipeline
