#pragma once

// Stage orchestration over persisted artifacts. Each stage reads files written
// by earlier stages, writes its own, and records input/output hashes so an
// unchanged re-run is a no-op.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hk/candidates.hpp"
#include "hk/metrics.hpp"
#include "hk/scoring.hpp"

namespace hk {

enum class Stage { Ingest, Assemble, Judge, Score, TrainProbe, Metrics, HiddenTest, Select, Analyze, Report };
inline constexpr Stage kAllStages[] = {Stage::Ingest,  Stage::Assemble,   Stage::Judge,  Stage::Score,
                                       Stage::TrainProbe, Stage::Metrics, Stage::HiddenTest, Stage::Select,
                                       Stage::Analyze, Stage::Report};
inline constexpr int kStageVersion = 1;

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

inline constexpr const char* kAllSuites[] = {"k", "hidden", "selection", "force-gold", "extreme"};

struct JudgeSettings {
  std::string endpoint;
  std::string model;
  std::filesystem::path offline_verdicts;  // when set, no HTTP calls are made
  int max_inflight = 4;
  int max_retries = 3;
  int timeout_ms = 60000;
  bool error_filters_question = true;
};

struct ProbeSettings {
  std::filesystem::path model;  // pretrained probe.json; skips training when set
  std::vector<int> layers;      // empty: every layer present in the store
  double l2 = 1e-3;
  double learning_rate = 1.0;
  int max_iterations = 5000;
  std::uint64_t seed = 0;
};

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path relations;  // empty: built-in relation table
  std::filesystem::path records;
  std::filesystem::path work_dir;
  std::filesystem::path output_dir;
  std::filesystem::path judge_annotations;  // optional human annotation summary
  JudgeSettings judge;
  std::vector<ScorerKind> scorers{ScorerKind::PAQ, ScorerKind::PNorm, ScorerKind::PTrue, ScorerKind::Probe};
  ProbeSettings probe;
  std::uint64_t bin_seed = 0;
  std::uint64_t selection_seed = 0;
  std::vector<std::string> suites{std::begin(kAllSuites), std::end(kAllSuites)};
  double alpha = 0.05;
  AllCorrectPolicy all_correct_policy = AllCorrectPolicy::Exclude;
  bool inject_aliases = false;
  std::size_t long_answer_threshold = 20;

  bool has_scorer(ScorerKind s) const;
  bool has_suite(std::string_view s) const;
  nlohmann::json to_json() const;  // paths as given, resolved against the config directory
  std::string hash() const;        // sha256 of the canonical json
};

/// Relative paths resolve against the directory holding the config file.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const nlohmann::json& obj, const std::filesystem::path& base_dir);

using EnvLookup = std::function<const char*(const char*)>;
/// HK_JUDGE_ENDPOINT replaces the judge endpoint; HK_WORKERS the judge concurrency.
void apply_env_overrides(PipelineConfig& config, const EnvLookup& getenv);

struct StageOutcome {
  Stage stage;
  bool up_to_date = false;
  std::vector<std::string> written;  // paths relative to the work or output directory
};

StageOutcome run_stage(Stage stage, const PipelineConfig& config, std::ostream& log);
std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, std::ostream& log);

/// {config_hash, seeds, stage, stage_version}; embedded in every artifact.
nlohmann::json provenance_of(const PipelineConfig& config, Stage stage);

std::vector<AnswerSet> load_answer_sets(const std::filesystem::path& path);
std::vector<KResult> load_kresults(const std::filesystem::path& path);

}  // namespace hk
