#pragma once

// Experiment suites built on the metrics: test-time answer selection,
// sampled-only vs gold-injected comparisons, extreme hidden knowledge, and
// the deterministic report bundle.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hk/candidates.hpp"
#include "hk/judge.hpp"
#include "hk/metrics.hpp"
#include "hk/scoring.hpp"
#include "hk/stats.hpp"

namespace hk {

enum class SelectionMethod { Greedy, Random, Majority, ArgmaxPAQ, ArgmaxProbe, Oracle, ProbeWithGold };
inline constexpr SelectionMethod kAllSelectionMethods[] = {
    SelectionMethod::Greedy,      SelectionMethod::Random, SelectionMethod::Majority,     SelectionMethod::ArgmaxPAQ,
    SelectionMethod::ArgmaxProbe, SelectionMethod::Oracle, SelectionMethod::ProbeWithGold};

std::string_view to_string(SelectionMethod m);
SelectionMethod selection_method_from_string(std::string_view s);

/// Picks one candidate. ProbeWithGold expects the gold-injected set; every other
/// method expects the sampled-only set. Random draws over raw samples with
/// multiplicity from a generator seeded by (seed, question_id).
const CandidateRecord& select_answer(SelectionMethod method, const AnswerSet& set, const ScoreTable& scores,
                                     std::uint64_t seed);

struct MethodResult {
  SelectionMethod method;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::optional<PairedTTestResult> vs_greedy;  // absent for Greedy itself
  double relative_improvement = 0.0;           // (acc - greedy) / greedy
  std::map<std::string, std::string> choices;  // question_id -> answer_norm
};

struct SelectionReport {
  std::vector<MethodResult> methods;
  std::size_t questions = 0;
  std::size_t bins = 0;
  std::uint64_t seed = 0;

  const MethodResult* find(SelectionMethod m) const;
};

/// `sets` are adjudicated gold-injected sets; sampled-only views are derived
/// internally. Significance uses up to 200 bins (fewer when the dataset is smaller).
SelectionReport selection_experiment(const std::vector<AnswerSet>& sets, const ScoreTable& scores,
                                     const std::vector<SelectionMethod>& methods, std::uint64_t seed,
                                     std::size_t max_bins = kSelectionTestBins);

struct ForceGoldRow {
  ScorerKind scorer;
  std::string relation;  // "all" for the pooled row
  std::size_t questions = 0;
  double k_sampled = 0, k_gold = 0;
  double kstar_sampled = 0, kstar_gold = 0;
  double k_change_pct = 0, kstar_change_pct = 0;
};

/// Per scorer and relation, mean K and K* without and with gold injection.
std::vector<ForceGoldRow> force_gold_comparison(const std::map<ScorerKind, std::vector<KResult>>& with_gold,
                                                const std::map<ScorerKind, std::vector<KResult>>& sampled_only,
                                                const std::map<std::string, std::string>& relation_of);

inline constexpr double kExtremePaqThreshold = 0.01;

/// No correct answer sampled, P(a|q) of the injected gold < 0.01, and probe K* = 1 on the injected set.
bool extreme_hidden_knowledge(const AnswerSet& set_with_gold, const ScoreTable& scores, const KResult& probe_result);

struct ExtremeRate {
  std::size_t count = 0;
  std::size_t total = 0;
  double rate = 0.0;
  std::vector<std::string> question_ids;
};

ExtremeRate extreme_hidden_knowledge_rate(const std::vector<AnswerSet>& sets_with_gold, const ScoreTable& scores,
                                          const std::vector<KResult>& probe_results);

/// Everything a report may draw on; absent pieces simply omit their files.
struct ReportInputs {
  nlohmann::json provenance = nlohmann::json::object();
  std::map<std::string, std::string> relation_of;                     // question_id -> relation
  std::map<ScorerKind, std::vector<KResult>> kresults;                // gold-injected condition
  std::optional<std::map<std::string, HiddenKnowledgeReport>> hidden;  // key: "<relation>/<metric>"
  std::optional<SelectionReport> selection;
  std::optional<std::vector<ForceGoldRow>> force_gold;
  std::optional<ExtremeRate> extreme;
  std::optional<AnswerStats> answer_stats;
  std::optional<JudgeQuality> judge_quality;
};

/// filename -> content; always contains manifest.json. Byte-identical for equal inputs.
std::map<std::string, std::string> emit_report(const ReportInputs& inputs);
void write_report(const std::filesystem::path& dir, const std::map<std::string, std::string>& bundle);

nlohmann::json to_json(const SelectionReport& r);

}  // namespace hk
