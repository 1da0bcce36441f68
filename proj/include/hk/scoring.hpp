#pragma once

// Scoring functions over stored evidence. Three are external (token-level
// probabilities only), one is internal (a probe over hidden states).

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "hk/candidates.hpp"
#include "hk/probe_model.hpp"
#include "hk/records.hpp"

namespace hk {

enum class ScorerKind { PAQ, PNorm, PTrue, Probe };
enum class Channel { External, Internal };

Channel channel(ScorerKind kind);
std::string_view to_string(ScorerKind kind);
ScorerKind scorer_from_string(std::string_view s);
inline constexpr ScorerKind kAllScorers[] = {ScorerKind::PAQ, ScorerKind::PNorm, ScorerKind::PTrue, ScorerKind::Probe};

/// P(a|q): exp of the summed token logprobs.
double score_paq(const CandidateRecord& record);
/// Length-normalized P(a|q): exp of the mean token logprob.
double score_pnorm(const CandidateRecord& record);
/// Two-way softmax over the verification logits for "A" (true) and "B" (false).
double score_ptrue(const CandidateRecord& record);
double score_ptrue(double logit_true, double logit_false);
double score_probe(const CandidateRecord& record, const ProbeModel& probe, const RecordStore& store);

struct ScoreKey {
  std::string question_id;
  std::string answer_norm;
  ScorerKind scorer;

  auto operator<=>(const ScoreKey&) const = default;
};

class ScoreTable {
 public:
  void set(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer, double score);
  /// Throws Lookup when absent.
  double get(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer) const;
  std::optional<double> try_get(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer) const;
  bool contains(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer) const;
  std::size_t size() const { return scores_.size(); }
  const std::map<ScoreKey, double>& entries() const { return scores_; }
  bool operator==(const ScoreTable&) const = default;

 private:
  std::map<ScoreKey, double> scores_;
};

/// Scores every candidate of every set with each scorer. Probe requires both
/// `probe` and `store`; evidence errors name the (question, answer, scorer).
ScoreTable build_score_table(const std::vector<AnswerSet>& sets, const std::vector<ScorerKind>& scorers,
                             const ProbeModel* probe = nullptr, const RecordStore* store = nullptr);

/// scores.jsonl: {question_id, answer_norm, scorer, score}
std::string score_lines(const ScoreTable& table);
ScoreTable load_scores(const std::filesystem::path& path);

}  // namespace hk
