#pragma once

// Pairwise knowledge metrics. K_q is the fraction of (correct, incorrect) pairs
// a scorer orders strictly correctly; ties are losses. K averages K_q over the
// paraphrases of a fact and K* flags perfect ranking.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hk/candidates.hpp"
#include "hk/scoring.hpp"

namespace hk {

struct PairSet {
  std::string question_id;
  std::vector<std::pair<std::string, std::string>> pairs;  // (correct, incorrect) answer_norm
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
};

/// Cross product of correct and incorrect candidates. Throws State on any
/// candidate that is not labeled correct or incorrect.
PairSet enumerate_pairs(const AnswerSet& set);

enum class EdgeCase { NoCorrectSampled, AllCorrect };
std::string_view to_string(EdgeCase e);

enum class AllCorrectPolicy { Exclude, AssignOne };

struct KResult {
  std::string question_id;
  ScorerKind scorer = ScorerKind::PAQ;
  double k_q = 0.0;
  std::size_t wins = 0;
  std::size_t pairs = 0;
  double k = 0.0;
  int k_star = 0;
  std::optional<EdgeCase> edge;
  bool excluded = false;  // left out of dataset means

  bool operator==(const KResult&) const = default;
};

/// Per-question fragment: k and k_star mirror k_q until paraphrases are merged.
KResult k_q(const PairSet& pairs, const ScoreTable& scores, ScorerKind scorer,
            AllCorrectPolicy policy = AllCorrectPolicy::Exclude);

/// Mean of K_q over the paraphrases of one fact. Throws Arity on empty input.
double k(const std::vector<double>& question_results);

/// 1 iff k == 1 exactly.
int k_star(double k);

/// Scores every set. Questions sharing a fact key (when given) have their K
/// averaged across paraphrases; otherwise K = K_q.
std::vector<KResult> compute_kresults(const std::vector<AnswerSet>& sets, const ScoreTable& scores, ScorerKind scorer,
                                      AllCorrectPolicy policy = AllCorrectPolicy::Exclude,
                                      const std::map<std::string, std::string>* fact_key_of = nullptr);

/// Finite stand-in for answers outside the plausible set (wrong type, gibberish).
struct ChallengeSet {
  std::string question_id;
  std::vector<std::string> answers;  // normalized; scored in the same ScoreTable
};

/// 1 iff every plausible candidate outscores every challenge answer. Vacuously 1 when empty.
int gamma_check(const AnswerSet& plausible, const ChallengeSet& challenge, const ScoreTable& scores, ScorerKind scorer);

double k_q_extended(int gamma, double k_q);

struct AucCheck {
  double k_q = 0.0;
  double auc_strict = 0.0;
  double auc_half_ties = 0.0;
  std::size_t tied_pairs = 0;
};

/// Recomputes K_q through a sort-based AUC and asserts agreement (State error on mismatch).
AucCheck auc_crosscheck(const PairSet& pairs, const AnswerSet& set, const ScoreTable& scores, ScorerKind scorer);

nlohmann::json to_json(const KResult& r);
KResult kresult_from_json(const nlohmann::json& obj, std::size_t line = 0);

}  // namespace hk
