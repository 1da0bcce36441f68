#pragma once

// Plausible-answer set assembly: greedy output + temperature samples, deduplicated
// by normalized form, with the gold answer injected when the model never produced it.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hk/corpus.hpp"
#include "hk/records.hpp"
#include "hk/text.hpp"

namespace hk {

struct AnswerSetFlags {
  bool all_correct = false;          // no incorrect candidate: nothing to compare against
  bool no_correct_sampled = false;   // only the injected gold (if any) is correct

  bool operator==(const AnswerSetFlags&) const = default;
};

struct AnswerSet {
  std::string question_id;
  // Greedy first, then samples in first-seen order, then the injected gold.
  std::vector<CandidateRecord> candidates;
  bool gold_injected = false;
  std::int64_t sample_total = 0;
  AnswerSetFlags flags;
  // Set by adjudication when a wrong-gold or error verdict disqualifies the question.
  bool filtered = false;

  const CandidateRecord* find(const std::string& answer_norm) const;
  const CandidateRecord* greedy() const;
  const CandidateRecord* injected_gold() const;
  bool operator==(const AnswerSet&) const = default;
};

struct AssemblyOptions {
  // Also inject aliases of the gold answer when none of them was sampled.
  bool inject_aliases = false;
};

/// True iff `answer_norm` equals the normalized gold or any normalized alias.
bool matches_gold(const std::string& answer_norm, const Fact& fact);

AnswerSet assemble_answer_set(const Question& question, const std::string& greedy,
                              const std::vector<std::string>& samples, const AssemblyOptions& options = {});

/// Recomputes AllCorrect / NoCorrectSampled from the current verdicts.
void update_flags(AnswerSet& set);

/// The same set with any injected gold removed (the sampled-only condition).
AnswerSet without_injected_gold(const AnswerSet& set);

/// Copies evidence (logprobs, logits, hidden refs) from the store into each candidate.
/// Candidates absent from the store keep empty evidence.
void attach_evidence(AnswerSet& set, const RecordStore& store);

/// Element i is the summed P(a|q) of the distinct answers seen in samples[0..i].
std::vector<double> probability_mass_curve(const std::vector<std::string>& samples_in_order,
                                           const std::map<std::string, double>& paq_by_answer);

struct AnswerStats {
  std::map<std::size_t, std::size_t> unique_answers;   // unique answers per question -> #questions
  std::map<std::size_t, std::size_t> unique_correct;   // unique correct answers per question -> #questions
  std::size_t long_form = 0;                           // candidates above the length threshold
  std::size_t questions = 0;

  bool operator==(const AnswerStats&) const = default;
};

/// Token length: logprob count when available, else whitespace tokens of the raw answer.
std::size_t answer_length(const CandidateRecord& c);

AnswerStats answer_stats(const std::vector<AnswerSet>& sets, std::size_t long_threshold);

/// Optional policy: drop candidates longer than the threshold (never the greedy or injected gold).
AnswerSet filter_long_answers(const AnswerSet& set, std::size_t threshold);

nlohmann::json to_json(const AnswerSet& set);
AnswerSet answer_set_from_json(const nlohmann::json& obj, std::size_t line = 0);

}  // namespace hk
