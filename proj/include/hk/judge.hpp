#pragma once

// Candidate adjudication: normalized exact match first, then a program-guided
// LLM judge whose letter grade is parsed and sanity-checked against its own reasoning.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hk/candidates.hpp"
#include "hk/corpus.hpp"
#include "hk/error.hpp"
#include "hk/records.hpp"

namespace hk {

struct JudgeConfig {
  std::string endpoint;  // full URL of a chat-completions route
  std::string model;
  std::map<std::string, std::string> templates;  // relation id -> prompt template
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  int max_inflight = 4;
  // A single error verdict filters the whole question unless this is false.
  bool error_filters_question = true;
};

/// Builds a program-guided template. `topic` completes "a question about ..."
/// and `entity` names the expected entity type ("person", "company", ...).
std::string program_guided_template(const std::string& topic, const std::string& entity,
                                    const std::string& example_question);

/// Templates for the four default relations (P26, P176, P264, P50).
std::map<std::string, std::string> default_judge_templates();

bool exact_match(const std::string& candidate, const std::string& gold, const std::vector<std::string>& aliases);

/// Fills {question}, {gold_answer} and {answer}. Values are inserted verbatim and never re-expanded.
std::string render_judge_prompt(const JudgeConfig& config, const std::string& relation, const std::string& question,
                                const std::string& gold, const std::string& answer);

struct ParsedVerdict {
  Verdict verdict;
  std::string reasoning;
};

/// Reads the letter after the last "Output:". Throws Parse when absent or not A-D.
ParsedVerdict parse_verdict(const std::string& completion);

Verdict apply_consistency_heuristics(Verdict verdict, const std::string& reasoning);

/// Sends one prompt and returns the raw completion text. Throws Transport on failure.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Chat-completions JSON over HTTP: {model, messages:[{role:"user",content}], temperature:0}.
class HttpJudgeClient : public JudgeClient {
 public:
  explicit HttpJudgeClient(JudgeConfig config);
  std::string complete(const std::string& prompt) override;

 private:
  JudgeConfig config_;
};

struct VerdictEntry {
  std::string question_id;
  std::string answer_norm;
  Verdict verdict = Verdict::Unlabeled;
  std::string reasoning;

  bool operator==(const VerdictEntry&) const = default;
};

/// verdicts.jsonl: {question_id, answer_norm, verdict_letter, reasoning}
std::map<RecordKey, VerdictEntry> load_verdicts(const std::filesystem::path& path);
std::string verdict_line(const VerdictEntry& v);

/// Where non-exact-match verdicts come from.
class VerdictSource {
 public:
  virtual ~VerdictSource() = default;
  virtual VerdictEntry judge(const Question& question, const CandidateRecord& candidate) = 0;
};

/// Verdicts from a previously recorded verdicts.jsonl; no network.
class OfflineVerdicts : public VerdictSource {
 public:
  explicit OfflineVerdicts(std::map<RecordKey, VerdictEntry> verdicts) : verdicts_(std::move(verdicts)) {}
  VerdictEntry judge(const Question& question, const CandidateRecord& candidate) override;

 private:
  std::map<RecordKey, VerdictEntry> verdicts_;
};

/// Renders the prompt, queries the client, parses, applies the step-4 heuristics.
/// An unparseable completion is re-queried once and then becomes Error.
class LlmJudge : public VerdictSource {
 public:
  LlmJudge(JudgeConfig config, std::shared_ptr<JudgeClient> client)
      : config_(std::move(config)), client_(std::move(client)) {}
  VerdictEntry judge(const Question& question, const CandidateRecord& candidate) override;

 private:
  JudgeConfig config_;
  std::shared_ptr<JudgeClient> client_;
};

struct Adjudication {
  AnswerSet set;
  std::vector<VerdictEntry> verdicts;  // judge-issued only
  std::size_t judge_calls = 0;
};

Adjudication adjudicate_answer_set(const AnswerSet& set, const Question& question, VerdictSource& source,
                                   bool error_filters_question = true);

/// Thrown when the judge transport fails; carries every set finished before the failure.
class JudgeTransportError : public Error {
 public:
  JudgeTransportError(const std::string& what, std::vector<Adjudication> completed)
      : Error(ErrorKind::Transport, what), completed_(std::move(completed)) {}
  const std::vector<Adjudication>& completed() const { return completed_; }

 private:
  std::vector<Adjudication> completed_;
};

/// Adjudicates many sets with at most `max_inflight` concurrent judge requests.
/// Results are returned in input order.
std::vector<Adjudication> adjudicate_all(const std::vector<AnswerSet>& sets,
                                         const std::map<std::string, Question>& questions, VerdictSource& source,
                                         int max_inflight, bool error_filters_question = true);

enum class AnnotationGroup { ExactMatch, JudgePositive, JudgeNegative };

struct QualityAnnotation {
  AnnotationGroup group;
  std::int64_t group_population = 0;
  std::int64_t sample_size = 0;
  std::int64_t human_correct_count = 0;
};

struct JudgeQuality {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  // Exact-match-only baseline on the same estimated counts.
  double exact_match_recall = 0;
};

JudgeQuality estimate_judge_quality(const std::vector<QualityAnnotation>& annotations);

}  // namespace hk
