#include "hk/judge.hpp"

#include <atomic>
#include <cctype>
#include <mutex>
#include <optional>
#include <thread>

#include "hk/io.hpp"
#include "hk/text.hpp"

namespace hk {

std::string program_guided_template(const std::string& topic, const std::string& entity,
                                    const std::string& example_question) {
  std::string t;
  t += "I will give you a question about " + topic + " (e.g., \"" + example_question +
       "\"), a gold answer, and a proposed answer. You need to compare the proposed answer to the gold answer and "
       "assign it one of the possible grades using the steps below.\n\n";
  t += "Possible grades are:\n\nA: CORRECT\n\nB: INCORRECT\n\nC: WRONG_GOLD\n\nD: ERROR\n\n";
  t += "Spelling errors, synonyms, abbreviations, or hedging (e.g., \"it is possible that\") should not alter the "
       "grade if the " + entity + " referred to in the proposed answer matches the gold answer.\n\n";
  t += "The steps are: \n\n";
  t += "Step 1: If the gold answer does not refer to a " + entity + ", output \"C\" and finish. Otherwise, proceed to Step 2.\n\n";
  t += "Step 2: If the proposed answer does not refer to a " + entity + ", output \"B\" and finish. Otherwise, proceed to Step 3.\n\n";
  t += "Step 3: If the proposed answer refers to the exact same " + entity +
       " as the gold answer, output \"A\" and finish. Otherwise, proceed to Step 4.\n\n";
  t += "Step 4: Double check that both answers reflect a " + entity + " and the proposed answer refers to a different " +
       entity + " from the gold answer. If it does, output \"B\". Otherwise, output \"D\" and finish.\n\n";
  t += "```\n\nQuestion: {question}\n\nGold answer: {gold_answer}\n\nProposed answer: {answer}\n\n```\n\n";
  t += "Output your thinking steps. After that, finish your response with \"Output:\" and the letter (A or B or C or D). "
       "Do not provide any explanations.";
  return t;
}

std::map<std::string, std::string> default_judge_templates() {
  return {
      {"P26", program_guided_template("the spouse of a person", "person", "Who is Umberto I of Italy married to?")},
      {"P176", program_guided_template("the manufacturer of a product", "company", "Which company is Boeing 747 produced by?")},
      {"P264", program_guided_template("the record label of a musician", "record label",
                                       "What music label is Adele represented by?")},
      {"P50", program_guided_template("the author of a written work", "person", "Who is the author of Dracula?")},
  };
}

bool exact_match(const std::string& candidate, const std::string& gold, const std::vector<std::string>& aliases) {
  auto norm = normalize_answer(candidate);
  if (norm == normalize_answer(gold)) return true;
  for (const auto& a : aliases) {
    if (norm == normalize_answer(a)) return true;
  }
  return false;
}

std::string render_judge_prompt(const JudgeConfig& config, const std::string& relation, const std::string& question,
                                const std::string& gold, const std::string& answer) {
  auto it = config.templates.find(relation);
  if (it == config.templates.end()) throw Error(ErrorKind::Config, "no judge template for relation " + relation);
  const std::string& tmpl = it->second;
  const std::pair<std::string_view, const std::string*> slots[] = {
      {"{question}", &question}, {"{gold_answer}", &gold}, {"{answer}", &answer}};
  std::string out;
  out.reserve(tmpl.size() + question.size() + gold.size() + answer.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [name, value] : slots) {
        if (tmpl.compare(i, name.size(), name) == 0) {
          out += *value;
          i += name.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[i++]);
  }
  return out;
}

ParsedVerdict parse_verdict(const std::string& completion) {
  constexpr std::string_view kMarker = "output:";
  auto pos = rfind_icase(completion, kMarker);
  if (pos == std::string::npos) throw Error(ErrorKind::Parse, "completion has no \"Output:\"");
  std::size_t i = pos + kMarker.size();
  auto skippable = [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'' || c == '*'; };
  while (i < completion.size() && skippable(completion[i])) ++i;
  if (i >= completion.size()) throw Error(ErrorKind::Parse, "nothing after \"Output:\"");
  auto verdict = verdict_from_letter(completion[i]);
  bool boundary = i + 1 >= completion.size() || !std::isalnum(static_cast<unsigned char>(completion[i + 1]));
  if (!verdict || !boundary) {
    throw Error(ErrorKind::Parse, std::string("unexpected grade after \"Output:\": '") + completion[i] + "'");
  }
  return {*verdict, trim(std::string_view(completion).substr(0, pos))};
}

Verdict apply_consistency_heuristics(Verdict verdict, const std::string& reasoning) {
  auto pos = rfind_icase(reasoning, "step 4");
  if (pos == std::string::npos) return verdict;
  std::string_view step4 = std::string_view(reasoning).substr(pos);
  if (verdict == Verdict::Correct && icontains(step4, "different")) return Verdict::Error;
  if (verdict == Verdict::Incorrect && icontains(step4, "refer to the same entity")) return Verdict::Error;
  return verdict;
}

std::map<RecordKey, VerdictEntry> load_verdicts(const fs::path& path) {
  std::map<RecordKey, VerdictEntry> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    VerdictEntry v;
    v.question_id = require_field<std::string>(obj, "question_id", line);
    v.answer_norm = require_field<std::string>(obj, "answer_norm", line);
    auto letter = require_field<std::string>(obj, "verdict_letter", line);
    auto verdict = letter.size() == 1 ? verdict_from_letter(letter[0]) : std::nullopt;
    if (!verdict) throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": bad verdict_letter \"" + letter + "\"");
    v.verdict = *verdict;
    v.reasoning = obj.value("reasoning", "");
    out[{v.question_id, v.answer_norm}] = std::move(v);
  });
  return out;
}

std::string verdict_line(const VerdictEntry& v) {
  json obj{{"question_id", v.question_id},
           {"answer_norm", v.answer_norm},
           {"verdict_letter", std::string(1, verdict_letter(v.verdict))},
           {"reasoning", v.reasoning}};
  return obj.dump();
}

VerdictEntry OfflineVerdicts::judge(const Question&, const CandidateRecord& candidate) {
  auto it = verdicts_.find(key_of(candidate));
  if (it == verdicts_.end()) {
    throw Error(ErrorKind::Lookup, "no offline verdict for (" + candidate.question_id + ", " + candidate.answer_norm + ")");
  }
  return it->second;
}

VerdictEntry LlmJudge::judge(const Question& question, const CandidateRecord& candidate) {
  auto prompt = render_judge_prompt(config_, question.fact.relation, question.text, question.fact.gold_answer,
                                    candidate.answer_raw);
  VerdictEntry entry{candidate.question_id, candidate.answer_norm, Verdict::Error, ""};
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto completion = client_->complete(prompt);
    try {
      auto parsed = parse_verdict(completion);
      entry.verdict = apply_consistency_heuristics(parsed.verdict, parsed.reasoning);
      entry.reasoning = parsed.reasoning;
      return entry;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Parse) throw;
      entry.reasoning = completion;
    }
  }
  return entry;
}

Adjudication adjudicate_answer_set(const AnswerSet& set, const Question& question, VerdictSource& source,
                                   bool error_filters_question) {
  Adjudication result;
  result.set = set;
  for (auto& c : result.set.candidates) {
    if (exact_match(c.answer_raw, question.fact.gold_answer, question.fact.aliases) ||
        matches_gold(c.answer_norm, question.fact)) {
      c.verdict = Verdict::Correct;
      continue;
    }
    auto entry = source.judge(question, c);
    ++result.judge_calls;
    c.verdict = entry.verdict;
    result.verdicts.push_back(std::move(entry));
  }
  result.set.filtered = false;
  for (const auto& c : result.set.candidates) {
    if (c.verdict == Verdict::WrongGold || (c.verdict == Verdict::Error && error_filters_question)) {
      result.set.filtered = true;
    }
  }
  if (!error_filters_question) {
    std::erase_if(result.set.candidates, [](const CandidateRecord& c) { return c.verdict == Verdict::Error; });
  }
  update_flags(result.set);
  return result;
}

std::vector<Adjudication> adjudicate_all(const std::vector<AnswerSet>& sets,
                                         const std::map<std::string, Question>& questions, VerdictSource& source,
                                         int max_inflight, bool error_filters_question) {
  std::vector<std::optional<Adjudication>> results(sets.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::string first_error;
  std::exception_ptr other_error;

  auto worker = [&] {
    while (!failed.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= sets.size()) return;
      try {
        auto q = questions.find(sets[i].question_id);
        if (q == questions.end()) throw Error(ErrorKind::Lookup, "answer set for unknown question " + sets[i].question_id);
        results[i] = adjudicate_answer_set(sets[i], q->second, source, error_filters_question);
      } catch (const Error& e) {
        std::lock_guard lock(err_mu);
        if (!failed.exchange(true)) {
          if (e.kind() == ErrorKind::Transport) first_error = e.what();
          else other_error = std::current_exception();
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!failed.exchange(true)) other_error = std::current_exception();
      }
    }
  };

  int n = std::max(1, std::min<int>(max_inflight, static_cast<int>(sets.size())));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<Adjudication> done;
  for (auto& r : results) {
    if (r) done.push_back(std::move(*r));
  }
  if (other_error) std::rethrow_exception(other_error);
  if (failed) throw JudgeTransportError(first_error, std::move(done));
  return done;
}

JudgeQuality estimate_judge_quality(const std::vector<QualityAnnotation>& annotations) {
  bool seen[3] = {false, false, false};
  JudgeQuality q;
  double exact_tp = 0;
  for (const auto& a : annotations) {
    if (a.human_correct_count < 0 || a.human_correct_count > a.sample_size || a.sample_size > a.group_population) {
      throw Error(ErrorKind::Estimation, "annotation counts must satisfy 0 <= correct <= sample <= population");
    }
    seen[static_cast<int>(a.group)] = true;
    if (a.group == AnnotationGroup::ExactMatch) {
      q.tp += static_cast<double>(a.group_population);
      exact_tp += static_cast<double>(a.group_population);
      continue;
    }
    if (a.group_population == 0) continue;
    if (a.sample_size == 0) throw Error(ErrorKind::Estimation, "group with nonzero population has no annotated sample");
    double rate = static_cast<double>(a.human_correct_count) / static_cast<double>(a.sample_size);
    double est_correct = rate * static_cast<double>(a.group_population);
    double est_incorrect = static_cast<double>(a.group_population) - est_correct;
    if (a.group == AnnotationGroup::JudgePositive) {
      q.tp += est_correct;
      q.fp += est_incorrect;
    } else {
      q.fn += est_correct;
      q.tn += est_incorrect;
    }
  }
  if (!seen[0] || !seen[1] || !seen[2]) throw Error(ErrorKind::Estimation, "all three annotation groups are required");
  double total = q.tp + q.fp + q.fn + q.tn;
  q.accuracy = total > 0 ? (q.tp + q.tn) / total : 0.0;
  q.precision = q.tp + q.fp > 0 ? q.tp / (q.tp + q.fp) : 0.0;
  q.recall = q.tp + q.fn > 0 ? q.tp / (q.tp + q.fn) : 0.0;
  q.f1 = q.precision + q.recall > 0 ? 2 * q.precision * q.recall / (q.precision + q.recall) : 0.0;
  q.exact_match_recall = q.tp + q.fn > 0 ? exact_tp / (q.tp + q.fn) : 0.0;
  return q;
}

}  // namespace hk
