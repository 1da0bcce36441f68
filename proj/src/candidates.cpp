#include "hk/candidates.hpp"

#include <set>

#include "hk/error.hpp"
#include "hk/io.hpp"

namespace hk {

const CandidateRecord* AnswerSet::find(const std::string& answer_norm) const {
  for (const auto& c : candidates) {
    if (c.answer_norm == answer_norm) return &c;
  }
  return nullptr;
}

const CandidateRecord* AnswerSet::greedy() const {
  for (const auto& c : candidates) {
    if (c.provenance == Provenance::Greedy) return &c;
  }
  return nullptr;
}

const CandidateRecord* AnswerSet::injected_gold() const {
  for (const auto& c : candidates) {
    if (c.provenance == Provenance::GoldInjected) return &c;
  }
  return nullptr;
}

bool matches_gold(const std::string& answer_norm, const Fact& fact) {
  if (answer_norm == normalize_answer(fact.gold_answer)) return true;
  for (const auto& alias : fact.aliases) {
    if (answer_norm == normalize_answer(alias)) return true;
  }
  return false;
}

AnswerSet assemble_answer_set(const Question& question, const std::string& greedy,
                              const std::vector<std::string>& samples, const AssemblyOptions& options) {
  AnswerSet set;
  set.question_id = question.id;
  set.sample_total = static_cast<std::int64_t>(samples.size());

  std::map<std::string, std::size_t> position;
  auto add = [&](const std::string& raw, Provenance prov) -> CandidateRecord* {
    auto norm = normalize_answer(raw);
    if (norm.empty()) return nullptr;
    auto [it, inserted] = position.emplace(norm, set.candidates.size());
    if (inserted) {
      CandidateRecord c;
      c.question_id = question.id;
      c.answer_raw = raw;
      c.answer_norm = norm;
      c.provenance = prov;
      set.candidates.push_back(std::move(c));
    }
    return &set.candidates[it->second];
  };

  if (!add(greedy, Provenance::Greedy)) {
    throw Error(ErrorKind::Validation, "question " + question.id + ": greedy answer is empty after normalization");
  }
  for (const auto& s : samples) {
    if (auto* c = add(s, Provenance::Sampled)) ++c->sample_count;
  }

  bool gold_present = false;
  for (const auto& c : set.candidates) gold_present = gold_present || matches_gold(c.answer_norm, question.fact);
  if (!gold_present) {
    auto inject = [&](const std::string& raw) {
      auto norm = normalize_answer(raw);
      if (norm.empty() || position.count(norm)) return;
      add(raw, Provenance::GoldInjected);
      set.gold_injected = true;
    };
    inject(question.fact.gold_answer);
    if (options.inject_aliases) {
      for (const auto& a : question.fact.aliases) inject(a);
    }
  }
  update_flags(set);
  return set;
}

void update_flags(AnswerSet& set) {
  bool any_incorrect = false, any_sampled_correct = false, all_labeled = true;
  for (const auto& c : set.candidates) {
    if (c.verdict == Verdict::Unlabeled) all_labeled = false;
    if (c.verdict == Verdict::Incorrect) any_incorrect = true;
    if (c.verdict == Verdict::Correct && c.provenance != Provenance::GoldInjected) any_sampled_correct = true;
  }
  // Flags describe adjudicated sets only.
  set.flags.all_correct = all_labeled && !set.candidates.empty() && !any_incorrect;
  set.flags.no_correct_sampled = all_labeled && !set.candidates.empty() && !any_sampled_correct;
}

AnswerSet without_injected_gold(const AnswerSet& set) {
  AnswerSet out = set;
  std::erase_if(out.candidates, [](const CandidateRecord& c) { return c.provenance == Provenance::GoldInjected; });
  out.gold_injected = false;
  update_flags(out);
  return out;
}

void attach_evidence(AnswerSet& set, const RecordStore& store) {
  for (auto& c : set.candidates) {
    const auto* rec = store.find(c.question_id, c.answer_norm);
    if (!rec) continue;
    c.answer_logprobs = rec->answer_logprobs;
    c.verification = rec->verification;
    c.hidden = rec->hidden;
  }
}

std::vector<double> probability_mass_curve(const std::vector<std::string>& samples_in_order,
                                           const std::map<std::string, double>& paq_by_answer) {
  std::vector<double> curve;
  curve.reserve(samples_in_order.size());
  std::set<std::string> seen;
  double mass = 0.0;
  for (const auto& s : samples_in_order) {
    auto norm = normalize_answer(s);
    if (seen.insert(norm).second) {
      auto it = paq_by_answer.find(norm);
      if (it == paq_by_answer.end()) throw Error(ErrorKind::Lookup, "no P(a|q) for sampled answer \"" + norm + "\"");
      mass += it->second;
    }
    curve.push_back(mass);
  }
  return curve;
}

std::size_t answer_length(const CandidateRecord& c) {
  if (!c.answer_logprobs.empty()) return c.answer_logprobs.size();
  return split_tokens(c.answer_raw).size();
}

AnswerStats answer_stats(const std::vector<AnswerSet>& sets, std::size_t long_threshold) {
  AnswerStats stats;
  for (const auto& set : sets) {
    std::size_t correct = 0;
    for (const auto& c : set.candidates) {
      if (c.verdict == Verdict::Correct) ++correct;
      if (answer_length(c) > long_threshold) ++stats.long_form;
    }
    ++stats.unique_answers[set.candidates.size()];
    ++stats.unique_correct[correct];
    ++stats.questions;
  }
  return stats;
}

AnswerSet filter_long_answers(const AnswerSet& set, std::size_t threshold) {
  AnswerSet out = set;
  std::erase_if(out.candidates, [&](const CandidateRecord& c) {
    return c.provenance == Provenance::Sampled && answer_length(c) > threshold;
  });
  update_flags(out);
  return out;
}

json to_json(const AnswerSet& set) {
  json cands = json::array();
  for (const auto& c : set.candidates) {
    cands.push_back({{"answer_norm", c.answer_norm},
                     {"answer_raw", c.answer_raw},
                     {"provenance", std::string(to_string(c.provenance))},
                     {"sample_count", c.sample_count},
                     {"verdict", std::string(to_string(c.verdict))}});
  }
  return {{"question_id", set.question_id},
          {"candidates", cands},
          {"flags", {{"all_correct", set.flags.all_correct}, {"no_correct_sampled", set.flags.no_correct_sampled}}},
          {"gold_injected", set.gold_injected},
          {"sample_total", set.sample_total},
          {"filtered", set.filtered}};
}

AnswerSet answer_set_from_json(const json& obj, std::size_t line) {
  AnswerSet set;
  set.question_id = require_field<std::string>(obj, "question_id", line);
  set.gold_injected = obj.value("gold_injected", false);
  set.sample_total = obj.value("sample_total", std::int64_t{0});
  set.filtered = obj.value("filtered", false);
  if (auto f = obj.find("flags"); f != obj.end()) {
    set.flags.all_correct = f->value("all_correct", false);
    set.flags.no_correct_sampled = f->value("no_correct_sampled", false);
  }
  for (const auto& c : obj.at("candidates")) {
    CandidateRecord r;
    r.question_id = set.question_id;
    r.answer_norm = require_field<std::string>(c, "answer_norm", line);
    r.answer_raw = c.value("answer_raw", r.answer_norm);
    r.provenance = provenance_from_string(c.value("provenance", "sampled"));
    r.sample_count = c.value("sample_count", std::int64_t{0});
    r.verdict = verdict_from_string(c.value("verdict", "unlabeled"));
    set.candidates.push_back(std::move(r));
  }
  if (set.candidates.empty()) {
    throw Error(ErrorKind::Validation, "line " + std::to_string(line) + ": answer set " + set.question_id + " is empty");
  }
  return set;
}

}  // namespace hk
