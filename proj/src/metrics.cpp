#include "hk/metrics.hpp"

#include <algorithm>
#include <limits>

#include "hk/error.hpp"
#include "hk/io.hpp"

namespace hk {

std::string_view to_string(EdgeCase e) {
  return e == EdgeCase::NoCorrectSampled ? "no_correct_sampled" : "all_correct";
}

PairSet enumerate_pairs(const AnswerSet& set) {
  PairSet ps;
  ps.question_id = set.question_id;
  std::vector<const std::string*> correct, incorrect;
  for (const auto& c : set.candidates) {
    if (c.verdict == Verdict::Correct) {
      correct.push_back(&c.answer_norm);
    } else if (c.verdict == Verdict::Incorrect) {
      incorrect.push_back(&c.answer_norm);
    } else {
      throw Error(ErrorKind::State, "question " + set.question_id + ": candidate \"" + c.answer_norm + "\" is " +
                                        std::string(to_string(c.verdict)));
    }
  }
  ps.n_correct = correct.size();
  ps.n_incorrect = incorrect.size();
  ps.pairs.reserve(correct.size() * incorrect.size());
  for (const auto* a : correct) {
    for (const auto* b : incorrect) ps.pairs.emplace_back(*a, *b);
  }
  return ps;
}

KResult k_q(const PairSet& pairs, const ScoreTable& scores, ScorerKind scorer, AllCorrectPolicy policy) {
  KResult r;
  r.question_id = pairs.question_id;
  r.scorer = scorer;
  r.pairs = pairs.pairs.size();
  if (pairs.n_correct == 0) {
    r.edge = EdgeCase::NoCorrectSampled;
  } else if (pairs.n_incorrect == 0) {
    r.edge = EdgeCase::AllCorrect;
    if (policy == AllCorrectPolicy::Exclude) {
      r.excluded = true;
    } else {
      r.k_q = r.k = 1.0;
      r.k_star = 1;
    }
    return r;
  } else {
    for (const auto& [good, bad] : pairs.pairs) {
      if (scores.get(pairs.question_id, good, scorer) > scores.get(pairs.question_id, bad, scorer)) ++r.wins;
    }
    r.k_q = static_cast<double>(r.wins) / static_cast<double>(r.pairs);
  }
  r.k = r.k_q;
  r.k_star = k_star(r.k);
  return r;
}

double k(const std::vector<double>& question_results) {
  if (question_results.empty()) throw Error(ErrorKind::Arity, "K needs at least one paraphrase result");
  double sum = 0.0;
  for (double v : question_results) sum += v;
  return sum / static_cast<double>(question_results.size());
}

int k_star(double k) { return k == 1.0 ? 1 : 0; }

std::vector<KResult> compute_kresults(const std::vector<AnswerSet>& sets, const ScoreTable& scores, ScorerKind scorer,
                                      AllCorrectPolicy policy, const std::map<std::string, std::string>* fact_key_of) {
  std::vector<KResult> out;
  out.reserve(sets.size());
  for (const auto& set : sets) out.push_back(k_q(enumerate_pairs(set), scores, scorer, policy));
  if (!fact_key_of) return out;

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto it = fact_key_of->find(out[i].question_id);
    groups[it == fact_key_of->end() ? out[i].question_id : it->second].push_back(i);
  }
  for (const auto& [fact, members] : groups) {
    std::vector<double> values;
    for (auto i : members) {
      if (!out[i].excluded) values.push_back(out[i].k_q);
    }
    if (values.empty()) continue;
    double fact_k = k(values);
    for (auto i : members) {
      out[i].k = fact_k;
      out[i].k_star = k_star(fact_k);
    }
  }
  return out;
}

int gamma_check(const AnswerSet& plausible, const ChallengeSet& challenge, const ScoreTable& scores, ScorerKind scorer) {
  if (challenge.answers.empty()) return 1;
  double min_plausible = std::numeric_limits<double>::infinity();
  for (const auto& c : plausible.candidates) {
    min_plausible = std::min(min_plausible, scores.get(plausible.question_id, c.answer_norm, scorer));
  }
  double max_challenge = -std::numeric_limits<double>::infinity();
  for (const auto& a : challenge.answers) {
    max_challenge = std::max(max_challenge, scores.get(challenge.question_id, a, scorer));
  }
  return min_plausible > max_challenge ? 1 : 0;
}

double k_q_extended(int gamma, double k_q) { return gamma * k_q; }

AucCheck auc_crosscheck(const PairSet& pairs, const AnswerSet& set, const ScoreTable& scores, ScorerKind scorer) {
  std::vector<double> pos, neg;
  for (const auto& c : set.candidates) {
    double s = scores.get(set.question_id, c.answer_norm, scorer);
    if (c.verdict == Verdict::Correct) pos.push_back(s);
    else if (c.verdict == Verdict::Incorrect) neg.push_back(s);
  }
  std::sort(neg.begin(), neg.end());
  std::size_t below = 0, tied = 0;
  for (double s : pos) {
    auto [lo, hi] = std::equal_range(neg.begin(), neg.end(), s);
    below += static_cast<std::size_t>(lo - neg.begin());
    tied += static_cast<std::size_t>(hi - lo);
  }
  AucCheck check;
  check.tied_pairs = tied;
  std::size_t total = pos.size() * neg.size();
  if (total != pairs.pairs.size()) {
    throw Error(ErrorKind::State, "question " + set.question_id + ": pair set does not match candidate labels");
  }
  auto kr = k_q(pairs, scores, scorer, AllCorrectPolicy::Exclude);
  check.k_q = kr.k_q;
  if (total > 0) {
    check.auc_strict = static_cast<double>(below) / static_cast<double>(total);
    check.auc_half_ties = (static_cast<double>(below) + 0.5 * static_cast<double>(tied)) / static_cast<double>(total);
  }
  if (kr.wins != below || (tied == 0 && check.auc_half_ties != check.k_q)) {
    throw Error(ErrorKind::State, "question " + set.question_id + ": K_q disagrees with pairwise AUC");
  }
  return check;
}

json to_json(const KResult& r) {
  json obj{{"question_id", r.question_id},
           {"scorer", std::string(to_string(r.scorer))},
           {"k_q", r.k_q},
           {"wins", r.wins},
           {"pairs", r.pairs},
           {"k", r.k},
           {"k_star", r.k_star},
           {"excluded", r.excluded}};
  obj["edge"] = r.edge ? json(std::string(to_string(*r.edge))) : json(nullptr);
  return obj;
}

KResult kresult_from_json(const json& obj, std::size_t line) {
  KResult r;
  r.question_id = require_field<std::string>(obj, "question_id", line);
  r.scorer = scorer_from_string(require_field<std::string>(obj, "scorer", line));
  r.k_q = require_field<double>(obj, "k_q", line);
  r.wins = obj.value("wins", std::size_t{0});
  r.pairs = obj.value("pairs", std::size_t{0});
  r.k = require_field<double>(obj, "k", line);
  r.k_star = obj.value("k_star", 0);
  r.excluded = obj.value("excluded", false);
  if (auto e = obj.find("edge"); e != obj.end() && e->is_string()) {
    r.edge = e->get<std::string>() == "all_correct" ? EdgeCase::AllCorrect : EdgeCase::NoCorrectSampled;
  }
  return r;
}

}  // namespace hk
