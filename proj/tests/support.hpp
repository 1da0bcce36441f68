#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hk/candidates.hpp"
#include "hk/io.hpp"
#include "hk/text.hpp"
#include "hk/metrics.hpp"
#include "hk/scoring.hpp"
#include "hk/stats.hpp"

namespace hk::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("hk-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline fs::path fixture_dir() { return HK_FIXTURE_DIR; }

inline CandidateRecord candidate(const std::string& qid, const std::string& norm, Verdict verdict,
                                 Provenance prov = Provenance::Sampled, std::int64_t count = 1) {
  CandidateRecord c;
  c.question_id = qid;
  c.answer_raw = norm;
  c.answer_norm = norm;
  c.provenance = prov;
  c.sample_count = prov == Provenance::GoldInjected ? 0 : count;
  c.verdict = verdict;
  return c;
}

/// Labeled set with the first candidate as greedy; flags recomputed.
inline AnswerSet labeled_set(const std::string& qid, const std::vector<std::pair<std::string, bool>>& answers) {
  AnswerSet s;
  s.question_id = qid;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    s.candidates.push_back(candidate(qid, answers[i].first, answers[i].second ? Verdict::Correct : Verdict::Incorrect,
                                     i == 0 ? Provenance::Greedy : Provenance::Sampled));
  }
  for (const auto& c : s.candidates) s.sample_total += c.sample_count;
  update_flags(s);
  return s;
}

/// Random question with 2..max_candidates labeled answers and scores drawn from a
/// small grid so ties are common.
struct RandomInstance {
  AnswerSet set;
  ScoreTable scores;
};

inline RandomInstance random_instance(std::mt19937_64& rng, const std::string& qid, std::size_t max_candidates,
                                      ScorerKind scorer, int grid = 10) {
  RandomInstance inst;
  std::size_t n = 2 + uniform_below(rng, max_candidates - 1);
  std::vector<std::pair<std::string, bool>> answers;
  for (std::size_t i = 0; i < n; ++i) answers.emplace_back("a" + std::to_string(i), uniform_below(rng, 2) == 1);
  inst.set = labeled_set(qid, answers);
  for (const auto& c : inst.set.candidates) {
    double v = grid > 0 ? static_cast<double>(uniform_below(rng, grid)) / grid
                        : static_cast<double>(rng() >> 11) * 0x1.0p-53;
    inst.scores.set(qid, c.answer_norm, scorer, v);
  }
  return inst;
}

/// Sampled answers that are all incorrect, plus the injected correct gold.
/// P(a|q) of the gold sits below every sampled answer; probe scores are random.
inline RandomInstance no_correct_instance(std::mt19937_64& rng, const std::string& qid, std::size_t max_sampled) {
  RandomInstance inst;
  std::size_t n = 1 + uniform_below(rng, max_sampled);
  inst.set.question_id = qid;
  for (std::size_t i = 0; i < n; ++i) {
    inst.set.candidates.push_back(candidate(qid, "s" + std::to_string(i), Verdict::Incorrect,
                                            i == 0 ? Provenance::Greedy : Provenance::Sampled,
                                            1 + static_cast<std::int64_t>(uniform_below(rng, 5))));
  }
  inst.set.candidates.push_back(candidate(qid, "gold", Verdict::Correct, Provenance::GoldInjected));
  inst.set.gold_injected = true;
  for (const auto& c : inst.set.candidates) inst.set.sample_total += c.sample_count;
  update_flags(inst.set);
  double floor = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.01 + 0.99 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    floor = std::min(floor, v);
    inst.scores.set(qid, "s" + std::to_string(i), ScorerKind::PAQ, v);
  }
  inst.scores.set(qid, "gold", ScorerKind::PAQ, floor * 0.5 * static_cast<double>(1 + uniform_below(rng, 1000)) / 1001.0);
  for (const auto& c : inst.set.candidates) {
    inst.scores.set(qid, c.answer_norm, ScorerKind::Probe, static_cast<double>(uniform_below(rng, 8)) / 8.0);
  }
  return inst;
}

/// The published Volvo B58 table as a labeled set and score table. Values shown
/// as approximately zero become tiny scores that keep the published order.
struct PublishedVolvo {
  AnswerSet set;
  ScoreTable scores;
  json expected;
};

inline PublishedVolvo published_volvo() {
  json doc = json::parse(read_file(fixture_dir() / "volvo_b58" / "published.json"));
  PublishedVolvo out;
  const std::string qid = doc.at("question_id");
  out.set.question_id = qid;
  const std::string gold = normalize_answer(doc.at("gold_answer").get<std::string>());
  bool first = true;
  for (const auto& entry : doc.at("columns").at("paq")) {
    std::string norm = normalize_answer(entry.at("answer").get<std::string>());
    Provenance prov = norm == gold ? Provenance::GoldInjected : first ? Provenance::Greedy : Provenance::Sampled;
    out.set.candidates.push_back(
        candidate(qid, norm, entry.at("correct").get<bool>() ? Verdict::Correct : Verdict::Incorrect, prov));
    first = false;
  }
  for (const auto& c : out.set.candidates) out.set.sample_total += c.sample_count;
  out.set.gold_injected = true;
  update_flags(out.set);
  for (const auto& [name, column] : doc.at("columns").items()) {
    ScorerKind kind = scorer_from_string(name);
    double tiny = 1e-4;
    for (const auto& entry : column) {
      double v;
      if (entry.at("score").is_null()) {
        v = tiny;
        tiny /= 10.0;
      } else {
        v = entry.at("score").get<double>();
      }
      out.scores.set(qid, normalize_answer(entry.at("answer").get<std::string>()), kind, v);
    }
  }
  out.expected = doc.at("expected");
  return out;
}

}  // namespace hk::test
