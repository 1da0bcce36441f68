#include "hk/scoring.hpp"

#include <cmath>
#include <numeric>

#include "hk/error.hpp"
#include "hk/io.hpp"

namespace hk {

namespace {

std::string context(const CandidateRecord& r) { return "(" + r.question_id + ", " + r.answer_norm + ")"; }

double summed_logprob(const CandidateRecord& record) {
  if (record.answer_logprobs.empty()) {
    throw Error(ErrorKind::EvidenceMissing, context(record) + ": no answer logprobs");
  }
  double sum = 0.0;
  for (const auto& t : record.answer_logprobs) sum += t.logprob;
  return sum;
}

}  // namespace

Channel channel(ScorerKind kind) { return kind == ScorerKind::Probe ? Channel::Internal : Channel::External; }

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::PAQ: return "paq";
    case ScorerKind::PNorm: return "pnorm";
    case ScorerKind::PTrue: return "ptrue";
    case ScorerKind::Probe: return "probe";
  }
  return "paq";
}

ScorerKind scorer_from_string(std::string_view s) {
  if (s == "paq") return ScorerKind::PAQ;
  if (s == "pnorm") return ScorerKind::PNorm;
  if (s == "ptrue") return ScorerKind::PTrue;
  if (s == "probe") return ScorerKind::Probe;
  throw Error(ErrorKind::Config, "unknown scorer \"" + std::string(s) + "\"");
}

double score_paq(const CandidateRecord& record) { return std::exp(summed_logprob(record)); }

double score_pnorm(const CandidateRecord& record) {
  double sum = summed_logprob(record);
  return std::exp(sum / static_cast<double>(record.answer_logprobs.size()));
}

double score_ptrue(double logit_true, double logit_false) {
  double m = std::max(logit_true, logit_false);
  double et = std::exp(logit_true - m);
  double ef = std::exp(logit_false - m);
  return et / (et + ef);
}

double score_ptrue(const CandidateRecord& record) {
  if (!record.verification) throw Error(ErrorKind::EvidenceMissing, context(record) + ": no verification logits");
  return score_ptrue(record.verification->logit_true, record.verification->logit_false);
}

double score_probe(const CandidateRecord& record, const ProbeModel& probe, const RecordStore& store) {
  const auto* ref = record.hidden_for_layer(probe.layer);
  if (!ref) {
    throw Error(ErrorKind::EvidenceMissing, context(record) + ": no hidden state for layer " + std::to_string(probe.layer));
  }
  if (ref->dim != probe.dim()) {
    throw Error(ErrorKind::Shape, context(record) + ": hidden dim " + std::to_string(ref->dim) + ", probe expects " +
                                      std::to_string(probe.dim()));
  }
  auto v = store.read_hidden(*ref);
  return probe.predict(std::span<const float>(v));
}

void ScoreTable::set(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer, double score) {
  if (!std::isfinite(score)) {
    throw Error(ErrorKind::Validation, "non-finite " + std::string(to_string(scorer)) + " score for (" + question_id +
                                           ", " + answer_norm + ")");
  }
  scores_[{question_id, answer_norm, scorer}] = score;
}

double ScoreTable::get(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer) const {
  auto it = scores_.find({question_id, answer_norm, scorer});
  if (it == scores_.end()) {
    throw Error(ErrorKind::Lookup, "no " + std::string(to_string(scorer)) + " score for (" + question_id + ", " +
                                       answer_norm + ")");
  }
  return it->second;
}

std::optional<double> ScoreTable::try_get(const std::string& question_id, const std::string& answer_norm,
                                          ScorerKind scorer) const {
  auto it = scores_.find({question_id, answer_norm, scorer});
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

bool ScoreTable::contains(const std::string& question_id, const std::string& answer_norm, ScorerKind scorer) const {
  return scores_.count({question_id, answer_norm, scorer}) > 0;
}

ScoreTable build_score_table(const std::vector<AnswerSet>& sets, const std::vector<ScorerKind>& scorers,
                             const ProbeModel* probe, const RecordStore* store) {
  for (auto s : scorers) {
    if (s == ScorerKind::Probe && (!probe || !store)) {
      throw Error(ErrorKind::Config, "probe scorer enabled without a probe model and record store");
    }
  }
  ScoreTable table;
  for (const auto& set : sets) {
    for (const auto& c : set.candidates) {
      for (auto s : scorers) {
        double score = 0.0;
        try {
          switch (s) {
            case ScorerKind::PAQ: score = score_paq(c); break;
            case ScorerKind::PNorm: score = score_pnorm(c); break;
            case ScorerKind::PTrue: score = score_ptrue(c); break;
            case ScorerKind::Probe: score = score_probe(c, *probe, *store); break;
          }
        } catch (const Error& e) {
          throw Error(e.kind(), std::string(to_string(s)) + " scorer: " + e.what());
        }
        table.set(c.question_id, c.answer_norm, s, score);
      }
    }
  }
  return table;
}

std::string score_lines(const ScoreTable& table) {
  std::string out;
  for (const auto& [key, score] : table.entries()) {
    json obj{{"question_id", key.question_id},
             {"answer_norm", key.answer_norm},
             {"scorer", std::string(to_string(key.scorer))},
             {"score", score}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

ScoreTable load_scores(const fs::path& path) {
  ScoreTable table;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    table.set(require_field<std::string>(obj, "question_id", line), require_field<std::string>(obj, "answer_norm", line),
              scorer_from_string(require_field<std::string>(obj, "scorer", line)),
              require_field<double>(obj, "score", line));
  });
  return table;
}

}  // namespace hk
