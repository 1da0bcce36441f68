// Writes the evidence workspace for the Volvo B58 example: one question whose
// record store, verdicts and probe reproduce the published scores when scored.

#include <cmath>
#include <iostream>

#include "hk/corpus.hpp"
#include "hk/io.hpp"
#include "hk/judge.hpp"
#include "hk/probe_model.hpp"
#include "hk/records.hpp"
#include "hk/text.hpp"

namespace {

struct Plan {
  const char* answer;
  std::vector<const char*> tokens;
  double pnorm;  // per-token probability; P(a|q) = pnorm^n
  double ptrue;
  double probe;
  hk::Provenance provenance;
  std::int64_t samples;
  bool correct;
};

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_volvo_fixture DIR\n";
    return 2;
  }
  hk::fs::path dir = argv[1];
  hk::fs::create_directories(dir / "records");
  for (const char* f : {"records.jsonl", "hidden.f32", "hidden.idx.json"}) hk::fs::remove(dir / "records" / f);

  const std::vector<Plan> plan{
      {"BMW", {"B", "MW"}, 0.8726, 0.941, 0.024, hk::Provenance::Greedy, 700, false},
      {"Volvo", {"Vol", "vo"}, 0.10954, 0.926, 0.080, hk::Provenance::Sampled, 200, true},
      {"BMW Group", {"B", "MW", " Group"}, 0.1137, 0.980, 0.065, hk::Provenance::Sampled, 60, false},
      {"Stellantis", {"St", "ell", "antis"}, 0.041, 1e-4, 0.002, hk::Provenance::Sampled, 25, false},
      {"BMW engines", {"B", "MW", " engines"}, 0.036, 0.245, 0.028, hk::Provenance::Sampled, 15, false},
      {"Volvo Buses", {"Volvo", " Buses"}, 0.001, 0.980, 0.465, hk::Provenance::GoldInjected, 0, true},
  };
  const int layer = 16;

  hk::Question q;
  q.id = "volvo-b58";
  q.fact.subject = "Volvo B58";
  q.fact.relation = "P176";
  q.fact.gold_answer = "Volvo Buses";
  q.text = hk::render_question(hk::default_relations().at("P176"), q.fact.subject);
  q.split = hk::Split::Test;
  hk::save_corpus(dir / "corpus.jsonl", {q});

  auto store = hk::RecordStore::open(dir / "records");
  std::string verdicts;
  for (const auto& p : plan) {
    hk::CandidateRecord r;
    r.question_id = q.id;
    r.answer_raw = p.answer;
    r.answer_norm = hk::normalize_answer(p.answer);
    r.provenance = p.provenance;
    r.sample_count = p.samples;
    for (const char* t : p.tokens) r.answer_logprobs.push_back({t, std::log(p.pnorm)});
    r.verification = hk::VerificationLogits{logit(p.ptrue), 0.0};
    float h = static_cast<float>(logit(p.probe));
    r.hidden.push_back(store.write_hidden(q.id, r.answer_norm, layer, std::span<const float>(&h, 1)));
    store.append(r);
    if (!hk::exact_match(p.answer, q.fact.gold_answer, {})) {
      hk::VerdictEntry v{q.id, r.answer_norm, p.correct ? hk::Verdict::Correct : hk::Verdict::Incorrect,
                         p.correct ? "Step 4: Volvo makes the B58, so the answer refers to the same entity."
                                   : "Step 4: the answer names another manufacturer."};
      verdicts += hk::verdict_line(v) + "\n";
    }
  }
  store.flush();
  hk::write_file_atomic(dir / "verdicts.jsonl", verdicts);

  hk::ProbeModel probe;
  probe.layer = layer;
  probe.weights = {1.0};
  probe.bias = 0.0;
  probe.feature_mean = {0.0};
  probe.feature_std = {1.0};
  hk::save_probe(dir / "probe.json", probe);

  hk::json config{{"corpus", "corpus.jsonl"},
                  {"records", "records"},
                  {"work_dir", "work"},
                  {"output_dir", "report"},
                  {"judge", {{"offline_verdicts", "verdicts.jsonl"}}},
                  {"probe", {{"model", "probe.json"}}},
                  {"seeds", {{"bins", 0}, {"selection", 0}}}};
  hk::write_file_atomic(dir / "config.json", config.dump(1) + "\n");
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}
