#include "hk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hk/corpus.hpp"
#include "hk/io.hpp"
#include "hk/judge.hpp"
#include "hk/records.hpp"
#include "hk/stats.hpp"
#include "hk/text.hpp"

namespace hk {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

struct Planned {
  std::string raw;
  bool correct = false;
  Provenance provenance = Provenance::Sampled;
  std::int64_t count = 0;
};

std::vector<TokenLogprob> spread_logprob(const std::string& raw, double total) {
  auto tokens = split_tokens(raw);
  std::vector<TokenLogprob> out;
  for (const auto& t : tokens) out.push_back({t, total / static_cast<double>(tokens.size())});
  return out;
}

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

}  // namespace

SynthSummary write_synthetic_workspace(const fs::path& dir, const SynthOptions& opt) {
  if (std::find(opt.layers.begin(), opt.layers.end(), opt.signal_layer) == opt.layers.end()) {
    throw Error(ErrorKind::Config, "signal layer is not among the captured layers");
  }
  fs::create_directories(dir);
  fs::remove_all(dir / "records");
  fs::create_directories(dir / "records");
  std::mt19937_64 rng(opt.seed);

  std::vector<double> direction(opt.dim);
  double norm = 0.0;
  for (auto& d : direction) {
    d = standard_normal(rng);
    norm += d * d;
  }
  for (auto& d : direction) d /= std::sqrt(norm);

  const std::vector<std::string> relation_ids{"P176", "P264", "P50", "P26"};
  auto relations = default_relations();
  json rel_json = json::object();
  for (const auto& [id, r] : relations) {
    rel_json[id] = {{"template", r.template_},
                    {"hard_to_guess", r.hard_to_guess},
                    {"well_defined", r.well_defined},
                    {"symmetric", r.symmetric}};
  }
  write_file_atomic(dir / "relations.json", rel_json.dump(1) + "\n");

  auto store = RecordStore::open(dir / "records");
  std::vector<Question> questions;
  std::string verdicts;
  SynthSummary summary;

  std::size_t total = opt.train + opt.dev + opt.test;
  for (std::size_t i = 0; i < total; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "q%05zu", i);
    Question q;
    q.id = id;
    q.split = i < opt.train ? Split::Train : (i < opt.train + opt.dev ? Split::Dev : Split::Test);
    q.fact.relation = relation_ids[i % relation_ids.size()];
    q.fact.subject = "Entity " + std::to_string(i);
    q.fact.gold_answer = "Object " + std::to_string(i);
    q.text = render_question(relations.at(q.fact.relation), q.fact.subject);
    questions.push_back(q);

    // Candidate plan: gold (or an alias-like variant) plus distractors.
    std::vector<Planned> plan;
    bool none_correct = uniform01(rng) < opt.no_correct_rate;
    if (!none_correct) {
      plan.push_back({q.fact.gold_answer, true});
      if (uniform01(rng) < 0.3) plan.push_back({q.fact.gold_answer + " Ltd", true});
    }
    std::size_t n_wrong = 1 + uniform_below(rng, 5);
    for (std::size_t w = 0; w < n_wrong; ++w) {
      std::size_t other = (i + 1 + uniform_below(rng, total - 1)) % total;
      plan.push_back({"Object " + std::to_string(other) + (w % 2 ? " Group" : ""), false});
    }
    std::sort(plan.begin(), plan.end(), [](const Planned& a, const Planned& b) { return a.raw < b.raw; });
    plan.erase(std::unique(plan.begin(), plan.end(), [](const Planned& a, const Planned& b) {
      return normalize_answer(a.raw) == normalize_answer(b.raw);
    }), plan.end());

    std::vector<double> external(plan.size());
    for (std::size_t c = 0; c < plan.size(); ++c) {
      external[c] = (plan[c].correct ? 0.8 : 0.0) + opt.external_noise * standard_normal(rng);
      plan[c].count = 1 + static_cast<std::int64_t>(uniform_below(rng, 20)) + (plan[c].correct ? 5 : 0);
    }
    std::size_t greedy = 0;
    for (std::size_t c = 1; c < plan.size(); ++c) {
      if (plan[c].count > plan[greedy].count) greedy = c;
    }
    plan[greedy].provenance = Provenance::Greedy;
    if (none_correct) {
      plan.push_back({q.fact.gold_answer, true, Provenance::GoldInjected, 0});
      external.push_back(0.8 + opt.external_noise * standard_normal(rng) - 3.0);
    }

    for (std::size_t c = 0; c < plan.size(); ++c) {
      CandidateRecord r;
      r.question_id = q.id;
      r.answer_raw = plan[c].raw;
      r.answer_norm = normalize_answer(plan[c].raw);
      r.provenance = plan[c].provenance;
      r.sample_count = plan[c].count;
      r.answer_logprobs = spread_logprob(plan[c].raw, log_sigmoid(external[c] - 1.0));
      r.verification = VerificationLogits{external[c] + 0.5 * opt.external_noise * standard_normal(rng), 0.0};
      for (int layer : opt.layers) {
        std::vector<float> h(opt.dim);
        double shift = layer == opt.signal_layer ? (plan[c].correct ? 0.5 : -0.5) * opt.hidden_separation : 0.0;
        for (std::uint32_t d = 0; d < opt.dim; ++d) {
          h[d] = static_cast<float>(shift * direction[d] + 0.5 * standard_normal(rng));
        }
        r.hidden.push_back(store.write_hidden(r.question_id, r.answer_norm, layer, h));
      }
      store.append(r);
      ++summary.records;
      if (!exact_match(plan[c].raw, q.fact.gold_answer, q.fact.aliases)) {
        VerdictEntry v{q.id, r.answer_norm, plan[c].correct ? Verdict::Correct : Verdict::Incorrect,
                       plan[c].correct ? "Step 4: the answer refers to the same entity." : "Step 4: the answer names a different entity."};
        verdicts += verdict_line(v) + "\n";
        ++summary.verdicts;
      }
    }
  }
  store.flush();
  save_corpus(dir / "corpus.jsonl", questions);
  write_file_atomic(dir / "verdicts.jsonl", verdicts);

  std::string layers = "[";
  for (std::size_t l = 0; l < opt.layers.size(); ++l) layers += (l ? "," : "") + std::to_string(opt.layers[l]);
  layers += "]";
  json config{{"corpus", "corpus.jsonl"},
              {"relations", "relations.json"},
              {"records", "records"},
              {"work_dir", "work"},
              {"output_dir", "report"},
              {"judge", {{"offline_verdicts", "verdicts.jsonl"}}},
              {"scorers", {"paq", "pnorm", "ptrue", "probe"}},
              {"probe", {{"layers", json::parse(layers)}, {"l2", 1e-3}, {"seed", opt.seed}}},
              {"seeds", {{"bins", opt.seed}, {"selection", opt.seed}}},
              {"suites", {"k", "hidden", "selection", "force-gold", "extreme"}}};
  write_file_atomic(dir / "config.json", config.dump(1) + "\n");
  summary.questions = questions.size();
  return summary;
}

}  // namespace hk
