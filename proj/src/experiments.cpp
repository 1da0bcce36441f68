#include "hk/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "hk/error.hpp"
#include "hk/io.hpp"

namespace hk {

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * fraction);
  return buf;
}

std::string pvalue(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, p < 1e-4 ? "%.2e" : "%.4f", p);
  return buf;
}

double pct_change(double before, double after) { return before > 0 ? (after - before) / before : 0.0; }

const CandidateRecord& argmax_by(const AnswerSet& set, const ScoreTable& scores, ScorerKind scorer) {
  const CandidateRecord* best = nullptr;
  double best_score = 0.0;
  for (const auto& c : set.candidates) {
    double s = scores.get(set.question_id, c.answer_norm, scorer);
    if (!best || s > best_score || (s == best_score && c.answer_norm < best->answer_norm)) {
      best = &c;
      best_score = s;
    }
  }
  return *best;
}

// Published closed-book accuracies (Llama-3-8B, Mistral-7B, Gemma-2-9B, average), shown for side-by-side reading.
const std::map<SelectionMethod, std::array<double, 4>>& published_selection_accuracy() {
  static const std::map<SelectionMethod, std::array<double, 4>> table{
      {SelectionMethod::Greedy, {22.1, 18.8, 22.7, 21.2}},  {SelectionMethod::Random, {16.4, 12.3, 11.3, 13.3}},
      {SelectionMethod::Majority, {23.7, 19.7, 22.6, 22.0}}, {SelectionMethod::ArgmaxPAQ, {23.6, 20.0, 23.2, 22.3}},
      {SelectionMethod::ArgmaxProbe, {25.4, 22.0, 23.7, 23.7}}, {SelectionMethod::Oracle, {44.2, 38.9, 49.8, 44.3}},
      {SelectionMethod::ProbeWithGold, {34.5, 33.9, 27.6, 32.0}},
  };
  return table;
}

}  // namespace

std::string_view to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::Greedy: return "greedy";
    case SelectionMethod::Random: return "random";
    case SelectionMethod::Majority: return "majority";
    case SelectionMethod::ArgmaxPAQ: return "argmax_paq";
    case SelectionMethod::ArgmaxProbe: return "argmax_probe";
    case SelectionMethod::Oracle: return "oracle";
    case SelectionMethod::ProbeWithGold: return "probe_with_gold";
  }
  return "greedy";
}

SelectionMethod selection_method_from_string(std::string_view s) {
  for (auto m : kAllSelectionMethods) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::Config, "unknown selection method \"" + std::string(s) + "\"");
}

const CandidateRecord& select_answer(SelectionMethod method, const AnswerSet& set, const ScoreTable& scores,
                                     std::uint64_t seed) {
  if (set.candidates.empty()) throw Error(ErrorKind::State, "question " + set.question_id + " has no candidates");
  auto greedy = [&]() -> const CandidateRecord& {
    const auto* g = set.greedy();
    if (!g) throw Error(ErrorKind::State, "question " + set.question_id + " has no greedy answer");
    return *g;
  };
  switch (method) {
    case SelectionMethod::Greedy:
      return greedy();
    case SelectionMethod::Random: {
      std::int64_t total = 0;
      for (const auto& c : set.candidates) total += c.sample_count;
      if (total <= 0) return greedy();
      std::mt19937_64 rng(seed ^ stable_hash64(set.question_id));
      auto draw = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(total)));
      for (const auto& c : set.candidates) {
        if (draw < c.sample_count) return c;
        draw -= c.sample_count;
      }
      return set.candidates.back();
    }
    case SelectionMethod::Majority: {
      const CandidateRecord* best = nullptr;
      for (const auto& c : set.candidates) {
        if (!best || c.sample_count > best->sample_count) {
          best = &c;
          continue;
        }
        if (c.sample_count < best->sample_count) continue;
        auto pc = scores.try_get(set.question_id, c.answer_norm, ScorerKind::PAQ);
        auto pb = scores.try_get(set.question_id, best->answer_norm, ScorerKind::PAQ);
        if (pc && pb && *pc != *pb) {
          if (*pc > *pb) best = &c;
        } else if (c.answer_norm < best->answer_norm) {
          best = &c;
        }
      }
      return *best;
    }
    case SelectionMethod::ArgmaxPAQ:
      return argmax_by(set, scores, ScorerKind::PAQ);
    case SelectionMethod::ArgmaxProbe:
    case SelectionMethod::ProbeWithGold:
      return argmax_by(set, scores, ScorerKind::Probe);
    case SelectionMethod::Oracle: {
      const CandidateRecord* best = nullptr;
      for (const auto& c : set.candidates) {
        if (c.verdict == Verdict::Correct && (!best || c.answer_norm < best->answer_norm)) best = &c;
      }
      return best ? *best : argmax_by(set, scores, ScorerKind::PAQ);
    }
  }
  return greedy();
}

const MethodResult* SelectionReport::find(SelectionMethod m) const {
  for (const auto& r : methods) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

SelectionReport selection_experiment(const std::vector<AnswerSet>& sets, const ScoreTable& scores,
                                     const std::vector<SelectionMethod>& methods, std::uint64_t seed,
                                     std::size_t max_bins) {
  bool has_probe = false;
  for (const auto& [key, v] : scores.entries()) {
    if (key.scorer == ScorerKind::Probe) {
      has_probe = true;
      break;
    }
  }
  for (auto m : methods) {
    if ((m == SelectionMethod::ArgmaxProbe || m == SelectionMethod::ProbeWithGold) && !has_probe) {
      throw Error(ErrorKind::Config, std::string(to_string(m)) + " needs probe scores");
    }
  }

  std::vector<const AnswerSet*> kept;
  for (const auto& s : sets) {
    if (!s.filtered) kept.push_back(&s);
  }
  SelectionReport report;
  report.seed = seed;
  report.questions = kept.size();
  if (kept.empty()) return report;

  std::vector<std::string> ids;
  for (const auto* s : kept) ids.push_back(s->question_id);
  report.bins = std::min(max_bins, kept.size());
  std::optional<BinPlan> plan;
  if (report.bins >= 2) plan = bin_dataset(ids, seed, report.bins);

  auto per_bin_accuracy = [&](const std::map<std::string, int>& hits) {
    std::vector<double> sums(report.bins, 0.0), counts(report.bins, 0.0);
    for (const auto& [q, h] : hits) {
      auto b = plan->assignment.at(q);
      sums[b] += h;
      counts[b] += 1;
    }
    for (std::size_t b = 0; b < report.bins; ++b) sums[b] /= counts[b];
    return sums;
  };

  std::map<std::string, int> greedy_hits;
  for (const auto* s : kept) {
    auto sampled = without_injected_gold(*s);
    greedy_hits[s->question_id] = select_answer(SelectionMethod::Greedy, sampled, scores, seed).verdict == Verdict::Correct;
  }
  double greedy_acc = 0.0;
  for (const auto& [q, h] : greedy_hits) greedy_acc += h;
  greedy_acc /= static_cast<double>(kept.size());

  for (auto m : methods) {
    MethodResult r;
    r.method = m;
    std::map<std::string, int> hits;
    for (const auto* s : kept) {
      const CandidateRecord* choice;
      AnswerSet sampled;
      if (m == SelectionMethod::ProbeWithGold) {
        choice = &select_answer(m, *s, scores, seed);
      } else {
        sampled = without_injected_gold(*s);
        choice = &select_answer(m, sampled, scores, seed);
      }
      r.choices[s->question_id] = choice->answer_norm;
      int hit = choice->verdict == Verdict::Correct ? 1 : 0;
      hits[s->question_id] = hit;
      r.correct += static_cast<std::size_t>(hit);
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(kept.size());
    r.relative_improvement = pct_change(greedy_acc, r.accuracy);
    if (m != SelectionMethod::Greedy && plan) r.vs_greedy = paired_t_test(per_bin_accuracy(hits), per_bin_accuracy(greedy_hits));
    report.methods.push_back(std::move(r));
  }
  return report;
}

std::vector<ForceGoldRow> force_gold_comparison(const std::map<ScorerKind, std::vector<KResult>>& with_gold,
                                                const std::map<ScorerKind, std::vector<KResult>>& sampled_only,
                                                const std::map<std::string, std::string>& relation_of) {
  std::vector<ForceGoldRow> rows;
  for (const auto& [scorer, gold_results] : with_gold) {
    auto it = sampled_only.find(scorer);
    if (it == sampled_only.end()) {
      throw Error(ErrorKind::Alignment, std::string(to_string(scorer)) + " missing from the sampled-only run");
    }
    std::map<std::string, const KResult*> g, s;
    for (const auto& r : gold_results) g[r.question_id] = &r;
    for (const auto& r : it->second) s[r.question_id] = &r;
    std::set<std::string> gk, sk;
    for (const auto& [q, r] : g) gk.insert(q);
    for (const auto& [q, r] : s) sk.insert(q);
    if (gk != sk) throw Error(ErrorKind::Alignment, "force-gold runs cover different questions");

    struct Acc {
      std::size_t n = 0;
      double ks = 0, kg = 0, kss = 0, ksg = 0;
    };
    std::map<std::string, Acc> by_rel;
    for (const auto& [q, gr] : g) {
      const KResult* sr = s.at(q);
      if (gr->excluded || sr->excluded) continue;
      auto rel = relation_of.count(q) ? relation_of.at(q) : std::string("unknown");
      for (const auto& key : {rel, std::string("all")}) {
        auto& a = by_rel[key];
        ++a.n;
        a.ks += sr->k;
        a.kg += gr->k;
        a.kss += sr->k_star;
        a.ksg += gr->k_star;
      }
    }
    for (const auto& [rel, a] : by_rel) {
      ForceGoldRow row;
      row.scorer = scorer;
      row.relation = rel;
      row.questions = a.n;
      double n = static_cast<double>(a.n);
      row.k_sampled = a.ks / n;
      row.k_gold = a.kg / n;
      row.kstar_sampled = a.kss / n;
      row.kstar_gold = a.ksg / n;
      row.k_change_pct = pct_change(row.k_sampled, row.k_gold);
      row.kstar_change_pct = pct_change(row.kstar_sampled, row.kstar_gold);
      rows.push_back(row);
    }
  }
  return rows;
}

bool extreme_hidden_knowledge(const AnswerSet& set_with_gold, const ScoreTable& scores, const KResult& probe_result) {
  if (!set_with_gold.flags.no_correct_sampled) return false;
  const auto* gold = set_with_gold.injected_gold();
  if (!gold) return false;
  auto paq = scores.try_get(set_with_gold.question_id, gold->answer_norm, ScorerKind::PAQ);
  if (!paq) {
    throw Error(ErrorKind::EvidenceMissing, "question " + set_with_gold.question_id + ": no P(a|q) for the injected gold");
  }
  return *paq < kExtremePaqThreshold && !probe_result.excluded && probe_result.k_star == 1;
}

ExtremeRate extreme_hidden_knowledge_rate(const std::vector<AnswerSet>& sets_with_gold, const ScoreTable& scores,
                                          const std::vector<KResult>& probe_results) {
  std::map<std::string, const KResult*> by_q;
  for (const auto& r : probe_results) by_q[r.question_id] = &r;
  ExtremeRate rate;
  for (const auto& s : sets_with_gold) {
    if (s.filtered) continue;
    auto it = by_q.find(s.question_id);
    if (it == by_q.end()) throw Error(ErrorKind::Alignment, "no probe result for question " + s.question_id);
    ++rate.total;
    if (extreme_hidden_knowledge(s, scores, *it->second)) {
      ++rate.count;
      rate.question_ids.push_back(s.question_id);
    }
  }
  rate.rate = rate.total ? static_cast<double>(rate.count) / static_cast<double>(rate.total) : 0.0;
  return rate;
}

json to_json(const SelectionReport& r) {
  json methods = json::array();
  for (const auto& m : r.methods) {
    json obj{{"method", std::string(to_string(m.method))},
             {"accuracy", m.accuracy},
             {"correct", m.correct},
             {"relative_improvement", m.relative_improvement}};
    obj["vs_greedy"] = m.vs_greedy ? to_json(*m.vs_greedy) : json(nullptr);
    methods.push_back(obj);
  }
  return {{"questions", r.questions}, {"bins", r.bins}, {"seed", r.seed}, {"methods", methods}};
}

std::map<std::string, std::string> emit_report(const ReportInputs& in) {
  std::map<std::string, std::string> files;
  json stats = json::object();
  std::string footer = "\n<!-- provenance: " + in.provenance.dump() + " -->\n";

  if (!in.kresults.empty()) {
    std::set<std::string> relations;
    for (const auto& [q, r] : in.relation_of) relations.insert(r);
    relations.insert("all");
    // relation -> scorer -> (sum K, sum K*, n)
    std::map<std::string, std::map<ScorerKind, std::array<double, 3>>> agg;
    for (const auto& [scorer, results] : in.kresults) {
      for (const auto& r : results) {
        if (r.excluded) continue;
        auto rel = in.relation_of.count(r.question_id) ? in.relation_of.at(r.question_id) : std::string("unknown");
        relations.insert(rel);
        for (const auto& key : {rel, std::string("all")}) {
          auto& a = agg[key][scorer];
          a[0] += r.k;
          a[1] += r.k_star;
          a[2] += 1;
        }
      }
    }
    json kstats = json::object();
    std::ostringstream md;
    for (int metric = 0; metric < 2; ++metric) {
      md << "## Mean " << (metric == 0 ? "K" : "K*") << " per relation\n\n| relation |";
      for (const auto& [scorer, _] : in.kresults) md << ' ' << to_string(scorer) << " |";
      md << " internal vs best external |\n|---|";
      for (std::size_t i = 0; i < in.kresults.size(); ++i) md << "---|";
      md << "---|\n";
      for (const auto& rel : relations) {
        if (!agg.count(rel)) continue;
        md << "| " << rel << " |";
        double internal = -1, best_external = -1;
        for (const auto& [scorer, _] : in.kresults) {
          auto it = agg[rel].find(scorer);
          if (it == agg[rel].end() || it->second[2] == 0) {
            md << " - |";
            continue;
          }
          double v = it->second[metric] / it->second[2];
          md << ' ' << fixed(v) << " |";
          if (channel(scorer) == Channel::Internal) internal = v;
          else best_external = std::max(best_external, v);
          if (metric == 0) {
            kstats[rel][std::string(to_string(scorer))] = {{"mean_k", v},
                                                           {"mean_k_star", it->second[1] / it->second[2]},
                                                           {"questions", static_cast<std::size_t>(it->second[2])}};
          }
        }
        md << ' ' << (internal >= 0 && best_external > 0 ? percent(pct_change(best_external, internal)) : "-") << " |\n";
      }
      md << '\n';
    }
    md << "Published reference: average relative gap of 40% between the internal and best external K "
          "(14% Llama-3-8B, 57% Gemma-2-9B).\n";
    stats["k"] = kstats;
    files["k_tables.md"] = "# Knowledge degree tables\n\n" + md.str() + footer;
  }

  if (in.hidden) {
    json h = json::object();
    for (const auto& [key, rep] : *in.hidden) h[key] = to_json(rep);
    files["hidden_report.json"] = json{{"provenance", in.provenance}, {"reports", h}}.dump(1) + "\n";
  }

  if (in.selection) {
    const auto& sel = *in.selection;
    std::ostringstream md;
    md << "# Answer selection\n\n" << sel.questions << " questions, " << sel.bins << " bins, seed " << sel.seed << "\n\n";
    md << "| method | accuracy | vs greedy | p (two-sided) | published avg |\n|---|---|---|---|---|\n";
    for (const auto& m : sel.methods) {
      md << "| " << to_string(m.method) << " | " << fixed(100.0 * m.accuracy, 1) << " | "
         << (m.method == SelectionMethod::Greedy ? std::string("-") : percent(m.relative_improvement)) << " | "
         << (m.vs_greedy ? pvalue(m.vs_greedy->p_two_sided) : std::string("-")) << " | ";
      auto ref = published_selection_accuracy().find(m.method);
      md << (ref != published_selection_accuracy().end() ? fixed(ref->second[3], 1) : std::string("-")) << " |\n";
    }
    md << "\nPublished per-model accuracies (Llama-3-8B / Mistral-7B / Gemma-2-9B):\n\n";
    for (const auto& [m, v] : published_selection_accuracy()) {
      md << "- " << to_string(m) << ": " << fixed(v[0], 1) << " / " << fixed(v[1], 1) << " / " << fixed(v[2], 1) << "\n";
    }
    files["selection.md"] = md.str() + footer;
    stats["selection"] = to_json(sel);
  }

  if (in.force_gold) {
    std::ostringstream md;
    md << "# Sampled-only vs gold-injected\n\n"
       << "| scorer | relation | n | K sampled | K gold | change | K* sampled | K* gold | change |\n"
       << "|---|---|---|---|---|---|---|---|---|\n";
    json rows = json::array();
    for (const auto& r : *in.force_gold) {
      md << "| " << to_string(r.scorer) << " | " << r.relation << " | " << r.questions << " | " << fixed(r.k_sampled)
         << " | " << fixed(r.k_gold) << " | " << percent(r.k_change_pct) << " | " << fixed(r.kstar_sampled) << " | "
         << fixed(r.kstar_gold) << " | " << percent(r.kstar_change_pct) << " |\n";
      rows.push_back({{"scorer", std::string(to_string(r.scorer))},
                      {"relation", r.relation},
                      {"questions", r.questions},
                      {"k_sampled", r.k_sampled},
                      {"k_gold", r.k_gold},
                      {"kstar_sampled", r.kstar_sampled},
                      {"kstar_gold", r.kstar_gold}});
    }
    files["force_gold.md"] = md.str() + footer;
    stats["force_gold"] = rows;
  }

  if (in.extreme) {
    stats["extreme_hidden_knowledge"] = {{"count", in.extreme->count},
                                         {"total", in.extreme->total},
                                         {"rate", in.extreme->rate},
                                         {"question_ids", in.extreme->question_ids},
                                         {"published_rate", 0.072}};
  }

  if (in.answer_stats) {
    const auto& a = *in.answer_stats;
    std::ostringstream md;
    md << "# Answer statistics\n\n" << a.questions << " questions, " << a.long_form << " long-form candidates\n\n"
       << "| unique answers | questions |\n|---|---|\n";
    json ua = json::object(), uc = json::object();
    for (const auto& [k, v] : a.unique_answers) {
      md << "| " << k << " | " << v << " |\n";
      ua[std::to_string(k)] = v;
    }
    md << "\n| unique correct | questions |\n|---|---|\n";
    for (const auto& [k, v] : a.unique_correct) {
      md << "| " << k << " | " << v << " |\n";
      uc[std::to_string(k)] = v;
    }
    files["answer_stats.md"] = md.str() + footer;
    stats["answer_stats"] = {{"questions", a.questions}, {"long_form", a.long_form}, {"unique_answers", ua}, {"unique_correct", uc}};
  }

  if (in.judge_quality) {
    const auto& q = *in.judge_quality;
    std::ostringstream md;
    md << "# Judge quality (re-weighted estimate)\n\n| TP | FP | FN | TN | accuracy | precision | recall | F1 | EM recall |\n"
       << "|---|---|---|---|---|---|---|---|---|\n| " << fixed(q.tp, 1) << " | " << fixed(q.fp, 1) << " | " << fixed(q.fn, 1)
       << " | " << fixed(q.tn, 1) << " | " << fixed(q.accuracy, 4) << " | " << fixed(q.precision, 4) << " | "
       << fixed(q.recall, 4) << " | " << fixed(q.f1, 4) << " | " << fixed(q.exact_match_recall, 4) << " |\n";
    files["judge_quality.md"] = md.str() + footer;
    stats["judge_quality"] = {{"tp", q.tp}, {"fp", q.fp}, {"fn", q.fn}, {"tn", q.tn}, {"accuracy", q.accuracy},
                              {"precision", q.precision}, {"recall", q.recall}, {"f1", q.f1}};
  }

  if (!stats.empty()) files["stats.json"] = json{{"provenance", in.provenance}, {"stats", stats}}.dump(1) + "\n";

  json manifest{{"provenance", in.provenance}, {"files", json::array()}};
  for (const auto& [name, content] : files) manifest["files"].push_back({{"name", name}, {"sha256", sha256_hex(content)}});
  files["manifest.json"] = manifest.dump(1) + "\n";
  return files;
}

void write_report(const fs::path& dir, const std::map<std::string, std::string>& bundle) {
  fs::create_directories(dir);
  for (const auto& [name, content] : bundle) write_file_atomic(dir / name, content);
}

}  // namespace hk
