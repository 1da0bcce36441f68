#include "hk/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <set>

#include "hk/corpus.hpp"
#include "hk/error.hpp"
#include "hk/experiments.hpp"
#include "hk/io.hpp"
#include "hk/judge.hpp"
#include "hk/probe.hpp"
#include "hk/records.hpp"
#include "hk/stats.hpp"
#include "hk/text.hpp"

namespace hk {

namespace {

constexpr const char* kQuestions = "questions.jsonl";
constexpr const char* kDropped = "ingest_dropped.jsonl";
constexpr const char* kAnswerSets = "answer_sets.jsonl";
constexpr const char* kJudged = "answer_sets.judged.jsonl";
constexpr const char* kVerdicts = "verdicts.jsonl";
constexpr const char* kPartialVerdicts = "verdicts.partial.jsonl";
constexpr const char* kScores = "scores.jsonl";
constexpr const char* kProbe = "probe.json";
constexpr const char* kProbeLayers = "probe_layers.json";
constexpr const char* kProbeScores = "probe_scores.jsonl";
constexpr const char* kKResults = "kresults.jsonl";
constexpr const char* kKResultsSampled = "kresults_sampled.jsonl";
constexpr const char* kHiddenReport = "hidden_report.json";
constexpr const char* kSelection = "selection.json";
constexpr const char* kAnalysis = "analysis.json";
constexpr const char* kStageManifest = "stages.json";

struct Input {
  fs::path path;
  std::optional<Stage> producer;  // empty for user-supplied files
};

using Outputs = std::map<fs::path, std::string>;

std::string jsonl(const json& meta, const std::vector<std::string>& lines) {
  std::string out = json{{"_meta", meta}}.dump() + "\n";
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string with_meta(json obj, const json& meta) {
  obj["_meta"] = meta;
  return obj.dump(1) + "\n";
}

std::string manifest_key(const PipelineConfig& config, const fs::path& p) {
  return p.lexically_relative(config.work_dir).generic_string();
}

void require_inputs(Stage stage, const std::vector<Input>& inputs) {
  for (const auto& in : inputs) {
    if (fs::exists(in.path)) continue;
    if (in.producer) {
      throw Error(ErrorKind::Dependency, std::string(to_string(stage)) + " needs " + in.path.filename().string() +
                                             ": run " + std::string(to_string(*in.producer)) + " first");
    }
    throw Error(ErrorKind::Config, std::string(to_string(stage)) + ": input " + in.path.string() + " does not exist");
  }
}

std::string input_hash(Stage stage, const PipelineConfig& config, const std::vector<Input>& inputs) {
  std::string acc = std::string(to_string(stage)) + "\n" + std::to_string(kStageVersion) + "\n" + config.hash() + "\n";
  for (const auto& in : inputs) acc += in.path.filename().string() + " " + sha256_hex(read_file(in.path)) + "\n";
  return sha256_hex(acc);
}

json load_stage_manifest(const PipelineConfig& config) {
  auto path = config.work_dir / kStageManifest;
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

bool up_to_date(const json& entry, const std::string& hash, const PipelineConfig& config) {
  if (!entry.is_object() || entry.value("input_hash", "") != hash) return false;
  for (const auto& [rel, sha] : entry.at("outputs").items()) {
    auto p = config.work_dir / rel;
    if (!fs::exists(p) || sha256_hex(read_file(p)) != sha.get<std::string>()) return false;
  }
  return true;
}

struct Workspace {
  std::vector<Question> questions;
  std::map<std::string, Question> by_id;
  std::map<std::string, std::string> relation_of;

  explicit Workspace(const PipelineConfig& config) : questions(load_corpus(config.work_dir / kQuestions)) {
    for (const auto& q : questions) {
      by_id.emplace(q.id, q);
      relation_of.emplace(q.id, q.fact.relation);
    }
  }

  std::vector<AnswerSet> split_sets(const std::vector<AnswerSet>& sets, Split split, bool drop_filtered) const {
    std::vector<AnswerSet> out;
    for (const auto& s : sets) {
      auto it = by_id.find(s.question_id);
      if (it == by_id.end() || it->second.split != split) continue;
      if (drop_filtered && s.filtered) continue;
      out.push_back(s);
    }
    return out;
  }

  std::map<std::string, std::string> fact_keys() const {
    std::map<std::string, std::string> out;
    for (const auto& q : questions) out[q.id] = q.fact.relation + "|" + normalize_answer(q.fact.subject);
    return out;
  }
};

ScoreTable load_all_scores(const PipelineConfig& config) {
  auto table = load_scores(config.work_dir / kScores);
  if (config.has_scorer(ScorerKind::Probe)) {
    auto probe = load_scores(config.work_dir / kProbeScores);
    for (const auto& [key, v] : probe.entries()) {
      table.set(key.question_id, key.answer_norm, key.scorer, v);
    }
  }
  return table;
}

std::vector<Input> score_inputs(const PipelineConfig& config) {
  std::vector<Input> in{{config.work_dir / kScores, Stage::Score}};
  if (config.has_scorer(ScorerKind::Probe)) in.push_back({config.work_dir / kProbeScores, Stage::TrainProbe});
  return in;
}

std::map<ScorerKind, std::vector<KResult>> by_scorer(const std::vector<KResult>& results) {
  std::map<ScorerKind, std::vector<KResult>> out;
  for (const auto& r : results) out[r.scorer].push_back(r);
  return out;
}

std::map<std::string, HiddenKnowledgeReport> hidden_reports(const PipelineConfig& config,
                                                            const std::vector<KResult>& results,
                                                            const std::map<std::string, std::string>& relation_of,
                                                            std::ostream& log) {
  std::map<std::string, std::map<ScorerKind, std::vector<KResult>>> groups;
  for (const auto& r : results) {
    groups["all"][r.scorer].push_back(r);
    auto it = relation_of.find(r.question_id);
    if (it != relation_of.end()) groups[it->second][r.scorer].push_back(r);
  }
  std::map<std::string, HiddenKnowledgeReport> out;
  for (auto& [group, scorers] : groups) {
    auto internal_it = scorers.find(ScorerKind::Probe);
    if (internal_it == scorers.end()) continue;
    auto internal = internal_it->second;
    scorers.erase(internal_it);
    if (scorers.empty()) continue;
    std::vector<std::string> ids;
    for (const auto& r : internal) {
      if (!r.excluded) ids.push_back(r.question_id);
    }
    std::size_t bins = std::min(kKTestBins, ids.size());
    if (bins < 2) {
      log << "hidden-test: " << group << " has " << ids.size() << " usable questions, skipped\n";
      continue;
    }
    auto plan = bin_dataset(ids, config.bin_seed, bins);
    for (auto metric : {KMetric::K, KMetric::KStar}) {
      out[group + "/" + std::string(to_string(metric))] =
          hidden_knowledge_test(internal, scorers, plan, config.alpha, metric);
    }
  }
  return out;
}

std::vector<SelectionMethod> selection_methods(const PipelineConfig& config) {
  std::vector<SelectionMethod> out;
  for (auto m : kAllSelectionMethods) {
    bool needs_probe = m == SelectionMethod::ArgmaxProbe || m == SelectionMethod::ProbeWithGold;
    if (!needs_probe || config.has_scorer(ScorerKind::Probe)) out.push_back(m);
  }
  return out;
}

std::vector<QualityAnnotation> load_annotations(const fs::path& path) {
  std::vector<QualityAnnotation> out;
  json arr;
  try {
    arr = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  for (const auto& a : arr) {
    auto g = a.at("group").get<std::string>();
    QualityAnnotation q;
    if (g == "exact_match") q.group = AnnotationGroup::ExactMatch;
    else if (g == "judge_positive") q.group = AnnotationGroup::JudgePositive;
    else if (g == "judge_negative") q.group = AnnotationGroup::JudgeNegative;
    else throw Error(ErrorKind::Parse, path.string() + ": unknown annotation group \"" + g + "\"");
    q.group_population = a.at("population").get<std::int64_t>();
    q.sample_size = a.at("sample").get<std::int64_t>();
    q.human_correct_count = a.at("correct").get<std::int64_t>();
    out.push_back(q);
  }
  return out;
}

// ---- stages ----

std::vector<Input> inputs_for(Stage stage, const PipelineConfig& c) {
  const auto& w = c.work_dir;
  std::vector<Input> records{{c.records / "records.jsonl", std::nullopt}};
  if (fs::exists(c.records / "hidden.f32")) records.push_back({c.records / "hidden.f32", std::nullopt});
  auto cat = [](std::vector<Input> a, const std::vector<Input>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  Input questions{w / kQuestions, Stage::Ingest};
  Input judged{w / kJudged, Stage::Judge};
  switch (stage) {
    case Stage::Ingest: {
      std::vector<Input> in{{c.corpus, std::nullopt}};
      if (!c.relations.empty()) in.push_back({c.relations, std::nullopt});
      return in;
    }
    case Stage::Assemble:
      return cat({questions}, records);
    case Stage::Judge: {
      std::vector<Input> in{{w / kAnswerSets, Stage::Assemble}, questions};
      if (!c.judge.offline_verdicts.empty()) in.push_back({c.judge.offline_verdicts, std::nullopt});
      return in;
    }
    case Stage::Score:
      return cat({judged, questions}, records);
    case Stage::TrainProbe: {
      std::vector<Input> in{judged, questions};
      if (!c.probe.model.empty()) in.push_back({c.probe.model, std::nullopt});
      return cat(in, records);
    }
    case Stage::Metrics:
    case Stage::Select:
      return cat({judged, questions}, score_inputs(c));
    case Stage::HiddenTest:
      return {{w / kKResults, Stage::Metrics}, questions};
    case Stage::Analyze:
      return cat({{w / kKResults, Stage::Metrics}, {w / kKResultsSampled, Stage::Metrics}, judged, questions},
                 score_inputs(c));
    case Stage::Report: {
      std::vector<Input> in{{w / kAnalysis, Stage::Analyze}, {w / kKResults, Stage::Metrics},
                            {w / kKResultsSampled, Stage::Metrics}, judged, questions};
      if (c.has_suite("hidden") && c.has_scorer(ScorerKind::Probe)) in.push_back({w / kHiddenReport, Stage::HiddenTest});
      if (c.has_suite("selection")) in.push_back({w / kSelection, Stage::Select});
      if (!c.judge_annotations.empty()) in.push_back({c.judge_annotations, std::nullopt});
      return cat(in, score_inputs(c));
    }
  }
  return {};
}

Outputs stage_ingest(const PipelineConfig& c, const json& meta, std::ostream& log) {
  auto questions = load_corpus(c.corpus);
  auto relations = c.relations.empty() ? default_relations() : load_relations(c.relations);
  auto violations = check_against_relations(questions, relations);
  if (!violations.empty()) {
    std::string msg = "corpus does not match the relation table:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw Error(ErrorKind::Validation, msg);
  }
  std::vector<Question> by_split[3];
  for (const auto& q : questions) by_split[static_cast<int>(q.split)].push_back(q);
  auto test = filter_eval_questions(by_split[static_cast<int>(Split::Test)]);
  auto dev = filter_eval_questions(by_split[static_cast<int>(Split::Dev)]);
  auto train = filter_eval_questions(by_split[static_cast<int>(Split::Train)]);
  std::vector<Question> held = test.kept;
  held.insert(held.end(), dev.kept.begin(), dev.kept.end());
  auto train_split = build_train_split(train.kept, held, relations);

  std::vector<Question> kept = held;
  kept.insert(kept.end(), train_split.kept.begin(), train_split.kept.end());
  std::sort(kept.begin(), kept.end(), [](const Question& a, const Question& b) { return a.id < b.id; });
  std::vector<Dropped> dropped;
  for (const auto* r : {&test, &dev, &train, &train_split}) dropped.insert(dropped.end(), r->dropped.begin(), r->dropped.end());
  std::sort(dropped.begin(), dropped.end(), [](const Dropped& a, const Dropped& b) { return a.question.id < b.question.id; });

  std::vector<std::string> q_lines, d_lines;
  for (const auto& q : kept) q_lines.push_back(corpus_line(q));
  for (const auto& d : dropped) {
    d_lines.push_back(json{{"id", d.question.id},
                           {"split", std::string(to_string(d.question.split))},
                           {"reason", std::string(to_string(d.reason))}}.dump());
  }
  log << "ingest: " << kept.size() << " questions kept, " << dropped.size() << " dropped\n";
  return {{c.work_dir / kQuestions, jsonl(meta, q_lines)}, {c.work_dir / kDropped, jsonl(meta, d_lines)}};
}

Outputs stage_assemble(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto store = RecordStore::open(c.records);
  std::vector<std::string> lines;
  std::size_t missing = 0, injected = 0;
  for (const auto& q : ws.questions) {
    auto recs = store.records_for(q.id);
    if (recs.empty()) {
      ++missing;
      continue;
    }
    const CandidateRecord* greedy = nullptr;
    std::vector<std::string> samples;
    for (const auto* r : recs) {
      if (r->provenance == Provenance::Greedy) greedy = r;
      if (r->provenance == Provenance::GoldInjected) continue;
      for (std::int64_t i = 0; i < r->sample_count; ++i) samples.push_back(r->answer_raw);
    }
    if (!greedy) throw Error(ErrorKind::Validation, "question " + q.id + " has records but no greedy answer");
    auto set = assemble_answer_set(q, greedy->answer_raw, samples, {c.inject_aliases});
    injected += set.gold_injected;
    lines.push_back(to_json(set).dump());
  }
  log << "assemble: " << lines.size() << " answer sets, " << injected << " with injected gold";
  if (missing) log << ", " << missing << " questions without records skipped";
  log << "\n";
  return {{c.work_dir / kAnswerSets, jsonl(meta, lines)}};
}

Outputs stage_judge(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto sets = load_answer_sets(c.work_dir / kAnswerSets);
  std::unique_ptr<VerdictSource> source;
  if (!c.judge.offline_verdicts.empty()) {
    source = std::make_unique<OfflineVerdicts>(load_verdicts(c.judge.offline_verdicts));
  } else if (!c.judge.endpoint.empty()) {
    JudgeConfig jc;
    jc.endpoint = c.judge.endpoint;
    jc.model = c.judge.model;
    jc.templates = default_judge_templates();
    jc.max_retries = c.judge.max_retries;
    jc.timeout = std::chrono::milliseconds(c.judge.timeout_ms);
    jc.max_inflight = c.judge.max_inflight;
    jc.error_filters_question = c.judge.error_filters_question;
    source = std::make_unique<LlmJudge>(jc, std::make_shared<HttpJudgeClient>(jc));
  } else {
    throw Error(ErrorKind::Config, "judge: set an endpoint or an offline verdicts file");
  }

  auto verdict_lines = [](const std::vector<Adjudication>& results) {
    std::vector<std::string> lines;
    for (const auto& a : results) {
      for (const auto& v : a.verdicts) lines.push_back(verdict_line(v));
    }
    return lines;
  };
  std::vector<Adjudication> results;
  try {
    results = adjudicate_all(sets, ws.by_id, *source, c.judge.max_inflight, c.judge.error_filters_question);
  } catch (const JudgeTransportError& e) {
    write_file_atomic(c.work_dir / kPartialVerdicts, jsonl(meta, verdict_lines(e.completed())));
    throw;
  }
  std::vector<std::string> set_lines;
  std::size_t filtered = 0, calls = 0;
  for (const auto& a : results) {
    set_lines.push_back(to_json(a.set).dump());
    filtered += a.set.filtered;
    calls += a.judge_calls;
  }
  log << "judge: " << results.size() << " answer sets, " << calls << " judge verdicts, " << filtered
      << " questions filtered\n";
  return {{c.work_dir / kJudged, jsonl(meta, set_lines)}, {c.work_dir / kVerdicts, jsonl(meta, verdict_lines(results))}};
}

Outputs stage_score(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto store = RecordStore::open(c.records);
  auto sets = ws.split_sets(load_answer_sets(c.work_dir / kJudged), Split::Test, true);
  for (auto& s : sets) attach_evidence(s, store);
  std::vector<ScorerKind> external;
  for (auto s : c.scorers) {
    if (channel(s) == Channel::External) external.push_back(s);
  }
  auto table = build_score_table(sets, external);
  log << "score: " << table.size() << " scores over " << sets.size() << " test questions\n";
  return {{c.work_dir / kScores, json{{"_meta", meta}}.dump() + "\n" + score_lines(table)}};
}

Outputs stage_train_probe(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto store = RecordStore::open(c.records);
  auto judged = load_answer_sets(c.work_dir / kJudged);
  auto train_sets = ws.split_sets(judged, Split::Train, false);
  auto dev_sets = ws.split_sets(judged, Split::Dev, true);
  auto test_sets = ws.split_sets(judged, Split::Test, true);
  for (auto* group : {&train_sets, &dev_sets, &test_sets}) {
    for (auto& s : *group) attach_evidence(s, store);
  }
  std::vector<Question> train_questions;
  for (const auto& q : ws.questions) {
    if (q.split == Split::Train) train_questions.push_back(q);
  }
  auto trainset = build_knowledge_aware_trainset(train_questions, train_sets);

  if (!c.probe.model.empty()) {
    auto probe = load_probe(c.probe.model);
    auto table = build_score_table(test_sets, {ScorerKind::Probe}, &probe, &store);
    log << "train-probe: loaded layer " << probe.layer << " probe from " << c.probe.model.filename().string() << "\n";
    return {{c.work_dir / kProbe, with_meta(to_json(probe), meta)},
            {c.work_dir / kProbeScores, json{{"_meta", meta}}.dump() + "\n" + score_lines(table)}};
  }

  std::vector<int> layers = c.probe.layers;
  if (layers.empty()) {
    for (const auto& [layer, dim] : store.layer_dims()) layers.push_back(layer);
  }
  if (layers.empty()) throw Error(ErrorKind::Config, "train-probe: the record store holds no hidden states");

  TrainConfig tc;
  tc.l2 = c.probe.l2;
  tc.learning_rate = c.probe.learning_rate;
  tc.max_iterations = c.probe.max_iterations;
  tc.seed = c.probe.seed;
  std::map<int, ProbeModel> probes;
  for (int layer : layers) probes[layer] = train_logistic(materialize_examples(trainset.pairs, store, layer), tc);

  LayerSelection selection;
  if (probes.size() == 1) {
    selection.layer = probes.begin()->first;
  } else {
    selection = select_layer(probes, dev_sets, store);
  }
  const auto& probe = probes.at(selection.layer);
  auto table = build_score_table(test_sets, {ScorerKind::Probe}, &probe, &store);

  json dropped = json::object();
  for (const auto& [q, reason] : trainset.dropped) {
    auto key = std::string(to_string(reason));
    dropped[key] = dropped.value(key, 0) + 1;
  }
  json dev_k = json::object();
  for (const auto& [layer, k] : selection.dev_mean_k) dev_k[std::to_string(layer)] = k;
  json layer_report{{"selected_layer", selection.layer},
                    {"dev_mean_k", dev_k},
                    {"train_pairs", trainset.pairs.size()},
                    {"dropped", dropped}};
  log << "train-probe: " << trainset.pairs.size() << " training pairs, layer " << selection.layer << " selected\n";
  return {{c.work_dir / kProbe, with_meta(to_json(probe), meta)},
          {c.work_dir / kProbeLayers, with_meta(layer_report, meta)},
          {c.work_dir / kProbeScores, json{{"_meta", meta}}.dump() + "\n" + score_lines(table)}};
}

Outputs stage_metrics(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto sets = ws.split_sets(load_answer_sets(c.work_dir / kJudged), Split::Test, true);
  auto table = load_all_scores(c);
  auto facts = ws.fact_keys();
  std::vector<AnswerSet> sampled;
  for (const auto& s : sets) sampled.push_back(without_injected_gold(s));
  std::vector<std::string> gold_lines, sampled_lines;
  for (auto scorer : c.scorers) {
    for (const auto& r : compute_kresults(sets, table, scorer, c.all_correct_policy, &facts)) {
      gold_lines.push_back(to_json(r).dump());
    }
    for (const auto& r : compute_kresults(sampled, table, scorer, c.all_correct_policy, &facts)) {
      sampled_lines.push_back(to_json(r).dump());
    }
  }
  log << "metrics: " << gold_lines.size() << " results over " << sets.size() << " questions\n";
  return {{c.work_dir / kKResults, jsonl(meta, gold_lines)}, {c.work_dir / kKResultsSampled, jsonl(meta, sampled_lines)}};
}

Outputs stage_hidden_test(const PipelineConfig& c, const json& meta, std::ostream& log) {
  if (!c.has_scorer(ScorerKind::Probe)) throw Error(ErrorKind::Config, "hidden-test needs the probe scorer");
  Workspace ws(c);
  auto reports = hidden_reports(c, load_kresults(c.work_dir / kKResults), ws.relation_of, log);
  json obj = json::object();
  for (const auto& [key, rep] : reports) obj[key] = to_json(rep);
  if (auto it = reports.find("all/K"); it != reports.end()) {
    log << "hidden-test: relative gap " << it->second.relative_gap << ", p " << it->second.test.p_two_sided
        << ", verdict " << (it->second.verdict ? "hidden knowledge" : "not significant") << "\n";
  }
  return {{c.work_dir / kHiddenReport, with_meta(json{{"reports", obj}}, meta)}};
}

Outputs stage_select(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto sets = ws.split_sets(load_answer_sets(c.work_dir / kJudged), Split::Test, true);
  auto report = selection_experiment(sets, load_all_scores(c), selection_methods(c), c.selection_seed);
  auto obj = to_json(report);
  json choices = json::object();
  for (const auto& m : report.methods) choices[std::string(to_string(m.method))] = m.choices;
  obj["choices"] = choices;
  log << "select: " << report.questions << " questions, " << report.methods.size() << " methods\n";
  return {{c.work_dir / kSelection, with_meta(obj, meta)}};
}

struct Analysis {
  std::optional<std::vector<ForceGoldRow>> force_gold;
  std::optional<ExtremeRate> extreme;
  AnswerStats stats;
};

Analysis analyze(const PipelineConfig& c, const Workspace& ws) {
  Analysis a;
  auto sets = ws.split_sets(load_answer_sets(c.work_dir / kJudged), Split::Test, true);
  auto gold = by_scorer(load_kresults(c.work_dir / kKResults));
  auto sampled = by_scorer(load_kresults(c.work_dir / kKResultsSampled));
  if (c.has_suite("force-gold")) a.force_gold = force_gold_comparison(gold, sampled, ws.relation_of);
  if (c.has_suite("extreme") && c.has_scorer(ScorerKind::Probe) && c.has_scorer(ScorerKind::PAQ)) {
    a.extreme = extreme_hidden_knowledge_rate(sets, load_all_scores(c), gold.at(ScorerKind::Probe));
  }
  a.stats = answer_stats(sets, c.long_answer_threshold);
  return a;
}

Outputs stage_analyze(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto a = analyze(c, ws);
  ReportInputs in;
  in.force_gold = a.force_gold;
  in.extreme = a.extreme;
  in.answer_stats = a.stats;
  auto bundle = emit_report(in);
  json obj = bundle.count("stats.json") ? json::parse(bundle.at("stats.json")).at("stats") : json::object();
  log << "analyze: " << a.stats.questions << " questions";
  if (a.extreme) log << ", extreme hidden knowledge " << a.extreme->count << "/" << a.extreme->total;
  log << "\n";
  return {{c.work_dir / kAnalysis, with_meta(obj, meta)}};
}

Outputs stage_report(const PipelineConfig& c, const json& meta, std::ostream& log) {
  Workspace ws(c);
  auto a = analyze(c, ws);
  ReportInputs in;
  in.provenance = meta;
  in.relation_of = ws.relation_of;
  auto kresults = load_kresults(c.work_dir / kKResults);
  if (c.has_suite("k")) in.kresults = by_scorer(kresults);
  if (c.has_suite("hidden") && c.has_scorer(ScorerKind::Probe)) in.hidden = hidden_reports(c, kresults, ws.relation_of, log);
  if (c.has_suite("selection")) {
    auto sets = ws.split_sets(load_answer_sets(c.work_dir / kJudged), Split::Test, true);
    in.selection = selection_experiment(sets, load_all_scores(c), selection_methods(c), c.selection_seed);
  }
  in.force_gold = a.force_gold;
  in.extreme = a.extreme;
  in.answer_stats = a.stats;
  if (!c.judge_annotations.empty()) in.judge_quality = estimate_judge_quality(load_annotations(c.judge_annotations));
  Outputs out;
  for (auto& [name, content] : emit_report(in)) out[c.output_dir / name] = std::move(content);
  log << "report: " << out.size() << " files in " << c.output_dir.string() << "\n";
  return out;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Assemble: return "assemble";
    case Stage::Judge: return "judge";
    case Stage::Score: return "score";
    case Stage::TrainProbe: return "train-probe";
    case Stage::Metrics: return "metrics";
    case Stage::HiddenTest: return "hidden-test";
    case Stage::Select: return "select";
    case Stage::Analyze: return "analyze";
    case Stage::Report: return "report";
  }
  return "ingest";
}

Stage stage_from_string(std::string_view s) {
  for (auto stage : kAllStages) {
    if (to_string(stage) == s) return stage;
  }
  throw Error(ErrorKind::Config, "unknown stage \"" + std::string(s) + "\"");
}

bool PipelineConfig::has_scorer(ScorerKind s) const { return std::find(scorers.begin(), scorers.end(), s) != scorers.end(); }

bool PipelineConfig::has_suite(std::string_view s) const { return std::find(suites.begin(), suites.end(), s) != suites.end(); }

json PipelineConfig::to_json() const {
  auto p = [](const fs::path& path) { return path.generic_string(); };
  std::vector<std::string> scorer_names;
  for (auto s : scorers) scorer_names.push_back(std::string(to_string(s)));
  json layers = probe.layers.empty() ? json("all") : json(probe.layers);
  return {{"corpus", p(corpus)},
          {"relations", p(relations)},
          {"records", p(records)},
          {"work_dir", p(work_dir)},
          {"output_dir", p(output_dir)},
          {"judge_annotations", p(judge_annotations)},
          {"judge",
           {{"endpoint", judge.endpoint},
            {"model", judge.model},
            {"offline_verdicts", p(judge.offline_verdicts)},
            {"max_inflight", judge.max_inflight},
            {"max_retries", judge.max_retries},
            {"timeout_ms", judge.timeout_ms},
            {"error_filters_question", judge.error_filters_question}}},
          {"scorers", scorer_names},
          {"probe",
           {{"model", p(probe.model)},
            {"layers", layers},
            {"l2", probe.l2},
            {"learning_rate", probe.learning_rate},
            {"max_iterations", probe.max_iterations},
            {"seed", probe.seed}}},
          {"seeds", {{"bins", bin_seed}, {"selection", selection_seed}}},
          {"suites", suites},
          {"alpha", alpha},
          {"all_correct_policy", all_correct_policy == AllCorrectPolicy::Exclude ? "exclude" : "assign_one"},
          {"inject_aliases", inject_aliases},
          {"long_answer_threshold", long_answer_threshold}};
}

std::string PipelineConfig::hash() const {
  // Paths enter the hash by file name only so a workspace can move without invalidating it.
  auto obj = to_json();
  for (const char* key : {"corpus", "relations", "records", "work_dir", "output_dir", "judge_annotations"}) {
    obj[key] = fs::path(obj[key].get<std::string>()).filename().generic_string();
  }
  obj["judge"]["offline_verdicts"] = fs::path(judge.offline_verdicts).filename().generic_string();
  obj["probe"]["model"] = fs::path(probe.model).filename().generic_string();
  return sha256_hex(obj.dump());
}

PipelineConfig pipeline_config_from_json(const json& obj, const fs::path& base_dir) {
  static const std::set<std::string> known{"corpus", "relations", "records", "work_dir", "output_dir",
                                           "judge_annotations", "judge", "scorers", "probe", "seeds", "suites",
                                           "alpha", "all_correct_policy", "inject_aliases", "long_answer_threshold"};
  if (!obj.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  for (const auto& [key, v] : obj.items()) {
    if (!known.count(key)) throw Error(ErrorKind::Config, "unknown config key \"" + key + "\"");
  }
  auto path = [&](const json& o, const char* key, const std::string& fallback = "") -> fs::path {
    auto s = o.value(key, fallback);
    if (s.empty()) return {};
    fs::path p(s);
    return (p.is_absolute() ? p : base_dir / p).lexically_normal();
  };
  PipelineConfig c;
  try {
    if (!obj.contains("corpus") || !obj.contains("records")) throw Error(ErrorKind::Config, "config needs corpus and records");
    c.corpus = path(obj, "corpus");
    c.relations = path(obj, "relations");
    c.records = path(obj, "records");
    c.work_dir = path(obj, "work_dir", "work");
    c.output_dir = path(obj, "output_dir", "report");
    c.judge_annotations = path(obj, "judge_annotations");
    if (auto j = obj.find("judge"); j != obj.end()) {
      c.judge.endpoint = j->value("endpoint", "");
      c.judge.model = j->value("model", "");
      c.judge.offline_verdicts = path(*j, "offline_verdicts");
      c.judge.max_inflight = j->value("max_inflight", c.judge.max_inflight);
      c.judge.max_retries = j->value("max_retries", c.judge.max_retries);
      c.judge.timeout_ms = j->value("timeout_ms", c.judge.timeout_ms);
      c.judge.error_filters_question = j->value("error_filters_question", true);
    }
    if (auto s = obj.find("scorers"); s != obj.end()) {
      c.scorers.clear();
      for (const auto& name : *s) c.scorers.push_back(scorer_from_string(name.get<std::string>()));
    }
    if (auto p = obj.find("probe"); p != obj.end()) {
      c.probe.model = path(*p, "model");
      if (auto l = p->find("layers"); l != p->end() && !l->is_string()) c.probe.layers = l->get<std::vector<int>>();
      c.probe.l2 = p->value("l2", c.probe.l2);
      c.probe.learning_rate = p->value("learning_rate", c.probe.learning_rate);
      c.probe.max_iterations = p->value("max_iterations", c.probe.max_iterations);
      c.probe.seed = p->value("seed", c.probe.seed);
    }
    if (auto s = obj.find("seeds"); s != obj.end()) {
      c.bin_seed = s->value("bins", std::uint64_t{0});
      c.selection_seed = s->value("selection", std::uint64_t{0});
    }
    if (auto s = obj.find("suites"); s != obj.end()) c.suites = s->get<std::vector<std::string>>();
    c.alpha = obj.value("alpha", c.alpha);
    auto policy = obj.value("all_correct_policy", std::string("exclude"));
    if (policy == "exclude") c.all_correct_policy = AllCorrectPolicy::Exclude;
    else if (policy == "assign_one") c.all_correct_policy = AllCorrectPolicy::AssignOne;
    else throw Error(ErrorKind::Config, "all_correct_policy must be exclude or assign_one");
    c.inject_aliases = obj.value("inject_aliases", false);
    c.long_answer_threshold = obj.value("long_answer_threshold", c.long_answer_threshold);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  }
  for (const auto& s : c.suites) {
    if (std::find(std::begin(kAllSuites), std::end(kAllSuites), s) == std::end(kAllSuites)) {
      throw Error(ErrorKind::Config, "unknown analysis suite \"" + s + "\"");
    }
  }
  if (!(c.alpha > 0 && c.alpha < 1)) throw Error(ErrorKind::Config, "alpha must lie in (0, 1)");
  if (c.judge.max_inflight < 1) throw Error(ErrorKind::Config, "max_inflight must be positive");
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  json obj;
  try {
    obj = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(obj, path.parent_path());
}

void apply_env_overrides(PipelineConfig& config, const EnvLookup& getenv) {
  if (const char* e = getenv("HK_JUDGE_ENDPOINT"); e && *e) config.judge.endpoint = e;
  if (const char* w = getenv("HK_WORKERS"); w && *w) {
    char* end = nullptr;
    long n = std::strtol(w, &end, 10);
    if (*end != '\0' || n < 1) throw Error(ErrorKind::Config, "HK_WORKERS must be a positive integer");
    config.judge.max_inflight = static_cast<int>(n);
  }
}

json provenance_of(const PipelineConfig& config, Stage stage) {
  return {{"config_hash", config.hash()},
          {"seeds", {{"bins", config.bin_seed}, {"selection", config.selection_seed}, {"probe", config.probe.seed}}},
          {"stage", std::string(to_string(stage))},
          {"stage_version", kStageVersion}};
}

StageOutcome run_stage(Stage stage, const PipelineConfig& config, std::ostream& log) {
  StageOutcome outcome;
  outcome.stage = stage;
  if (stage == Stage::TrainProbe && !config.has_scorer(ScorerKind::Probe)) {
    log << "train-probe: probe scorer not configured, nothing to do\n";
    return outcome;
  }
  auto inputs = inputs_for(stage, config);
  require_inputs(stage, inputs);
  auto hash = input_hash(stage, config, inputs);
  auto manifest = load_stage_manifest(config);
  auto name = std::string(to_string(stage));
  if (manifest.contains(name) && up_to_date(manifest[name], hash, config)) {
    log << name << ": up-to-date\n";
    outcome.up_to_date = true;
    return outcome;
  }

  auto meta = provenance_of(config, stage);
  Outputs outputs;
  switch (stage) {
    case Stage::Ingest: outputs = stage_ingest(config, meta, log); break;
    case Stage::Assemble: outputs = stage_assemble(config, meta, log); break;
    case Stage::Judge: outputs = stage_judge(config, meta, log); break;
    case Stage::Score: outputs = stage_score(config, meta, log); break;
    case Stage::TrainProbe: outputs = stage_train_probe(config, meta, log); break;
    case Stage::Metrics: outputs = stage_metrics(config, meta, log); break;
    case Stage::HiddenTest: outputs = stage_hidden_test(config, meta, log); break;
    case Stage::Select: outputs = stage_select(config, meta, log); break;
    case Stage::Analyze: outputs = stage_analyze(config, meta, log); break;
    case Stage::Report: outputs = stage_report(config, meta, log); break;
  }

  fs::create_directories(config.work_dir);
  json entry{{"input_hash", hash}, {"outputs", json::object()}};
  for (const auto& [path, content] : outputs) {
    fs::create_directories(path.parent_path());
    write_file_atomic(path, content);
    auto key = manifest_key(config, path);
    entry["outputs"][key] = sha256_hex(content);
    outcome.written.push_back(key);
  }
  manifest = load_stage_manifest(config);
  manifest[name] = entry;
  write_file_atomic(config.work_dir / kStageManifest, manifest.dump(1) + "\n");
  return outcome;
}

std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, std::ostream& log) {
  std::vector<StageOutcome> out;
  for (auto stage : kAllStages) {
    if (stage == Stage::HiddenTest && !config.has_scorer(ScorerKind::Probe)) continue;
    out.push_back(run_stage(stage, config, log));
  }
  return out;
}

std::vector<AnswerSet> load_answer_sets(const fs::path& path) {
  std::vector<AnswerSet> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) { out.push_back(answer_set_from_json(obj, line)); });
  return out;
}

std::vector<KResult> load_kresults(const fs::path& path) {
  std::vector<KResult> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) { out.push_back(kresult_from_json(obj, line)); });
  return out;
}

}  // namespace hk
