#include "hk/probe.hpp"

#include <cmath>
#include <random>
#include <set>

#include "hk/error.hpp"
#include "hk/io.hpp"
#include "hk/text.hpp"

namespace hk {

namespace {

constexpr double kStdFloor = 1e-8;

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Largest eigenvalue of Z^T Z / n for Z = [X | 1], by power iteration.
double max_curvature(const std::vector<std::vector<double>>& x, std::uint64_t seed) {
  std::size_t n = x.size(), d = x.front().size();
  std::mt19937_64 rng(seed);
  std::vector<double> v(d + 1);
  for (auto& e : v) e = 0.5 + static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double lambda = 0.0;
  std::vector<double> zv(n), next(d + 1);
  for (int it = 0; it < 200; ++it) {
    double nv = norm2(v);
    for (auto& e : v) e /= nv;
    for (std::size_t i = 0; i < n; ++i) {
      double s = v[d];
      for (std::size_t j = 0; j < d; ++j) s += x[i][j] * v[j];
      zv[i] = s;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) next[j] += x[i][j] * zv[i];
      next[d] += zv[i];
    }
    for (auto& e : next) e /= static_cast<double>(n);
    double updated = norm2(next);
    v.swap(next);
    if (std::abs(updated - lambda) <= 1e-9 * std::max(1.0, updated)) {
      lambda = updated;
      break;
    }
    lambda = updated;
  }
  return lambda;
}

}  // namespace

std::string_view to_string(TrainDropReason r) {
  switch (r) {
    case TrainDropReason::GreedyNotExact: return "greedy-not-exact-match";
    case TrainDropReason::NoIncorrectSample: return "no-incorrect-sample";
    case TrainDropReason::Filtered: return "filtered";
    case TrainDropReason::MissingGreedy: return "missing-greedy";
  }
  return "unknown";
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double ProbeModel::predict(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw Error(ErrorKind::Shape, "probe expects dim " + std::to_string(weights.size()) + ", got " +
                                      std::to_string(features.size()));
  }
  double z = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * (features[j] - feature_mean[j]) / feature_std[j];
  return sigmoid(z);
}

double ProbeModel::predict(std::span<const float> features) const {
  std::vector<double> widened(features.begin(), features.end());
  return predict(std::span<const double>(widened));
}

json to_json(const ProbeModel& p) {
  return {{"layer", p.layer},
          {"weights", p.weights},
          {"bias", p.bias},
          {"feature_mean", p.feature_mean},
          {"feature_std", p.feature_std},
          {"train_meta",
           {{"l2", p.train_meta.l2}, {"iterations", p.train_meta.iterations}, {"final_loss", p.train_meta.final_loss}}}};
}

ProbeModel probe_from_json(const json& obj) {
  ProbeModel p;
  try {
    p.layer = obj.at("layer").get<int>();
    p.weights = obj.at("weights").get<std::vector<double>>();
    p.bias = obj.at("bias").get<double>();
    p.feature_mean = obj.at("feature_mean").get<std::vector<double>>();
    p.feature_std = obj.at("feature_std").get<std::vector<double>>();
    if (auto m = obj.find("train_meta"); m != obj.end()) {
      p.train_meta = {m->value("l2", 0.0), m->value("iterations", 0), m->value("final_loss", 0.0)};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("probe: ") + e.what());
  }
  if (p.feature_mean.size() != p.weights.size() || p.feature_std.size() != p.weights.size()) {
    throw Error(ErrorKind::Shape, "probe weight, mean and std dims differ");
  }
  for (double s : p.feature_std) {
    if (!(s > 0)) throw Error(ErrorKind::Validation, "probe feature_std entries must be positive");
  }
  return p;
}

ProbeModel load_probe(const fs::path& path) {
  try {
    return probe_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void save_probe(const fs::path& path, const ProbeModel& probe) { write_file_atomic(path, to_json(probe).dump(1) + "\n"); }

TrainsetResult build_knowledge_aware_trainset(const std::vector<Question>& train_questions,
                                              const std::vector<AnswerSet>& train_sets) {
  std::map<std::string, const AnswerSet*> by_id;
  for (const auto& s : train_sets) by_id[s.question_id] = &s;
  TrainsetResult out;
  for (const auto& q : train_questions) {
    auto it = by_id.find(q.id);
    if (it == by_id.end()) continue;
    const AnswerSet& set = *it->second;
    if (set.filtered) {
      out.dropped.emplace_back(q.id, TrainDropReason::Filtered);
      continue;
    }
    const auto* greedy = set.greedy();
    if (!greedy) {
      out.dropped.emplace_back(q.id, TrainDropReason::MissingGreedy);
      continue;
    }
    if (!matches_gold(greedy->answer_norm, q.fact)) {
      out.dropped.emplace_back(q.id, TrainDropReason::GreedyNotExact);
      continue;
    }
    const CandidateRecord* negative = nullptr;
    for (const auto& c : set.candidates) {
      if (c.provenance == Provenance::Sampled && c.verdict == Verdict::Incorrect) {
        negative = &c;
        break;
      }
    }
    if (!negative) {
      out.dropped.emplace_back(q.id, TrainDropReason::NoIncorrectSample);
      continue;
    }
    out.pairs.push_back({q.id, greedy->answer_norm, negative->answer_norm});
  }
  return out;
}

std::vector<TrainExample> materialize_examples(const std::vector<TrainPair>& pairs, const RecordStore& store, int layer) {
  std::vector<TrainExample> out;
  out.reserve(pairs.size() * 2);
  auto load = [&](const std::string& qid, const std::string& answer, int label) {
    const auto* rec = store.find(qid, answer);
    if (!rec) throw Error(ErrorKind::EvidenceMissing, "no record for (" + qid + ", " + answer + ")");
    const auto* ref = rec->hidden_for_layer(layer);
    if (!ref) {
      throw Error(ErrorKind::EvidenceMissing, "(" + qid + ", " + answer + ") has no hidden state at layer " +
                                                  std::to_string(layer));
    }
    auto v = store.read_hidden(*ref);
    out.push_back({std::vector<double>(v.begin(), v.end()), label, qid, layer});
  };
  for (const auto& p : pairs) {
    load(p.question_id, p.positive, 1);
    load(p.question_id, p.negative, 0);
  }
  return out;
}

double logistic_loss(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const std::vector<double>& w,
                     double b, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
    loss += softplus(z) - y[i] * z;
  }
  loss /= static_cast<double>(x.size());
  double reg = 0.0;
  for (double wj : w) reg += wj * wj;
  return loss + 0.5 * l2 * reg;
}

std::vector<double> logistic_gradient(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                      const std::vector<double>& w, double b, double l2) {
  std::size_t d = w.size();
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
    double r = sigmoid(z) - y[i];
    for (std::size_t j = 0; j < d; ++j) g[j] += r * x[i][j];
    g[d] += r;
  }
  double n = static_cast<double>(x.size());
  for (auto& e : g) e /= n;
  for (std::size_t j = 0; j < d; ++j) g[j] += l2 * w[j];
  return g;
}

ProbeModel train_logistic(const std::vector<TrainExample>& examples, const TrainConfig& config,
                          const TrainObserver& observer) {
  if (config.l2 < 0 || !(config.learning_rate > 0) || config.max_iterations < 0 || !(config.gradient_tolerance > 0)) {
    throw Error(ErrorKind::Config, "invalid training configuration");
  }
  if (examples.size() < 2) throw Error(ErrorKind::Degenerate, "need at least two training examples");
  std::size_t d = examples.front().features.size();
  int layer = examples.front().layer;
  bool has_pos = false, has_neg = false;
  for (const auto& e : examples) {
    if (e.features.size() != d) throw Error(ErrorKind::Shape, "training examples have different dims");
    if (e.layer != layer) throw Error(ErrorKind::Shape, "training examples come from different layers");
    for (double f : e.features) {
      if (!std::isfinite(f)) throw Error(ErrorKind::Validation, "non-finite feature in " + e.question_id);
    }
    (e.label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error(ErrorKind::Degenerate, "training data contains a single class");
  if (d == 0) throw Error(ErrorKind::Shape, "zero-dimensional features");

  double n = static_cast<double>(examples.size());
  ProbeModel model;
  model.layer = layer;
  model.feature_mean.assign(d, 0.0);
  model.feature_std.assign(d, 0.0);
  for (const auto& e : examples) {
    for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += e.features[j];
  }
  for (auto& m : model.feature_mean) m /= n;
  for (const auto& e : examples) {
    for (std::size_t j = 0; j < d; ++j) {
      double c = e.features[j] - model.feature_mean[j];
      model.feature_std[j] += c * c;
    }
  }
  for (auto& s : model.feature_std) s = std::max(std::sqrt(s / n), kStdFloor);

  std::vector<std::vector<double>> x;
  std::vector<int> y;
  x.reserve(examples.size());
  for (const auto& e : examples) {
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = (e.features[j] - model.feature_mean[j]) / model.feature_std[j];
    x.push_back(std::move(row));
    y.push_back(e.label == 1 ? 1 : 0);
  }

  double curvature = 0.25 * max_curvature(x, config.seed) + config.l2;
  double step = std::min(config.learning_rate, 1.0 / std::max(curvature, 1e-12));

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  double loss = logistic_loss(x, y, w, b, config.l2);
  int it = 0;
  for (; it < config.max_iterations; ++it) {
    auto g = logistic_gradient(x, y, w, b, config.l2);
    if (norm2(g) < config.gradient_tolerance) break;
    // Backtrack if the curvature estimate was too optimistic.
    for (;;) {
      std::vector<double> w_next(d);
      for (std::size_t j = 0; j < d; ++j) w_next[j] = w[j] - step * g[j];
      double b_next = b - step * g[d];
      double next_loss = logistic_loss(x, y, w_next, b_next, config.l2);
      if (next_loss <= loss || step < 1e-12) {
        w.swap(w_next);
        b = b_next;
        loss = std::min(loss, next_loss);
        break;
      }
      step *= 0.5;
    }
    if (observer) observer(it + 1, loss);
  }
  model.weights = std::move(w);
  model.bias = b;
  model.train_meta = {config.l2, it, loss};
  return model;
}

LayerSelection select_layer(const std::map<int, ProbeModel>& probes_by_layer, const std::vector<AnswerSet>& dev_sets,
                            const RecordStore& store) {
  if (dev_sets.empty()) throw Error(ErrorKind::Config, "layer selection needs a nonempty dev set");
  if (probes_by_layer.empty()) throw Error(ErrorKind::Config, "no trained probes to select from");
  LayerSelection sel;
  double best = -1.0;
  for (const auto& [layer, probe] : probes_by_layer) {
    auto table = build_score_table(dev_sets, {ScorerKind::Probe}, &probe, &store);
    auto results = compute_kresults(dev_sets, table, ScorerKind::Probe);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : results) {
      if (r.excluded) continue;
      sum += r.k;
      ++count;
    }
    double mean = count ? sum / static_cast<double>(count) : 0.0;
    sel.dev_mean_k[layer] = mean;
    if (mean > best) {  // map order is ascending, so ties keep the lower layer
      best = mean;
      sel.layer = layer;
    }
  }
  return sel;
}

std::vector<std::string> assert_fact_disjointness(const std::vector<Question>& train_questions,
                                                  const std::vector<Question>& test_questions,
                                                  const RelationMap& relations) {
  std::set<std::string> test_ids;
  std::set<std::pair<std::string, std::string>> test_subjects, test_objects;
  for (const auto& q : test_questions) {
    test_ids.insert(q.id);
    test_subjects.emplace(q.fact.relation, normalize_answer(q.fact.subject));
    test_objects.emplace(q.fact.relation, normalize_answer(q.fact.gold_answer));
  }
  std::vector<std::string> violations;
  for (const auto& q : train_questions) {
    if (test_ids.count(q.id)) violations.push_back("question id " + q.id + " appears in test");
    auto rel = relations.find(q.fact.relation);
    if (rel == relations.end() || !rel->second.symmetric) continue;
    if (test_objects.count({q.fact.relation, normalize_answer(q.fact.subject)})) {
      violations.push_back(q.id + ": train subject \"" + q.fact.subject + "\" is a test object");
    }
    if (test_subjects.count({q.fact.relation, normalize_answer(q.fact.gold_answer)})) {
      violations.push_back(q.id + ": train object \"" + q.fact.gold_answer + "\" is a test subject");
    }
  }
  return violations;
}

}  // namespace hk
