#pragma once

// Knowledge-aware probe training. Positives are greedy answers that exactly
// match the gold; negatives are judged-incorrect high-temperature samples of the
// same questions, so both labels come from facts the model is likely to know.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hk/candidates.hpp"
#include "hk/corpus.hpp"
#include "hk/metrics.hpp"
#include "hk/probe_model.hpp"
#include "hk/records.hpp"

namespace hk {

struct TrainExample {
  std::vector<double> features;
  int label = 0;  // 1 correct, 0 incorrect
  std::string question_id;
  int layer = 0;
};

struct TrainConfig {
  double l2 = 1e-3;
  // Upper bound on the step; the trainer shrinks it to 1/L so the loss cannot increase.
  double learning_rate = 1.0;
  int max_iterations = 5000;
  double gradient_tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct TrainPair {
  std::string question_id;
  std::string positive;  // answer_norm of the greedy answer
  std::string negative;  // answer_norm of the first incorrect sample
};

enum class TrainDropReason { GreedyNotExact, NoIncorrectSample, Filtered, MissingGreedy };
std::string_view to_string(TrainDropReason r);

struct TrainsetResult {
  std::vector<TrainPair> pairs;
  std::vector<std::pair<std::string, TrainDropReason>> dropped;
};

/// Requires adjudicated train sets (verdicts on the samples).
TrainsetResult build_knowledge_aware_trainset(const std::vector<Question>& train_questions,
                                              const std::vector<AnswerSet>& train_sets);

/// Reads each pair's hidden vectors at `layer`.
std::vector<TrainExample> materialize_examples(const std::vector<TrainPair>& pairs, const RecordStore& store, int layer);

/// Mean negative log-likelihood plus (l2/2)*|w|^2 on already-standardized rows.
double logistic_loss(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                     const std::vector<double>& w, double b, double l2);
/// Gradient with respect to (w..., b); the last entry is d/db.
std::vector<double> logistic_gradient(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                      const std::vector<double>& w, double b, double l2);

/// Called after every iteration with (iteration, loss).
using TrainObserver = std::function<void(int, double)>;

ProbeModel train_logistic(const std::vector<TrainExample>& examples, const TrainConfig& config,
                          const TrainObserver& observer = {});

struct LayerSelection {
  int layer = 0;
  std::map<int, double> dev_mean_k;
};

/// Picks the layer whose probe has the highest mean K on dev; ties go to the lower layer.
LayerSelection select_layer(const std::map<int, ProbeModel>& probes_by_layer, const std::vector<AnswerSet>& dev_sets,
                            const RecordStore& store);

/// Leakage audit: shared question ids, and for symmetric relations shared
/// subject/object strings across roles.
std::vector<std::string> assert_fact_disjointness(const std::vector<Question>& train_questions,
                                                  const std::vector<Question>& test_questions,
                                                  const RelationMap& relations);

}  // namespace hk
