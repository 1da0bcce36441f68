#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hk/metrics.hpp"

namespace hk {

struct BinPlan {
  std::uint64_t seed = 0;
  std::size_t n_bins = 0;
  std::map<std::string, std::size_t> assignment;  // question_id -> bin

  std::vector<std::size_t> bin_sizes() const;
};

/// Unbiased draw in [0, bound) from raw generator output. Unlike
/// std::uniform_int_distribution this is identical on every standard library.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

inline constexpr std::size_t kKTestBins = 50;
inline constexpr std::size_t kSelectionTestBins = 200;

/// Seeded Fisher-Yates over the sorted ids, then round-robin into bins.
/// Throws Arity when there are fewer ids than bins.
BinPlan bin_dataset(std::vector<std::string> question_ids, std::uint64_t seed, std::size_t n_bins);

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated with the modified Lentz method.
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);
/// P(T >= t).
double student_t_upper_p(double t, double df);
/// |t| at which the two-sided p equals alpha.
double student_t_critical(double alpha, double df);

struct PairedTTestResult {
  double t = 0.0;
  int df = 0;
  double p_two_sided = 1.0;
  double p_one_sided = 1.0;  // H1: mean(xs - ys) > 0
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  bool degenerate = false;   // zero variance in the differences
};

PairedTTestResult paired_t_test(const std::vector<double>& xs, const std::vector<double>& ys);

double mean_k(const std::vector<KResult>& results);

enum class KMetric { K, KStar };
std::string_view to_string(KMetric m);

struct HiddenKnowledgeReport {
  KMetric metric = KMetric::K;
  ScorerKind internal = ScorerKind::Probe;
  std::map<ScorerKind, double> mean_by_scorer;
  ScorerKind best_external = ScorerKind::PAQ;
  double mean_gap = 0.0;
  double relative_gap = 0.0;  // gap / best external mean
  double delta = 0.0;         // smallest mean bin gap significant at alpha
  double alpha = 0.05;
  std::size_t bins_used = 0;
  std::size_t questions = 0;
  PairedTTestResult test;
  bool verdict = false;
};

/// Compares the internal scorer with the best external one (highest dataset mean)
/// through a paired t-test over per-bin means. Throws Alignment when the scorers
/// cover different questions.
HiddenKnowledgeReport hidden_knowledge_test(const std::vector<KResult>& internal,
                                            const std::map<ScorerKind, std::vector<KResult>>& external,
                                            const BinPlan& plan, double alpha = 0.05, KMetric metric = KMetric::K);

nlohmann::json to_json(const PairedTTestResult& r);
nlohmann::json to_json(const HiddenKnowledgeReport& r);

}  // namespace hk
