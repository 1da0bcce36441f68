#include "hk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "hk/error.hpp"

namespace hk {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorKind::Range, "uniform_below needs a positive bound");
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    std::uint64_t r = rng();
    if (r < limit) return r % bound;
  }
}

std::vector<std::size_t> BinPlan::bin_sizes() const {
  std::vector<std::size_t> sizes(n_bins, 0);
  for (const auto& [id, bin] : assignment) ++sizes[bin];
  return sizes;
}

BinPlan bin_dataset(std::vector<std::string> question_ids, std::uint64_t seed, std::size_t n_bins) {
  if (n_bins == 0) throw Error(ErrorKind::Arity, "need at least one bin");
  std::sort(question_ids.begin(), question_ids.end());
  question_ids.erase(std::unique(question_ids.begin(), question_ids.end()), question_ids.end());
  if (question_ids.size() < n_bins) {
    throw Error(ErrorKind::Arity, std::to_string(question_ids.size()) + " questions cannot fill " +
                                      std::to_string(n_bins) + " bins");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = question_ids.size() - 1; i > 0; --i) {
    std::swap(question_ids[i], question_ids[uniform_below(rng, i + 1)]);
  }
  BinPlan plan;
  plan.seed = seed;
  plan.n_bins = n_bins;
  for (std::size_t i = 0; i < question_ids.size(); ++i) plan.assignment[question_ids[i]] = i % n_bins;
  return plan;
}

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw Error(ErrorKind::Range, "incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  double x = df / (df + t * t);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

double student_t_upper_p(double t, double df) {
  double half = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0 ? half : 1.0 - half;
}

double student_t_critical(double alpha, double df) {
  double lo = 0.0, hi = 1.0;
  while (student_t_two_sided_p(hi, df) > alpha) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (student_t_two_sided_p(mid, df) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

PairedTTestResult paired_t_test(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error(ErrorKind::Arity, "paired t-test needs equal-length samples");
  if (xs.size() < 2) throw Error(ErrorKind::Arity, "paired t-test needs at least two pairs");
  std::size_t n = xs.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += xs[i] - ys[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double c = (xs[i] - ys[i]) - mean;
    ss += c * c;
  }
  PairedTTestResult r;
  r.df = static_cast<int>(n) - 1;
  r.mean_diff = mean;
  r.sd_diff = std::sqrt(ss / static_cast<double>(n - 1));
  if (r.sd_diff == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t = 0.0;
      r.p_two_sided = 1.0;
      r.p_one_sided = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_two_sided = 0.0;
      r.p_one_sided = mean > 0 ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = mean / (r.sd_diff / std::sqrt(static_cast<double>(n)));
  r.p_two_sided = student_t_two_sided_p(r.t, r.df);
  r.p_one_sided = student_t_upper_p(r.t, r.df);
  return r;
}

double mean_k(const std::vector<KResult>& results) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : results) {
    if (r.excluded) continue;
    sum += r.k;
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::Arity, "mean K over an empty result set");
  return sum / static_cast<double>(n);
}

std::string_view to_string(KMetric m) { return m == KMetric::K ? "K" : "K*"; }

HiddenKnowledgeReport hidden_knowledge_test(const std::vector<KResult>& internal,
                                            const std::map<ScorerKind, std::vector<KResult>>& external,
                                            const BinPlan& plan, double alpha, KMetric metric) {
  if (external.empty()) throw Error(ErrorKind::Config, "hidden-knowledge test needs at least one external scorer");
  auto value = [metric](const KResult& r) { return metric == KMetric::K ? r.k : static_cast<double>(r.k_star); };
  auto included = [](const std::vector<KResult>& rs) {
    std::map<std::string, const KResult*> m;
    for (const auto& r : rs) {
      if (!r.excluded) m[r.question_id] = &r;
    }
    return m;
  };

  auto internal_by_q = included(internal);
  std::set<std::string> ids;
  for (const auto& [q, r] : internal_by_q) ids.insert(q);
  if (ids.empty()) throw Error(ErrorKind::Arity, "no included questions for the internal scorer");

  HiddenKnowledgeReport rep;
  rep.metric = metric;
  rep.alpha = alpha;
  rep.internal = internal.front().scorer;
  rep.questions = ids.size();

  std::map<ScorerKind, std::map<std::string, const KResult*>> external_by_q;
  for (const auto& [scorer, results] : external) {
    auto m = included(results);
    std::set<std::string> other;
    for (const auto& [q, r] : m) other.insert(q);
    if (other != ids) {
      throw Error(ErrorKind::Alignment, std::string(to_string(scorer)) + " covers a different question set than " +
                                            std::string(to_string(rep.internal)));
    }
    external_by_q.emplace(scorer, std::move(m));
  }
  for (const auto& q : ids) {
    if (!plan.assignment.count(q)) throw Error(ErrorKind::Alignment, "question " + q + " is missing from the bin plan");
  }

  auto dataset_mean = [&](const std::map<std::string, const KResult*>& m) {
    double s = 0.0;
    for (const auto& [q, r] : m) s += value(*r);
    return s / static_cast<double>(m.size());
  };
  auto bin_means = [&](const std::map<std::string, const KResult*>& m) {
    std::vector<double> sums(plan.n_bins, 0.0);
    std::vector<std::size_t> counts(plan.n_bins, 0);
    for (const auto& [q, r] : m) {
      auto bin = plan.assignment.at(q);
      sums[bin] += value(*r);
      ++counts[bin];
    }
    std::vector<double> means;
    for (std::size_t b = 0; b < plan.n_bins; ++b) {
      if (counts[b]) means.push_back(sums[b] / static_cast<double>(counts[b]));
    }
    return means;
  };

  double internal_mean = dataset_mean(internal_by_q);
  rep.mean_by_scorer[rep.internal] = internal_mean;
  double best = -1.0;
  for (const auto& [scorer, m] : external_by_q) {
    double mean = dataset_mean(m);
    rep.mean_by_scorer[scorer] = mean;
    if (mean > best) {
      best = mean;
      rep.best_external = scorer;
    }
  }
  auto xs = bin_means(internal_by_q);
  auto ys = bin_means(external_by_q.at(rep.best_external));
  rep.bins_used = xs.size();
  rep.test = paired_t_test(xs, ys);
  rep.mean_gap = internal_mean - best;
  rep.relative_gap = best > 0 ? rep.mean_gap / best : 0.0;
  rep.delta = student_t_critical(alpha, rep.test.df) * rep.test.sd_diff / std::sqrt(static_cast<double>(xs.size()));
  rep.verdict = internal_mean > best && rep.test.p_two_sided < alpha;
  return rep;
}

nlohmann::json to_json(const PairedTTestResult& r) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"t", finite_or_null(r.t)},
          {"df", r.df},
          {"p_two_sided", r.p_two_sided},
          {"p_one_sided", r.p_one_sided},
          {"mean_diff", r.mean_diff},
          {"sd_diff", r.sd_diff},
          {"degenerate", r.degenerate}};
}

nlohmann::json to_json(const HiddenKnowledgeReport& r) {
  nlohmann::json means = nlohmann::json::object();
  for (const auto& [s, m] : r.mean_by_scorer) means[std::string(to_string(s))] = m;
  return {{"metric", std::string(to_string(r.metric))},
          {"internal", std::string(to_string(r.internal))},
          {"best_external", std::string(to_string(r.best_external))},
          {"mean_by_scorer", means},
          {"mean_gap", r.mean_gap},
          {"relative_gap", r.relative_gap},
          {"delta", r.delta},
          {"alpha", r.alpha},
          {"bins_used", r.bins_used},
          {"questions", r.questions},
          {"test", to_json(r.test)},
          {"verdict", r.verdict}};
}

}  // namespace hk
