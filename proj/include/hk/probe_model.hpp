#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace hk {

struct TrainMeta {
  double l2 = 0.0;
  int iterations = 0;
  double final_loss = 0.0;

  bool operator==(const TrainMeta&) const = default;
};

/// Linear probe on standardized hidden states: sigmoid(w . (x - mean) / std + b).
struct ProbeModel {
  int layer = 0;
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;  // every entry > 0
  TrainMeta train_meta;

  std::size_t dim() const { return weights.size(); }
  /// Probability that the answer behind `features` is correct. Throws Shape on dim mismatch.
  double predict(std::span<const float> features) const;
  double predict(std::span<const double> features) const;
  bool operator==(const ProbeModel&) const = default;
};

double sigmoid(double z);

nlohmann::json to_json(const ProbeModel& probe);
ProbeModel probe_from_json(const nlohmann::json& obj);
ProbeModel load_probe(const std::filesystem::path& path);
void save_probe(const std::filesystem::path& path, const ProbeModel& probe);

}  // namespace hk
