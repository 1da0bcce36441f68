#pragma once

// Synthetic workspaces: a corpus, an evidence store and offline verdicts with
// a planted hidden-knowledge signal at one layer.

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace hk {

struct SynthOptions {
  std::size_t train = 240;
  std::size_t dev = 80;
  std::size_t test = 400;
  std::vector<int> layers{0, 1, 2};
  int signal_layer = 1;
  std::uint32_t dim = 8;
  std::uint64_t seed = 7;
  double hidden_separation = 1.5;  // distance of class means along the planted direction
  double external_noise = 1.5;     // sd of the noise added to external evidence
  double no_correct_rate = 0.3;    // share of questions whose samples miss every correct answer
};

struct SynthSummary {
  std::size_t questions = 0;
  std::size_t records = 0;
  std::size_t verdicts = 0;
};

/// Writes corpus.jsonl, relations.json, records/, verdicts.jsonl and config.json under `dir`.
SynthSummary write_synthetic_workspace(const std::filesystem::path& dir, const SynthOptions& options);

/// Portable draws: identical sequences on every standard library.
double uniform01(std::mt19937_64& rng);
double standard_normal(std::mt19937_64& rng);

}  // namespace hk
