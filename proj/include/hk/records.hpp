#pragma once

// Model-evidence schema and its on-disk store.
//
// A store is a directory holding
//   records.jsonl    one CandidateRecord per line
//   hidden.f32       raw little-endian float32 vectors
//   hidden.idx.json  "question_id|answer_norm|layer" -> {offset, dim}
// Keys are (question_id, answer_norm); iteration is sorted by key.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace hk {

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;  // natural log

  bool operator==(const TokenLogprob&) const = default;
};

struct VerificationLogits {
  double logit_true = 0.0;
  double logit_false = 0.0;

  bool operator==(const VerificationLogits&) const = default;
};

struct HiddenStateRef {
  int layer = 0;
  std::uint64_t offset = 0;  // bytes into hidden.f32
  std::uint32_t dim = 0;

  bool operator==(const HiddenStateRef&) const = default;
};

enum class Provenance { Greedy, Sampled, GoldInjected };

// Letters follow the judge's grade lines: A correct, B incorrect, C wrong gold, D error.
enum class Verdict { Unlabeled, Correct, Incorrect, WrongGold, Error };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);
std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);
char verdict_letter(Verdict v);
std::optional<Verdict> verdict_from_letter(char letter);

struct CandidateRecord {
  std::string question_id;
  std::string answer_raw;
  std::string answer_norm;
  Provenance provenance = Provenance::Sampled;
  std::int64_t sample_count = 0;
  std::vector<TokenLogprob> answer_logprobs;
  std::optional<VerificationLogits> verification;
  std::vector<HiddenStateRef> hidden;
  Verdict verdict = Verdict::Unlabeled;

  const HiddenStateRef* hidden_for_layer(int layer) const;
  bool operator==(const CandidateRecord&) const = default;
};

using RecordKey = std::pair<std::string, std::string>;  // (question_id, answer_norm)

inline RecordKey key_of(const CandidateRecord& r) { return {r.question_id, r.answer_norm}; }

nlohmann::json to_json(const CandidateRecord& r);
CandidateRecord record_from_json(const nlohmann::json& obj, std::size_t line = 0);

inline constexpr double kLogprobTolerance = 1e-6;

/// Every schema violation in the record; empty means valid.
std::vector<std::string> validate_record(const CandidateRecord& record,
                                         const std::map<int, std::uint32_t>& expected_dims = {});

class RecordStore {
 public:
  /// Opens (or creates) a store directory and loads its index.
  static RecordStore open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::size_t size() const { return records_.size(); }

  /// Durably appends the record. Re-appending an identical record is a no-op.
  /// Throws Conflict when the key exists with a different payload.
  void append(const CandidateRecord& record);

  /// Appends one vector to the sidecar and indexes it; the returned ref must be
  /// attached to the record before it is appended.
  HiddenStateRef write_hidden(const std::string& question_id, const std::string& answer_norm, int layer,
                              std::span<const float> values);

  std::vector<float> read_hidden(const HiddenStateRef& ref) const;

  const CandidateRecord* find(const std::string& question_id, const std::string& answer_norm) const;
  const std::map<RecordKey, CandidateRecord>& records() const { return records_; }
  std::vector<const CandidateRecord*> records_for(const std::string& question_id) const;

  /// Layer dims observed so far; the first vector written per layer fixes it.
  const std::map<int, std::uint32_t>& layer_dims() const { return layer_dims_; }

  /// Rewrites records.jsonl and hidden.idx.json in sorted order.
  void flush() const;

 private:
  std::filesystem::path dir_;
  std::map<RecordKey, CandidateRecord> records_;
  std::map<int, std::uint32_t> layer_dims_;
  std::map<std::string, HiddenStateRef> hidden_index_;
  std::uint64_t sidecar_size_ = 0;
};

}  // namespace hk
