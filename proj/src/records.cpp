#include "hk/records.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include "hk/error.hpp"
#include "hk/io.hpp"

namespace hk {

namespace {

constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kSidecarFile = "hidden.f32";
constexpr const char* kIndexFile = "hidden.idx.json";

std::string index_key(const std::string& qid, const std::string& answer_norm, int layer) {
  return qid + "|" + answer_norm + "|" + std::to_string(layer);
}

void encode_le(float v, char* out) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
}

float decode_le(const char* in) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(static_cast<unsigned char>(in[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Greedy: return "greedy";
    case Provenance::Sampled: return "sampled";
    case Provenance::GoldInjected: return "gold_injected";
  }
  return "sampled";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "greedy") return Provenance::Greedy;
  if (s == "sampled") return Provenance::Sampled;
  if (s == "gold_injected") return Provenance::GoldInjected;
  throw Error(ErrorKind::Parse, "unknown provenance \"" + std::string(s) + "\"");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Unlabeled: return "unlabeled";
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::WrongGold: return "wrong_gold";
    case Verdict::Error: return "error";
  }
  return "unlabeled";
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "unlabeled") return Verdict::Unlabeled;
  if (s == "correct") return Verdict::Correct;
  if (s == "incorrect") return Verdict::Incorrect;
  if (s == "wrong_gold") return Verdict::WrongGold;
  if (s == "error") return Verdict::Error;
  throw Error(ErrorKind::Parse, "unknown verdict \"" + std::string(s) + "\"");
}

char verdict_letter(Verdict v) {
  switch (v) {
    case Verdict::Correct: return 'A';
    case Verdict::Incorrect: return 'B';
    case Verdict::WrongGold: return 'C';
    case Verdict::Error: return 'D';
    case Verdict::Unlabeled: break;
  }
  return '?';
}

std::optional<Verdict> verdict_from_letter(char letter) {
  switch (letter) {
    case 'A': case 'a': return Verdict::Correct;
    case 'B': case 'b': return Verdict::Incorrect;
    case 'C': case 'c': return Verdict::WrongGold;
    case 'D': case 'd': return Verdict::Error;
    default: return std::nullopt;
  }
}

const HiddenStateRef* CandidateRecord::hidden_for_layer(int layer) const {
  for (const auto& h : hidden) {
    if (h.layer == layer) return &h;
  }
  return nullptr;
}

json to_json(const CandidateRecord& r) {
  json obj;
  obj["question_id"] = r.question_id;
  obj["answer_raw"] = r.answer_raw;
  obj["answer_norm"] = r.answer_norm;
  obj["provenance"] = std::string(to_string(r.provenance));
  obj["sample_count"] = r.sample_count;
  json lps = json::array();
  for (const auto& t : r.answer_logprobs) lps.push_back({{"token", t.token}, {"logprob", t.logprob}});
  obj["answer_logprobs"] = lps;
  if (r.verification) {
    obj["verification"] = {{"logit_true", r.verification->logit_true}, {"logit_false", r.verification->logit_false}};
  }
  json hidden = json::array();
  for (const auto& h : r.hidden) hidden.push_back({{"layer", h.layer}, {"offset", h.offset}, {"dim", h.dim}});
  obj["hidden"] = hidden;
  obj["verdict"] = std::string(to_string(r.verdict));
  return obj;
}

CandidateRecord record_from_json(const json& obj, std::size_t line) {
  CandidateRecord r;
  r.question_id = require_field<std::string>(obj, "question_id", line);
  r.answer_raw = obj.value("answer_raw", "");
  r.answer_norm = require_field<std::string>(obj, "answer_norm", line);
  r.provenance = provenance_from_string(require_field<std::string>(obj, "provenance", line));
  r.sample_count = obj.value("sample_count", std::int64_t{0});
  try {
    if (auto it = obj.find("answer_logprobs"); it != obj.end() && !it->is_null()) {
      for (const auto& t : *it) r.answer_logprobs.push_back({t.value("token", ""), t.at("logprob").get<double>()});
    }
    if (auto it = obj.find("verification"); it != obj.end() && !it->is_null()) {
      r.verification = VerificationLogits{it->at("logit_true").get<double>(), it->at("logit_false").get<double>()};
    }
    if (auto it = obj.find("hidden"); it != obj.end() && !it->is_null()) {
      for (const auto& h : *it) {
        r.hidden.push_back({h.at("layer").get<int>(), h.at("offset").get<std::uint64_t>(), h.at("dim").get<std::uint32_t>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + e.what());
  }
  r.verdict = verdict_from_string(obj.value("verdict", "unlabeled"));
  return r;
}

std::vector<std::string> validate_record(const CandidateRecord& record,
                                         const std::map<int, std::uint32_t>& expected_dims) {
  std::vector<std::string> v;
  if (record.question_id.empty()) v.emplace_back("question_id empty");
  if (record.answer_norm.empty()) v.emplace_back("answer_norm empty");
  if (record.sample_count < 0) v.emplace_back("sample_count negative");
  if (record.provenance == Provenance::GoldInjected && record.sample_count != 0) {
    v.emplace_back("gold_injected record has nonzero sample_count");
  }
  for (std::size_t i = 0; i < record.answer_logprobs.size(); ++i) {
    double lp = record.answer_logprobs[i].logprob;
    if (!std::isfinite(lp)) {
      v.push_back("logprob " + std::to_string(i) + " not finite");
    } else if (lp > kLogprobTolerance) {
      v.push_back("logprob positive at token " + std::to_string(i));
    }
  }
  if (record.verification &&
      (!std::isfinite(record.verification->logit_true) || !std::isfinite(record.verification->logit_false))) {
    v.emplace_back("verification logits not finite");
  }
  std::set<int> layers;
  for (const auto& h : record.hidden) {
    if (h.layer < 0) v.push_back("hidden layer " + std::to_string(h.layer) + " negative");
    if (h.dim == 0) v.push_back("hidden dim zero at layer " + std::to_string(h.layer));
    if (!layers.insert(h.layer).second) v.push_back("layer " + std::to_string(h.layer) + " referenced twice");
    auto it = expected_dims.find(h.layer);
    if (it != expected_dims.end() && it->second != h.dim) {
      v.push_back("layer " + std::to_string(h.layer) + ": dim " + std::to_string(h.dim) + " but layer expects " +
                  std::to_string(it->second));
    }
  }
  return v;
}

RecordStore RecordStore::open(const fs::path& dir) {
  RecordStore store;
  store.dir_ = dir;
  fs::create_directories(dir);
  if (fs::exists(dir / kSidecarFile)) store.sidecar_size_ = fs::file_size(dir / kSidecarFile);
  if (fs::exists(dir / kIndexFile)) {
    json idx = json::parse(read_file(dir / kIndexFile));
    for (const auto& [key, v] : idx.items()) {
      auto bar = key.rfind('|');
      int layer = std::stoi(key.substr(bar + 1));
      store.hidden_index_[key] = {layer, v.at("offset").get<std::uint64_t>(), v.at("dim").get<std::uint32_t>()};
    }
  }
  if (fs::exists(dir / kRecordsFile)) {
    for_each_jsonl(dir / kRecordsFile, [&](const json& obj, std::size_t line) {
      auto rec = record_from_json(obj, line);
      auto key = key_of(rec);
      auto [it, inserted] = store.records_.emplace(key, rec);
      if (!inserted && it->second != rec) {
        throw Error(ErrorKind::Conflict, "records.jsonl line " + std::to_string(line) + ": conflicting payload for (" +
                                             key.first + ", " + key.second + ")");
      }
      for (const auto& h : rec.hidden) store.layer_dims_.emplace(h.layer, h.dim);
    });
  }
  for (const auto& [key, ref] : store.hidden_index_) store.layer_dims_.emplace(ref.layer, ref.dim);
  return store;
}

void RecordStore::append(const CandidateRecord& record) {
  auto violations = validate_record(record, layer_dims_);
  for (const auto& h : record.hidden) {
    if (h.offset + 4ull * h.dim > sidecar_size_) {
      violations.push_back("hidden ref at layer " + std::to_string(h.layer) + " exceeds sidecar");
    }
  }
  if (!violations.empty()) {
    std::string msg = "(" + record.question_id + ", " + record.answer_norm + "):";
    for (const auto& v : violations) msg += " " + v + ";";
    throw Error(ErrorKind::Validation, msg);
  }
  auto key = key_of(record);
  if (auto it = records_.find(key); it != records_.end()) {
    if (it->second == record) return;
    throw Error(ErrorKind::Conflict, "(" + key.first + ", " + key.second + ") already stored with a different payload");
  }
  if (record.provenance == Provenance::Greedy) {
    for (const auto* other : records_for(record.question_id)) {
      if (other->provenance == Provenance::Greedy) {
        throw Error(ErrorKind::Validation, "question " + record.question_id + " already has a greedy record");
      }
    }
  }
  std::ofstream out(dir_ / kRecordsFile, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorKind::Io, "cannot append to " + (dir_ / kRecordsFile).string());
  out << to_json(record).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "short write to records.jsonl");
  records_.emplace(key, record);
  for (const auto& h : record.hidden) layer_dims_.emplace(h.layer, h.dim);
}

HiddenStateRef RecordStore::write_hidden(const std::string& question_id, const std::string& answer_norm, int layer,
                                         std::span<const float> values) {
  if (values.empty()) throw Error(ErrorKind::Shape, "empty hidden vector");
  auto dim = static_cast<std::uint32_t>(values.size());
  if (auto it = layer_dims_.find(layer); it != layer_dims_.end() && it->second != dim) {
    throw Error(ErrorKind::Shape, "layer " + std::to_string(layer) + " expects dim " + std::to_string(it->second) +
                                      ", got " + std::to_string(dim));
  }
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) encode_le(values[i], bytes.data() + 4 * i);
  std::ofstream out(dir_ / kSidecarFile, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorKind::Io, "cannot append to hidden.f32");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "short write to hidden.f32");
  HiddenStateRef ref{layer, sidecar_size_, dim};
  sidecar_size_ += bytes.size();
  layer_dims_.emplace(layer, dim);
  hidden_index_[index_key(question_id, answer_norm, layer)] = ref;
  return ref;
}

std::vector<float> RecordStore::read_hidden(const HiddenStateRef& ref) const {
  auto path = dir_ / kSidecarFile;
  std::uint64_t size = fs::exists(path) ? fs::file_size(path) : 0;
  if (ref.dim == 0 || ref.offset > size || 4ull * ref.dim > size - ref.offset) {
    throw Error(ErrorKind::Range, "hidden ref (offset " + std::to_string(ref.offset) + ", dim " +
                                      std::to_string(ref.dim) + ") outside sidecar of " + std::to_string(size) + " bytes");
  }
  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(ref.offset));
  std::string bytes(4ull * ref.dim, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorKind::Io, "short read from hidden.f32");
  std::vector<float> out(ref.dim);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode_le(bytes.data() + 4 * i);
  return out;
}

const CandidateRecord* RecordStore::find(const std::string& question_id, const std::string& answer_norm) const {
  auto it = records_.find({question_id, answer_norm});
  return it == records_.end() ? nullptr : &it->second;
}

std::vector<const CandidateRecord*> RecordStore::records_for(const std::string& question_id) const {
  std::vector<const CandidateRecord*> out;
  for (auto it = records_.lower_bound({question_id, ""}); it != records_.end() && it->first.first == question_id; ++it) {
    out.push_back(&it->second);
  }
  return out;
}

void RecordStore::flush() const {
  std::string lines;
  for (const auto& [key, rec] : records_) {
    lines += to_json(rec).dump();
    lines += '\n';
  }
  write_file_atomic(dir_ / kRecordsFile, lines);
  json idx = json::object();
  for (const auto& [key, ref] : hidden_index_) idx[key] = {{"offset", ref.offset}, {"dim", ref.dim}};
  write_file_atomic(dir_ / kIndexFile, idx.dump(1) + "\n");
}

}  // namespace hk
