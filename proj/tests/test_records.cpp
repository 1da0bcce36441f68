#include <doctest.h>

#include <cstring>

#include "hk/error.hpp"
#include "hk/records.hpp"
#include "support.hpp"

using namespace hk;

namespace {

CandidateRecord basic(const std::string& norm = "paris") {
  CandidateRecord r;
  r.question_id = "q1";
  r.answer_raw = "Paris";
  r.answer_norm = norm;
  r.provenance = Provenance::Sampled;
  r.sample_count = 3;
  r.answer_logprobs = {{"Par", -0.1}, {"is", -0.2}};
  r.verification = VerificationLogits{1.0, -1.0};
  return r;
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("validate_record") {
  CHECK(validate_record(basic()).empty());

  auto pos = basic();
  pos.answer_logprobs[1].logprob = 0.5;
  CHECK(mentions(validate_record(pos), "logprob positive"));

  auto tiny = basic();
  tiny.answer_logprobs[0].logprob = 5e-7;
  CHECK(validate_record(tiny).empty());

  auto dim = basic();
  dim.hidden = {{12, 0, 4095}};
  auto v = validate_record(dim, {{12, 4096}});
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("layer 12") != std::string::npos);

  auto gold = basic();
  gold.provenance = Provenance::GoldInjected;
  CHECK_FALSE(validate_record(gold).empty());

  auto nan = basic();
  nan.verification = VerificationLogits{std::nan(""), 0.0};
  CHECK_FALSE(validate_record(nan).empty());
}

TEST_CASE("record json round-trip") {
  auto r = basic();
  r.hidden = {{3, 16, 2}};
  r.verdict = Verdict::Incorrect;
  CHECK(record_from_json(to_json(r)) == r);
  auto obj = to_json(r);
  CHECK(obj.at("provenance") == "sampled");
  CHECK(obj.at("hidden").at(0).at("dim") == 2);
}

TEST_CASE("verdict letters") {
  CHECK(verdict_letter(Verdict::Correct) == 'A');
  CHECK(verdict_letter(Verdict::Incorrect) == 'B');
  CHECK(verdict_letter(Verdict::WrongGold) == 'C');
  CHECK(verdict_letter(Verdict::Error) == 'D');
  CHECK(verdict_from_letter('b') == Verdict::Incorrect);
  CHECK_FALSE(verdict_from_letter('E').has_value());
}

TEST_CASE("append semantics") {
  test::TempDir dir("store");
  auto store = RecordStore::open(dir.path());
  store.append(basic());
  CHECK(store.size() == 1);
  store.append(basic());
  CHECK(store.size() == 1);
  auto other = basic();
  other.answer_logprobs[0].logprob = -0.3;
  try {
    store.append(other);
    FAIL("expected conflict");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Conflict);
  }
  auto bad = basic("london");
  bad.answer_logprobs[0].logprob = 0.5;
  CHECK_THROWS_AS(store.append(bad), Error);
  CHECK(store.size() == 1);

  auto g1 = basic("a");
  g1.provenance = Provenance::Greedy;
  auto g2 = basic("b");
  g2.provenance = Provenance::Greedy;
  store.append(g1);
  CHECK_THROWS_AS(store.append(g2), Error);
}

TEST_CASE("hidden sidecar round-trip") {
  test::TempDir dir("hidden");
  auto store = RecordStore::open(dir.path());
  std::vector<float> v{1.0f, -2.0f};
  auto ref = store.write_hidden("q1", "paris", 4, v);
  CHECK(store.read_hidden(ref) == v);

  std::vector<float> zeros(4096, 0.0f);
  auto zref = store.write_hidden("q1", "london", 7, zeros);
  auto back = store.read_hidden(zref);
  CHECK(back.size() == 4096);
  CHECK(std::all_of(back.begin(), back.end(), [](float f) { return f == 0.0f; }));

  try {
    store.read_hidden({4, 1 << 20, 2});
    FAIL("expected range error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Range);
  }
  CHECK_THROWS_AS(store.write_hidden("q1", "rome", 4, std::vector<float>{1.0f}), Error);

  // Values are stored little-endian float32, bit-exact.
  std::vector<float> odd{std::numeric_limits<float>::denorm_min(), -0.0f, 3.14159274f};
  auto oref = store.write_hidden("q2", "x", 9, odd);
  auto oback = store.read_hidden(oref);
  CHECK(std::memcmp(odd.data(), oback.data(), sizeof(float) * odd.size()) == 0);
}

TEST_CASE("flush and reopen") {
  test::TempDir dir("reopen");
  {
    auto store = RecordStore::open(dir.path());
    auto r = basic();
    std::vector<float> h{0.5f, 0.25f, 0.125f};
    r.hidden.push_back(store.write_hidden(r.question_id, r.answer_norm, 2, h));
    store.append(r);
    store.append(basic("london"));
    store.flush();
  }
  auto store = RecordStore::open(dir.path());
  CHECK(store.size() == 2);
  const auto* r = store.find("q1", "paris");
  REQUIRE(r);
  REQUIRE(r->hidden_for_layer(2));
  CHECK(store.read_hidden(*r->hidden_for_layer(2)) == std::vector<float>{0.5f, 0.25f, 0.125f});
  CHECK(store.layer_dims().at(2) == 3);
  auto idx = json::parse(read_file(dir / "hidden.idx.json"));
  CHECK(idx.contains("q1|paris|2"));
  CHECK(idx["q1|paris|2"]["dim"] == 3);
  CHECK(store.records_for("q1").size() == 2);
}

TEST_CASE("references past the sidecar are rejected") {
  test::TempDir dir("refs");
  auto store = RecordStore::open(dir.path());
  auto r = basic();
  r.hidden = {{1, 0, 8}};
  CHECK_THROWS_AS(store.append(r), Error);
}
