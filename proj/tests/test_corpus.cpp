#include <doctest.h>

#include "hk/corpus.hpp"
#include "hk/error.hpp"
#include "support.hpp"

using namespace hk;

namespace {

Question make(const std::string& id, const std::string& rel, const std::string& subject, const std::string& gold,
              Split split = Split::Test) {
  Question q;
  q.id = id;
  q.fact.relation = rel;
  q.fact.subject = subject;
  q.fact.gold_answer = gold;
  q.text = render_question(default_relations().at(rel), subject);
  q.split = split;
  return q;
}

}  // namespace

TEST_CASE("load_corpus reads valid lines") {
  test::TempDir dir("corpus");
  write_file_atomic(dir / "c.jsonl",
                    R"({"id":"q1","subject":"Alice","relation":"P26","question":"Who is Alice married to?","gold_answer":"Bob","split":"test"})"
                    "\n"
                    R"({"id":"q2","subject":"Dune","relation":"P50","question":"Who is the author of Dune?","gold_answer":["Frank Herbert"],"aliases":["F. Herbert"],"split":"train"})"
                    "\n");
  auto qs = load_corpus(dir / "c.jsonl");
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].fact.gold_answer == "Bob");
  CHECK(qs[1].split == Split::Train);
  CHECK(qs[1].fact.aliases == std::vector<std::string>{"F. Herbert"});
}

TEST_CASE("load_corpus names the missing field") {
  test::TempDir dir("corpus");
  write_file_atomic(dir / "c.jsonl",
                    R"({"id":"q1","subject":"Alice","relation":"P26","question":"Who is Alice married to?","split":"test"})"
                    "\n");
  try {
    load_corpus(dir / "c.jsonl");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("gold_answer") != std::string::npos);
  }
}

TEST_CASE("load_corpus rejects duplicate ids") {
  test::TempDir dir("corpus");
  std::string line = R"({"id":"q1","subject":"A","relation":"P26","question":"Who is A married to?","gold_answer":"B","split":"test"})";
  write_file_atomic(dir / "c.jsonl", line + "\n" + line + "\n");
  CHECK_THROWS_AS(load_corpus(dir / "c.jsonl"), Error);
}

TEST_CASE("2000 questions over four relations load in full") {
  test::TempDir dir("corpus");
  std::vector<Question> qs;
  const char* rels[] = {"P26", "P176", "P264", "P50"};
  for (int r = 0; r < 4; ++r) {
    for (int i = 0; i < 500; ++i) {
      qs.push_back(make(std::string(rels[r]) + "-" + std::to_string(i), rels[r], "S" + std::to_string(i), "O" + std::to_string(i)));
    }
  }
  save_corpus(dir / "c.jsonl", qs);
  auto loaded = load_corpus(dir / "c.jsonl");
  CHECK(loaded.size() == 2000);
  CHECK(loaded == qs);
}

TEST_CASE("relation table") {
  auto rels = default_relations();
  CHECK(rels.size() == 4);
  CHECK(rels.at("P26").symmetric);
  CHECK_FALSE(rels.at("P176").symmetric);
  CHECK(render_question(rels.at("P176"), "Volvo B58") == "Which company is Volvo B58 produced by?");
  CHECK(render_question(rels.at("P50"), "Dune") == "Who is the author of Dune?");
  CHECK(render_question(rels.at("P264"), "X") == "What music label is X represented by?");

  test::TempDir dir("rel");
  write_file_atomic(dir / "r.json", R"({"P9":{"template":"Where is [X]?","hard_to_guess":true,"well_defined":true}})");
  auto loaded = load_relations(dir / "r.json");
  CHECK(loaded.at("P9").template_ == "Where is [X]?");
  CHECK_FALSE(loaded.at("P9").symmetric);
  write_file_atomic(dir / "bad.json", R"({"P9":{"template":"Where is it?"}})");
  CHECK_THROWS_AS(load_relations(dir / "bad.json"), Error);
}

TEST_CASE("check_against_relations flags unknown relations") {
  auto q = make("q1", "P26", "Alice", "Bob");
  q.fact.relation = "P999";
  CHECK_FALSE(check_against_relations({q}, default_relations()).empty());
  CHECK(check_against_relations({make("q2", "P26", "Alice", "Bob")}, default_relations()).empty());
}

TEST_CASE("filter_eval_questions") {
  auto kept = make("q1", "P26", "Alice", "Bob");
  auto leak = make("q2", "P176", "Volvo B58", "Volvo");
  auto buses = make("q3", "P176", "Volvo B58", "Volvo Buses");
  auto dup = make("q4", "P176", "Volvo B58", "Scania");
  auto multi = make("q5", "P50", "Good Omens", "Terry Pratchett");
  multi.fact.extra_golds = {"Neil Gaiman"};

  auto r = filter_eval_questions({kept, leak, buses, dup, multi});
  std::vector<std::string> ids;
  for (const auto& q : r.kept) ids.push_back(q.id);
  CHECK(ids == std::vector<std::string>{"q1", "q3"});
  REQUIRE(r.dropped.size() == 3);
  std::map<std::string, DropReason> reasons;
  for (const auto& d : r.dropped) reasons[d.question.id] = d.reason;
  CHECK(reasons.at("q2") == DropReason::GoldInQuestion);
  CHECK(reasons.at("q4") == DropReason::Duplicate);
  CHECK(reasons.at("q5") == DropReason::MultiGold);
}

TEST_CASE("build_train_split") {
  auto relations = default_relations();
  auto test_q = make("t1", "P26", "Carol", "Alice");
  auto same = make("tr1", "P26", "Carol", "Alice", Split::Train);
  auto leak = make("tr2", "P26", "Alice", "Dave", Split::Train);
  auto reverse = make("tr3", "P26", "Erin", "Carol", Split::Train);
  auto fine = make("tr4", "P26", "Frank", "Grace", Split::Train);
  auto test_p176 = make("t2", "P176", "Model X", "Tesla");
  auto asym = make("tr5", "P176", "Tesla", "Model X Corp", Split::Train);

  auto r = build_train_split({same, leak, reverse, fine, asym}, {test_q, test_p176}, relations);
  std::vector<std::string> ids;
  for (const auto& q : r.kept) ids.push_back(q.id);
  CHECK(ids == std::vector<std::string>{"tr4", "tr5"});
  std::map<std::string, DropReason> reasons;
  for (const auto& d : r.dropped) reasons[d.question.id] = d.reason;
  CHECK(reasons.at("tr1") == DropReason::InTest);
  CHECK(reasons.at("tr2") == DropReason::SymmetricLeak);
  CHECK(reasons.at("tr3") == DropReason::SymmetricLeak);
}

TEST_CASE("corpus round-trip is canonical") {
  auto q = make("q1", "P50", "Dune", "Frank Herbert");
  q.fact.aliases = {"F. Herbert"};
  auto line = corpus_line(q);
  CHECK(line == corpus_line(q));
  CHECK(line.find("\"aliases\"") != std::string::npos);
  test::TempDir dir("rt");
  save_corpus(dir / "c.jsonl", {q});
  CHECK(load_corpus(dir / "c.jsonl").at(0) == q);
}
