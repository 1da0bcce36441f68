#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "hk/error.hpp"
#include "hk/judge.hpp"
#include "support.hpp"

using namespace hk;

namespace {

Question question(const std::string& id = "q1") {
  Question q;
  q.id = id;
  q.fact.subject = "Umberto I of Italy";
  q.fact.relation = "P26";
  q.fact.gold_answer = "Margherita of Savoy";
  q.text = "Who is Umberto I of Italy married to?";
  return q;
}

JudgeConfig config() {
  JudgeConfig c;
  c.templates = default_judge_templates();
  return c;
}

// Scripted client: answers by candidate text found in the prompt.
class ScriptedClient : public JudgeClient {
 public:
  std::map<std::string, std::vector<std::string>> replies;  // answer -> successive completions
  std::atomic<int> calls{0};
  std::mutex mu;

  std::string complete(const std::string& prompt) override {
    ++calls;
    std::lock_guard lock(mu);
    for (auto& [answer, queue] : replies) {
      if (prompt.find("Proposed answer: " + answer + "\n") != std::string::npos && !queue.empty()) {
        auto r = queue.front();
        if (queue.size() > 1) queue.erase(queue.begin());
        return r;
      }
    }
    return "Output: B";
  }
};

class FailingClient : public JudgeClient {
 public:
  std::atomic<int> budget;
  explicit FailingClient(int n) : budget(n) {}
  std::string complete(const std::string&) override {
    if (budget.fetch_sub(1) <= 0) throw Error(ErrorKind::Transport, "connection refused");
    return "Output: B";
  }
};

AnswerSet set_of(const std::string& qid, const std::vector<std::string>& answers) {
  AnswerSet s;
  s.question_id = qid;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    auto c = test::candidate(qid, normalize_answer(answers[i]), Verdict::Unlabeled,
                             i == 0 ? Provenance::Greedy : Provenance::Sampled);
    c.answer_raw = answers[i];
    s.candidates.push_back(c);
  }
  return s;
}

}  // namespace

TEST_CASE("exact_match") {
  CHECK(exact_match("The Paris", "paris", {}));
  CHECK_FALSE(exact_match("London", "Paris", {}));
  CHECK(exact_match("NYC", "New York City", {"NYC"}));
}

TEST_CASE("render_judge_prompt") {
  auto c = config();
  auto p = render_judge_prompt(c, "P26", "Who is X married to?", "Y", "Z");
  for (const char* grade : {"A: CORRECT", "B: INCORRECT", "C: WRONG_GOLD", "D: ERROR"}) {
    CHECK(p.find(grade) != std::string::npos);
  }
  CHECK(p.find("Question: Who is X married to?") != std::string::npos);
  CHECK(p.find("Gold answer: Y") != std::string::npos);
  CHECK(p.find("Proposed answer: Z") != std::string::npos);
  CHECK(p == render_judge_prompt(c, "P26", "Who is X married to?", "Y", "Z"));
  CHECK_THROWS_AS(render_judge_prompt(c, "P999", "q", "g", "a"), Error);
  // Placeholders inside substituted values are not expanded again.
  auto nested = render_judge_prompt(c, "P26", "{answer}", "Y", "Z");
  CHECK(nested.find("Question: {answer}") != std::string::npos);
  for (const auto& [rel, t] : default_judge_templates()) {
    CHECK(t.find("{question}") != std::string::npos);
    CHECK(t.find("{gold_answer}") != std::string::npos);
    CHECK(t.find("{answer}") != std::string::npos);
  }
}

TEST_CASE("parse_verdict") {
  auto a = parse_verdict("...steps... Output: A");
  CHECK(a.verdict == Verdict::Correct);
  CHECK(a.reasoning == "...steps...");
  auto b = parse_verdict("Output: B\n");
  CHECK(b.verdict == Verdict::Incorrect);
  CHECK(b.reasoning.empty());
  CHECK_THROWS_AS(parse_verdict("the answer is A"), Error);
  CHECK(parse_verdict("Output: A then more. OUTPUT: **\"C\"**").verdict == Verdict::WrongGold);
  CHECK_THROWS_AS(parse_verdict("Output: Absolutely"), Error);
  CHECK_THROWS_AS(parse_verdict("Output:   "), Error);
}

TEST_CASE("consistency heuristics") {
  CHECK(apply_consistency_heuristics(Verdict::Correct, "Step 4: refers to a different person") == Verdict::Error);
  CHECK(apply_consistency_heuristics(Verdict::Incorrect, "Step 4: they refer to the same entity") == Verdict::Error);
  CHECK(apply_consistency_heuristics(Verdict::Correct, "Step 3: same person, output A") == Verdict::Correct);
  CHECK(apply_consistency_heuristics(Verdict::Incorrect, "Step 4: a different person") == Verdict::Incorrect);
  // Only the final step 4 section is inspected.
  CHECK(apply_consistency_heuristics(Verdict::Correct, "Step 4: different? step 4: no, same") == Verdict::Correct);
}

TEST_CASE("adjudication: exact matches need no judge") {
  ScriptedClient client;
  auto shared = std::shared_ptr<JudgeClient>(&client, [](JudgeClient*) {});
  LlmJudge judge(config(), shared);
  auto r = adjudicate_answer_set(set_of("q1", {"Margherita of Savoy", "the Margherita of Savoy"}), question(), judge);
  CHECK(r.judge_calls == 0);
  CHECK(client.calls == 0);
  for (const auto& c : r.set.candidates) CHECK(c.verdict == Verdict::Correct);
  CHECK(r.set.flags.all_correct);
}

TEST_CASE("adjudication: dispositions") {
  ScriptedClient client;
  client.replies["Queen Margherita"] = {"Step 3: same person. Output: A"};
  client.replies["Maria Pia"] = {"Step 4: a different person. Output: B"};
  client.replies["Nobody"] = {"Step 4: unclear. Output: D"};
  client.replies["Garbage"] = {"no verdict here", "still nothing"};
  auto shared = std::shared_ptr<JudgeClient>(&client, [](JudgeClient*) {});
  LlmJudge judge(config(), shared);

  auto kept = adjudicate_answer_set(set_of("q1", {"Queen Margherita", "Maria Pia"}), question(), judge);
  CHECK_FALSE(kept.set.filtered);
  CHECK(kept.set.candidates[0].verdict == Verdict::Correct);
  CHECK(kept.set.candidates[1].verdict == Verdict::Incorrect);
  CHECK(kept.verdicts.size() == 2);

  auto filtered = adjudicate_answer_set(set_of("q1", {"Maria Pia", "Nobody"}), question(), judge);
  CHECK(filtered.set.filtered);

  int before = client.calls;
  auto unparsed = adjudicate_answer_set(set_of("q1", {"Maria Pia", "Garbage"}), question(), judge);
  CHECK(client.calls - before == 3);  // one retry for the unparseable completion
  CHECK(unparsed.set.candidates[1].verdict == Verdict::Error);
  CHECK(unparsed.set.filtered);

  auto lenient = adjudicate_answer_set(set_of("q1", {"Maria Pia", "Garbage"}), question(), judge, false);
  CHECK_FALSE(lenient.set.filtered);
  CHECK(lenient.set.candidates.size() == 1);
}

TEST_CASE("adjudicate_all keeps order and reports partial results on transport failure") {
  std::vector<AnswerSet> sets;
  std::map<std::string, Question> qs;
  for (int i = 0; i < 40; ++i) {
    auto id = "q" + std::to_string(i);
    sets.push_back(set_of(id, {"Maria Pia", "Someone " + std::to_string(i)}));
    qs[id] = question(id);
  }
  ScriptedClient ok;
  LlmJudge judge(config(), std::shared_ptr<JudgeClient>(&ok, [](JudgeClient*) {}));
  auto results = adjudicate_all(sets, qs, judge, 4);
  REQUIRE(results.size() == 40);
  for (std::size_t i = 0; i < results.size(); ++i) CHECK(results[i].set.question_id == sets[i].question_id);

  FailingClient failing(15);
  LlmJudge flaky(config(), std::shared_ptr<JudgeClient>(&failing, [](JudgeClient*) {}));
  try {
    adjudicate_all(sets, qs, flaky, 3);
    FAIL("expected a transport error");
  } catch (const JudgeTransportError& e) {
    CHECK(e.kind() == ErrorKind::Transport);
    CHECK(e.completed().size() <= 8);
    for (const auto& a : e.completed()) CHECK(a.verdicts.size() == 2);
  }
}

TEST_CASE("offline verdicts") {
  test::TempDir dir("verdicts");
  VerdictEntry v{"q1", "maria pia", Verdict::Incorrect, "different person"};
  write_file_atomic(dir / "v.jsonl", verdict_line(v) + "\n");
  auto loaded = load_verdicts(dir / "v.jsonl");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded.begin()->second == v);

  OfflineVerdicts source(loaded);
  auto r = adjudicate_answer_set(set_of("q1", {"Maria Pia"}), question(), source);
  CHECK(r.set.candidates[0].verdict == Verdict::Incorrect);
  CHECK_THROWS_AS(adjudicate_answer_set(set_of("q1", {"Unknown"}), question(), source), Error);

  write_file_atomic(dir / "bad.jsonl", R"({"question_id":"q1","answer_norm":"x","verdict_letter":"Z"})" "\n");
  CHECK_THROWS_AS(load_verdicts(dir / "bad.jsonl"), Error);
}

TEST_CASE("HTTP judge against a local chat-completions server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_model;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    auto body = json::parse(req.body);
    seen_model = body.at("model").get<std::string>();
    CHECK(body.at("temperature") == 0);
    auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    std::string letter = prompt.find("Proposed answer: Queen Margherita") != std::string::npos ? "A" : "B";
    json reply{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "Step 3. Output: " + letter}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto c = config();
  c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  c.model = "judge-model";
  c.max_retries = 2;
  c.timeout = std::chrono::milliseconds(5000);
  auto client = std::make_shared<HttpJudgeClient>(c);
  LlmJudge judge(c, client);
  auto r = adjudicate_answer_set(set_of("q1", {"Queen Margherita", "Maria Pia"}), question(), judge);
  CHECK(r.set.candidates[0].verdict == Verdict::Correct);
  CHECK(r.set.candidates[1].verdict == Verdict::Incorrect);
  CHECK(seen_model == "judge-model");
  CHECK(hits == 3);

  server.stop();
  th.join();

  auto dead = config();
  dead.endpoint = "http://127.0.0.1:" + std::to_string(port);
  dead.max_retries = 0;
  dead.timeout = std::chrono::milliseconds(500);
  try {
    HttpJudgeClient(dead).complete("x");
    FAIL("expected a transport error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Transport);
  }
  auto bad = config();
  bad.endpoint = "ftp://nowhere";
  CHECK_THROWS_AS(HttpJudgeClient{bad}, Error);
}

TEST_CASE("judge quality estimation") {
  std::vector<QualityAnnotation> table{{AnnotationGroup::ExactMatch, 669, 669, 669},
                                       {AnnotationGroup::JudgePositive, 2887, 135, 129},
                                       {AnnotationGroup::JudgeNegative, 311324, 135, 0}};
  auto q = estimate_judge_quality(table);
  double judge_tp = q.tp - 669;
  CHECK(std::abs(judge_tp - 2757.1) <= 2.0);
  CHECK(q.fp == doctest::Approx(2887.0 * 6 / 135));
  CHECK(q.fn == 0.0);
  CHECK(q.tn == 311324.0);
  CHECK(q.recall == 1.0);
  CHECK(q.accuracy > 0.99);
  CHECK(q.exact_match_recall == doctest::Approx(669.0 / q.tp));

  std::vector<QualityAnnotation> perfect{{AnnotationGroup::ExactMatch, 10, 10, 10},
                                         {AnnotationGroup::JudgePositive, 20, 5, 5},
                                         {AnnotationGroup::JudgeNegative, 30, 5, 0}};
  auto p = estimate_judge_quality(perfect);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.f1 == 1.0);

  CHECK_THROWS_AS(estimate_judge_quality({table[0], table[1]}), Error);
  auto no_sample = table;
  no_sample[1].sample_size = 0;
  no_sample[1].human_correct_count = 0;
  CHECK_THROWS_AS(estimate_judge_quality(no_sample), Error);
}
