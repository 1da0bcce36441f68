#include <doctest.h>

#include <sstream>

#include "hk/error.hpp"
#include "hk/pipeline.hpp"
#include "hk/synth.hpp"
#include "support.hpp"

using namespace hk;

namespace {

// Copies the checked-in workspace so runs never write into the source tree.
fs::path copy_volvo(const test::TempDir& dir) {
  auto dst = dir / "ws";
  fs::copy(test::fixture_dir() / "volvo_b58" / "workspace", dst, fs::copy_options::recursive);
  return dst;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return out;
}

const char* no_env(const char*) { return nullptr; }

}  // namespace

TEST_CASE("stage names") {
  for (Stage s : kAllStages) CHECK(stage_from_string(to_string(s)) == s);
  CHECK(to_string(Stage::TrainProbe) == "train-probe");
  CHECK_THROWS_AS(stage_from_string("fit"), Error);
}

TEST_CASE("config parsing") {
  test::TempDir dir("cfg");
  json obj{{"corpus", "c.jsonl"}, {"records", "rec"}, {"scorers", {"paq", "probe"}}, {"alpha", 0.01}};
  auto c = pipeline_config_from_json(obj, dir.path());
  CHECK(c.corpus == dir.path() / "c.jsonl");
  CHECK(c.work_dir == dir.path() / "work");
  CHECK(c.scorers == std::vector<ScorerKind>{ScorerKind::PAQ, ScorerKind::Probe});
  CHECK(c.alpha == 0.01);
  CHECK(c.has_suite("force-gold"));
  CHECK(!c.inject_aliases);
  CHECK(c.judge.error_filters_question);

  // The hash ignores where the workspace lives.
  CHECK(pipeline_config_from_json(obj, dir / "elsewhere").hash() == c.hash());
  auto changed = obj;
  changed["alpha"] = 0.05;
  CHECK(pipeline_config_from_json(changed, dir.path()).hash() != c.hash());

  auto bad = obj;
  bad["colour"] = "blue";
  CHECK_THROWS_AS(pipeline_config_from_json(bad, dir.path()), Error);
  CHECK_THROWS_AS(pipeline_config_from_json(json{{"corpus", "c.jsonl"}}, dir.path()), Error);
  bad = obj;
  bad["all_correct_policy"] = "maybe";
  CHECK_THROWS_AS(pipeline_config_from_json(bad, dir.path()), Error);
  CHECK_THROWS_AS(load_pipeline_config(dir / "missing.json"), Error);
}

TEST_CASE("environment overrides") {
  test::TempDir dir("env");
  auto c = pipeline_config_from_json(json{{"corpus", "c.jsonl"}, {"records", "rec"}}, dir.path());
  apply_env_overrides(c, no_env);
  CHECK(c.judge.endpoint.empty());
  CHECK(c.judge.max_inflight == 4);
  apply_env_overrides(c, [](const char* name) -> const char* {
    std::string n = name;
    if (n == "HK_JUDGE_ENDPOINT") return "http://localhost:9000/v1";
    if (n == "HK_WORKERS") return "9";
    return nullptr;
  });
  CHECK(c.judge.endpoint == "http://localhost:9000/v1");
  CHECK(c.judge.max_inflight == 9);
  CHECK_THROWS_AS(apply_env_overrides(c, [](const char* n) -> const char* {
                    return std::string(n) == "HK_WORKERS" ? "many" : nullptr;
                  }),
                  Error);
}

TEST_CASE("stages refuse to run before their inputs exist") {
  test::TempDir dir("dep");
  auto ws = copy_volvo(dir);
  auto c = load_pipeline_config(ws / "config.json");
  std::ostringstream log;
  try {
    run_stage(Stage::Metrics, c, log);
    FAIL("metrics ran without judged answer sets");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dependency);
    CHECK(std::string(e.what()).find("run ") != std::string::npos);
  }
  run_stage(Stage::Ingest, c, log);
  run_stage(Stage::Assemble, c, log);
  try {
    run_stage(Stage::Metrics, c, log);
    FAIL("metrics ran without judged answer sets");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dependency);
    CHECK(std::string(e.what()).find("run judge first") != std::string::npos);
  }
}

TEST_CASE("published example end to end") {
  test::TempDir dir("volvo_b58");
  auto ws = copy_volvo(dir);
  auto c = load_pipeline_config(ws / "config.json");
  std::ostringstream log;
  auto outcomes = run_pipeline(c, log);
  for (const auto& o : outcomes) CHECK(!o.up_to_date);

  auto k = read_file(ws / "report" / "k_tables.md");
  for (const char* v : {"0.375", "0.250", "0.625", "1.000"}) CHECK(k.find(v) != std::string::npos);
  CHECK(k.find("provenance") != std::string::npos);

  auto kres = load_kresults(ws / "work" / "kresults.jsonl");
  std::map<ScorerKind, double> by;
  for (const auto& r : kres) by[r.scorer] = r.k;
  CHECK(by.at(ScorerKind::PAQ) == 0.375);
  CHECK(by.at(ScorerKind::PNorm) == 0.25);
  CHECK(by.at(ScorerKind::PTrue) == 0.625);
  CHECK(by.at(ScorerKind::Probe) == 1.0);

  auto sets = load_answer_sets(ws / "work" / "answer_sets.judged.jsonl");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].gold_injected);
  CHECK(sets[0].candidates.size() == 6);

  auto selection = json::parse(read_file(ws / "work" / "selection.json"));
  CHECK(selection.dump().find("volvo buses") != std::string::npos);

  auto before = snapshot(ws);
  std::ostringstream log2;
  auto again = run_pipeline(c, log2);
  for (const auto& o : again) {
    CHECK(o.up_to_date);
    CHECK(o.written.empty());
  }
  CHECK(log2.str().find("up-to-date") != std::string::npos);
  CHECK(snapshot(ws) == before);

  // A fresh copy run from scratch produces byte-identical artifacts.
  test::TempDir dir2("volvo2");
  auto ws2 = copy_volvo(dir2);
  run_pipeline(load_pipeline_config(ws2 / "config.json"), log);
  CHECK(snapshot(ws2) == before);
}

TEST_CASE("config changes invalidate stages") {
  test::TempDir dir("inv");
  auto ws = copy_volvo(dir);
  auto c = load_pipeline_config(ws / "config.json");
  std::ostringstream log;
  run_pipeline(c, log);
  c.alpha = 0.01;
  auto outcome = run_stage(Stage::Ingest, c, log);
  CHECK(!outcome.up_to_date);
  auto meta_line = read_file(ws / "work" / "questions.jsonl");
  auto meta = json::parse(meta_line.substr(0, meta_line.find('\n')));
  CHECK(meta.at("_meta").at("config_hash") == c.hash());
  CHECK(meta.at("_meta").at("stage") == "ingest");
  CHECK(provenance_of(c, Stage::Ingest) == meta.at("_meta"));
}

TEST_CASE("synthetic workspace through the whole pipeline") {
  test::TempDir dir("synth");
  SynthOptions opt;
  opt.train = 120;
  opt.dev = 40;
  opt.test = 120;
  opt.dim = 4;
  write_synthetic_workspace(dir.path(), opt);
  auto c = load_pipeline_config(dir / "config.json");
  std::ostringstream log;
  run_pipeline(c, log);
  auto hidden = json::parse(read_file(dir / "work" / "hidden_report.json"));
  REQUIRE(hidden.at("reports").contains("all/K"));
  CHECK(hidden.at("reports").at("all/K").at("verdict") == true);
  auto layers = json::parse(read_file(dir / "work" / "probe_layers.json"));
  CHECK(layers.at("selected_layer") == opt.signal_layer);
  for (const char* f : {"k_tables.md", "hidden_report.json", "selection.md", "force_gold.md", "manifest.json"}) {
    CHECK(fs::exists(dir / "report" / f));
  }
}
