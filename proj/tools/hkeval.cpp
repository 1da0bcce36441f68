#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hk/error.hpp"
#include "hk/pipeline.hpp"
#include "hk/records.hpp"
#include "hk/synth.hpp"

namespace {

std::vector<int> parse_layers(const std::string& s) {
  std::vector<int> out;
  if (s == "all") return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw hk::Error(hk::ErrorKind::Config, "--layers expects all or a comma list of integers");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Overrides {
  std::string config_path;
  std::string judge_endpoint, judge_model, offline_verdicts, layers, suites;
  int max_inflight = 0;
  double l2 = 0;
  std::int64_t seed = -1;
};

hk::PipelineConfig resolve(const Overrides& o) {
  auto config = hk::load_pipeline_config(o.config_path);
  hk::apply_env_overrides(config, [](const char* name) { return std::getenv(name); });
  if (!o.judge_endpoint.empty()) config.judge.endpoint = o.judge_endpoint;
  if (!o.judge_model.empty()) config.judge.model = o.judge_model;
  if (!o.offline_verdicts.empty()) config.judge.offline_verdicts = std::filesystem::absolute(o.offline_verdicts);
  if (o.max_inflight > 0) config.judge.max_inflight = o.max_inflight;
  if (!o.layers.empty()) config.probe.layers = parse_layers(o.layers);
  if (o.l2 > 0) config.probe.l2 = o.l2;
  if (o.seed >= 0) {
    auto seed = static_cast<std::uint64_t>(o.seed);
    config.probe.seed = seed;
    config.bin_seed = seed;
    config.selection_seed = seed;
  }
  if (!o.suites.empty()) {
    // Revalidate through the config parser's suite check.
    auto obj = config.to_json();
    obj["suites"] = split_list(o.suites);
    auto checked = hk::pipeline_config_from_json(obj, {});
    config.suites = checked.suites;
  }
  return config;
}

int validate_records(const std::string& dir) {
  auto store = hk::RecordStore::open(dir);
  std::size_t violations = 0;
  for (const auto& [key, record] : store.records()) {
    for (const auto& v : hk::validate_record(record, store.layer_dims())) {
      std::cout << key.first << " | " << key.second << ": " << v << "\n";
      ++violations;
    }
  }
  std::cout << store.size() << " records, " << violations << " violations\n";
  return violations ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hidden-knowledge evaluation pipeline"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "pipeline config JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--judge-endpoint", o.judge_endpoint, "chat-completions URL");
    sub->add_option("--judge-model", o.judge_model, "judge model name");
    sub->add_option("--offline-verdicts", o.offline_verdicts, "verdicts.jsonl used instead of the HTTP judge");
    sub->add_option("--max-inflight", o.max_inflight, "concurrent judge requests");
    sub->add_option("--layers", o.layers, "probe layers: all or a comma list");
    sub->add_option("--l2", o.l2, "probe L2 strength");
    sub->add_option("--seed", o.seed, "seed for binning, selection and probe training");
    sub->add_option("--suites", o.suites, "analysis suites: k,hidden,selection,force-gold,extreme");
  };

  std::map<CLI::App*, std::optional<hk::Stage>> stage_of;
  for (auto stage : hk::kAllStages) {
    auto* sub = app.add_subcommand(std::string(hk::to_string(stage)), "run the " + std::string(hk::to_string(stage)) + " stage");
    add_common(sub);
    stage_of[sub] = stage;
  }
  auto* run = app.add_subcommand("run", "run every stage in order");
  add_common(run);
  stage_of[run] = std::nullopt;

  hk::SynthOptions synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic workspace with a planted probe signal");
  synth_cmd->add_option("dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--train", synth.train);
  synth_cmd->add_option("--dev", synth.dev);
  synth_cmd->add_option("--test", synth.test);
  synth_cmd->add_option("--dim", synth.dim);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--separation", synth.hidden_separation, "class separation at the signal layer");
  synth_cmd->add_option("--external-noise", synth.external_noise);

  std::string records_dir;
  auto* validate = app.add_subcommand("validate-records", "check a record store against the schema");
  validate->add_option("dir", records_dir, "directory holding records.jsonl")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      auto s = hk::write_synthetic_workspace(synth_dir, synth);
      std::cout << "synth: " << s.questions << " questions, " << s.records << " records, " << s.verdicts
                << " offline verdicts in " << synth_dir << "\n";
      return 0;
    }
    if (validate->parsed()) return validate_records(records_dir);
    for (const auto& [sub, stage] : stage_of) {
      if (!sub->parsed()) continue;
      auto config = resolve(o);
      if (stage) hk::run_stage(*stage, config, std::cout);
      else hk::run_pipeline(config, std::cout);
    }
  } catch (const hk::Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == hk::ErrorKind::Dependency ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
