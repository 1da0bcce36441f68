#include "hk/corpus.hpp"

#include <set>
#include <sstream>

#include "hk/error.hpp"
#include "hk/io.hpp"
#include "hk/text.hpp"

namespace hk {

namespace {

constexpr std::string_view kSlot = "[X]";

std::size_t count_slots(std::string_view tmpl) {
  std::size_t n = 0;
  for (auto pos = tmpl.find(kSlot); pos != std::string_view::npos; pos = tmpl.find(kSlot, pos + 1)) ++n;
  return n;
}

void validate_relation(const Relation& r) {
  if (r.id.empty()) throw Error(ErrorKind::Validation, "relation id is empty");
  if (count_slots(r.template_) != 1) {
    throw Error(ErrorKind::Validation, "relation " + r.id + ": template must contain exactly one [X]");
  }
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "test";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::Parse, "unknown split \"" + std::string(s) + "\"");
}

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::MultiGold: return "multi-gold";
    case DropReason::GoldInQuestion: return "gold-in-question";
    case DropReason::Duplicate: return "duplicate";
    case DropReason::InTest: return "in-test";
    case DropReason::SymmetricLeak: return "symmetric-leak";
  }
  return "unknown";
}

RelationMap default_relations() {
  RelationMap m;
  m["P26"] = {"P26", "Who is [X] married to?", true, true, true};
  m["P176"] = {"P176", "Which company is [X] produced by?", true, true, false};
  m["P264"] = {"P264", "What music label is [X] represented by?", true, true, false};
  m["P50"] = {"P50", "Who is the author of [X]?", true, true, false};
  return m;
}

RelationMap load_relations(const fs::path& path) {
  json root;
  try {
    root = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (!root.is_object()) throw Error(ErrorKind::Parse, path.string() + ": expected an object");
  RelationMap out;
  for (const auto& [id, body] : root.items()) {
    Relation r;
    r.id = id;
    r.template_ = body.value("template", "");
    r.hard_to_guess = body.value("hard_to_guess", false);
    r.well_defined = body.value("well_defined", false);
    r.symmetric = body.value("symmetric", id == "P26");
    validate_relation(r);
    out.emplace(id, std::move(r));
  }
  return out;
}

std::string render_question(const Relation& relation, const std::string& subject) {
  std::string text = relation.template_;
  auto pos = text.find(kSlot);
  if (pos == std::string::npos) throw Error(ErrorKind::Validation, "relation " + relation.id + " has no [X]");
  text.replace(pos, kSlot.size(), subject);
  return text;
}

std::vector<Question> load_corpus(const fs::path& path) {
  std::vector<Question> out;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    Question q;
    q.id = require_field<std::string>(obj, "id", line);
    q.fact.subject = require_field<std::string>(obj, "subject", line);
    q.fact.relation = require_field<std::string>(obj, "relation", line);
    q.text = require_field<std::string>(obj, "question", line);
    q.split = split_from_string(require_field<std::string>(obj, "split", line));
    auto gold = obj.find("gold_answer");
    if (gold == obj.end() || gold->is_null()) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": missing field \"gold_answer\"");
    }
    if (gold->is_string()) {
      q.fact.gold_answer = gold->get<std::string>();
    } else if (gold->is_array() && !gold->empty() && (*gold)[0].is_string()) {
      q.fact.gold_answer = (*gold)[0].get<std::string>();
      for (std::size_t i = 1; i < gold->size(); ++i) q.fact.extra_golds.push_back((*gold)[i].get<std::string>());
    } else {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": field \"gold_answer\" has the wrong type");
    }
    if (auto al = obj.find("aliases"); al != obj.end() && !al->is_null()) {
      q.fact.aliases = al->get<std::vector<std::string>>();
    }
    if (q.id.empty() || q.fact.subject.empty() || q.fact.gold_answer.empty()) {
      throw Error(ErrorKind::Validation, "line " + std::to_string(line) + ": id, subject and gold_answer must be nonempty");
    }
    if (!ids.insert(q.id).second) {
      throw Error(ErrorKind::Validation, "line " + std::to_string(line) + ": duplicate question id \"" + q.id + "\"");
    }
    out.push_back(std::move(q));
  });
  return out;
}

std::string corpus_line(const Question& q) {
  json obj;
  obj["id"] = q.id;
  obj["subject"] = q.fact.subject;
  obj["relation"] = q.fact.relation;
  obj["question"] = q.text;
  if (q.fact.extra_golds.empty()) {
    obj["gold_answer"] = q.fact.gold_answer;
  } else {
    json golds = json::array({q.fact.gold_answer});
    for (const auto& g : q.fact.extra_golds) golds.push_back(g);
    obj["gold_answer"] = golds;
  }
  if (!q.fact.aliases.empty()) obj["aliases"] = q.fact.aliases;
  obj["split"] = std::string(to_string(q.split));
  return obj.dump();
}

void save_corpus(const fs::path& path, const std::vector<Question>& questions) {
  std::string out;
  for (const auto& q : questions) {
    out += corpus_line(q);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<std::string> check_against_relations(const std::vector<Question>& questions,
                                                 const RelationMap& relations) {
  std::vector<std::string> problems;
  for (const auto& q : questions) {
    auto it = relations.find(q.fact.relation);
    if (it == relations.end()) {
      problems.push_back(q.id + ": relation " + q.fact.relation + " is not configured");
      continue;
    }
    if (render_question(it->second, q.fact.subject) != q.text) {
      problems.push_back(q.id + ": text does not match the " + q.fact.relation + " template");
    }
  }
  return problems;
}

FilterResult filter_eval_questions(const std::vector<Question>& questions) {
  FilterResult result;
  std::set<std::string> seen_text;
  for (const auto& q : questions) {
    if (q.fact.multi_gold()) {
      result.dropped.push_back({q, DropReason::MultiGold});
      continue;
    }
    auto text_tokens = split_tokens(normalize_answer(q.text));
    if (contains_token_run(text_tokens, split_tokens(normalize_answer(q.fact.gold_answer)))) {
      result.dropped.push_back({q, DropReason::GoldInQuestion});
      continue;
    }
    if (!seen_text.insert(q.text).second) {
      result.dropped.push_back({q, DropReason::Duplicate});
      continue;
    }
    result.kept.push_back(q);
  }
  return result;
}

FilterResult build_train_split(const std::vector<Question>& train, const std::vector<Question>& test,
                               const RelationMap& relations) {
  std::set<std::string> test_ids, test_texts;
  // (relation, normalized entity) pairs seen in each role on the test side.
  std::set<std::pair<std::string, std::string>> test_subjects, test_objects;
  for (const auto& q : test) {
    test_ids.insert(q.id);
    test_texts.insert(q.text);
    test_subjects.emplace(q.fact.relation, normalize_answer(q.fact.subject));
    test_objects.emplace(q.fact.relation, normalize_answer(q.fact.gold_answer));
  }

  FilterResult result;
  for (const auto& q : train) {
    if (test_ids.count(q.id) || test_texts.count(q.text)) {
      result.dropped.push_back({q, DropReason::InTest});
      continue;
    }
    auto rel = relations.find(q.fact.relation);
    if (rel != relations.end() && rel->second.symmetric) {
      bool leak = test_objects.count({q.fact.relation, normalize_answer(q.fact.subject)}) ||
                  test_subjects.count({q.fact.relation, normalize_answer(q.fact.gold_answer)});
      if (leak) {
        result.dropped.push_back({q, DropReason::SymmetricLeak});
        continue;
      }
    }
    result.kept.push_back(q);
  }
  return result;
}

}  // namespace hk
