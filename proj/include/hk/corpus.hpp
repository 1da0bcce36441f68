#pragma once

// Fact triplets, their question renderings, and leak-free split construction.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hk {

struct Relation {
  std::string id;        // e.g. "P26"
  std::string template_; // question template with exactly one "[X]" slot
  bool hard_to_guess = false;
  bool well_defined = false;
  // Subject and object share an entity type, so train/test leakage can cross roles.
  bool symmetric = false;

  bool operator==(const Relation&) const = default;
};

using RelationMap = std::map<std::string, Relation>;

struct Fact {
  std::string subject;
  std::string relation;
  std::string gold_answer;
  std::vector<std::string> aliases;
  // Golds beyond the first when the source row listed several.
  std::vector<std::string> extra_golds;

  bool multi_gold() const { return !extra_golds.empty(); }
  bool operator==(const Fact&) const = default;
};

enum class Split { Train, Dev, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view s);

struct Question {
  std::string id;
  Fact fact;
  std::string text;
  Split split = Split::Test;

  bool operator==(const Question&) const = default;
};

/// Relation config: JSON object id -> {template, hard_to_guess, well_defined, symmetric}.
RelationMap load_relations(const std::filesystem::path& path);

/// Symmetric flags default to P26 only when the config omits them.
RelationMap default_relations();

std::string render_question(const Relation& relation, const std::string& subject);

std::vector<Question> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const std::vector<Question>& questions);
std::string corpus_line(const Question& q);

/// Checks that each question's relation is configured and its text matches the template.
std::vector<std::string> check_against_relations(const std::vector<Question>& questions,
                                                 const RelationMap& relations);

enum class DropReason { MultiGold, GoldInQuestion, Duplicate, InTest, SymmetricLeak };
std::string_view to_string(DropReason reason);

struct Dropped {
  Question question;
  DropReason reason;
};

struct FilterResult {
  std::vector<Question> kept;
  std::vector<Dropped> dropped;
};

FilterResult filter_eval_questions(const std::vector<Question>& questions);

/// Removes train questions that also occur in test (same id or text) and, for
/// symmetric relations, train facts whose subject is a test object or whose
/// object is a test subject.
FilterResult build_train_split(const std::vector<Question>& train, const std::vector<Question>& test,
                               const RelationMap& relations);

}  // namespace hk
