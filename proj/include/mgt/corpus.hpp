#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgt/vocab.hpp"

namespace mgt {

enum class Speaker { user, system };

struct Turn {
  Speaker speaker = Speaker::user;
  std::vector<std::string> tokens;
  bool operator==(const Turn&) const = default;
};

struct DialogExample {
  std::string id;
  std::vector<Turn> context;
  std::vector<std::string> response;
  /// Evaluation splits only: indices into the split's responses (the response
  /// of example i is pool entry i). Contains the example's own index once.
  std::vector<int> candidates;
  std::optional<int> topic;
  bool operator==(const DialogExample&) const = default;
};

struct Split {
  std::string name;
  std::vector<DialogExample> examples;
  bool operator==(const Split&) const = default;

  std::size_t size() const { return examples.size(); }
  /// Position of the ground truth inside example `i`'s candidate list.
  int truth_position(std::size_t i) const;
};

/// Checks the per-example invariants; `evaluation` additionally requires
/// candidate lists that contain the ground truth exactly once.
void validate_split(const Split& split, bool evaluation);

void write_corpus(const Split& split, const std::filesystem::path& path);
Split load_corpus(const std::filesystem::path& path);

/// Vocabulary over context and response tokens of the training split.
Vocabulary build_vocab(const Split& train, std::size_t max_size, std::size_t min_count = 1);

/// Context turns joined with <usr>/<sys> tag tokens, truncated to the last
/// `truncation` ids.
TokenIds context_ids(const DialogExample& example, const Vocabulary& vocab, int truncation);
TokenIds response_ids(const DialogExample& example, const Vocabulary& vocab);

/// Last user turn of the context; nullptr when the context has none.
const Turn* last_user_turn(const DialogExample& example);

struct LabeledPair {
  std::vector<Turn> context;
  std::vector<std::string> response;
  int label = 0;
};

/// Keeps the label-1 pairs as (context, ground truth) examples. Their
/// responses form the negative-sampling pool.
Split binary_to_retrieval(const std::vector<LabeledPair>& pairs, const std::string& name = "train");

/// Reads `label<TAB>context<TAB>response` lines; context turns are separated
/// by " __eot__ " and alternate user/system starting with the user.
std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path);

}  // namespace mgt
