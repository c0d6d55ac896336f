#pragma once

// Template-based synthetic dialog corpus with a latent topic per dialog.
//
// Generator spec file (key-value, see config.hpp for the syntax). Values are
// alternatives separated by '|'; one is drawn uniformly per use.
//
//   topic.<name>.open    first user turn (required per topic)
//   topic.<name>.reply   ground-truth system response (required per topic)
//   topic.<name>.ask     optional; overrides template.ask for this topic
//   topic.<name>.last    optional; overrides template.last for this topic
//   template.ask         system turns
//   template.inform      user turns between the opening and the last turn
//   template.last        final user turn
//   lexicon.<slot>               shared slot values
//   lexicon.<topic>.<slot>       topic-specific slot values (take precedence)
//   middle_turns.min / middle_turns.max   number of inform/ask exchanges
//
// Templates reference slots as {slot}; {topic} expands to the topic name.
// Each slot takes a single value for the whole dialog, so values named in the
// context reappear in the response.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgt/config.hpp"
#include "mgt/corpus.hpp"

namespace mgt {

using Alternatives = std::vector<std::string>;

struct TopicSpec {
  std::string name;
  std::map<std::string, Alternatives> templates;
  std::map<std::string, Alternatives> lexicons;
};

struct GeneratorSpec {
  std::vector<TopicSpec> topics;
  std::map<std::string, Alternatives> templates;
  std::map<std::string, Alternatives> lexicons;
  int middle_min = 0;
  int middle_max = 2;
};

/// Throws ConfigError for a topic without open/reply templates, a missing
/// shared template, or a placeholder with no lexicon.
GeneratorSpec parse_generator_spec(const KeyValues& values);
GeneratorSpec load_generator_spec(const std::filesystem::path& path);
const std::string& default_generator_spec_text();
GeneratorSpec default_generator_spec();

struct SplitSizes {
  int train = 2000;
  int valid = 300;
  int test = 300;
};

struct SyntheticCorpus {
  Split train;
  Split valid;
  Split test;
  std::vector<std::string> topic_names;
};

/// Valid and test splits get candidate lists of size `k`.
SyntheticCorpus generate_synthetic_corpus(const GeneratorSpec& spec, const SplitSizes& sizes, int k,
                                          std::uint64_t seed);

/// Ground truth plus k−1 other responses of the same split drawn uniformly
/// without replacement (exact text duplicates of the ground truth excluded);
/// the ground truth lands at a uniformly drawn position.
void assign_candidates(Split& split, int k, std::uint64_t seed);

/// Slot values a generated dialog used, recovered from its tokens.
std::vector<std::string> topic_slot_tokens(const GeneratorSpec& spec, int topic,
                                           const std::vector<std::string>& tokens);

}  // namespace mgt
