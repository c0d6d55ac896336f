#include "mgt/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mgt/errors.hpp"
#include "mgt/tokenizer.hpp"

namespace mgt {

namespace {

constexpr const char* kHeader = "#mgt-corpus v1";

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(std::move(cur));
  return parts;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) {
    return out;
  }
  for (auto& t : split_on(text, ' ')) {
    if (!t.empty()) {
      out.push_back(std::move(t));
    }
  }
  return out;
}

int parse_int(const std::string& text, const std::string& where) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(where + ": bad integer '" + text + "'");
  }
  return v;
}

std::string header_field(const std::string& header, const std::string& key) {
  std::istringstream in(header);
  std::string word;
  while (in >> word) {
    if (word.rfind(key + "=", 0) == 0) {
      return word.substr(key.size() + 1);
    }
  }
  return {};
}

}  // namespace

int Split::truth_position(std::size_t i) const {
  const auto& cands = examples.at(i).candidates;
  auto it = std::find(cands.begin(), cands.end(), static_cast<int>(i));
  if (it == cands.end()) {
    throw ContractError("example " + examples[i].id + " has no ground truth among candidates");
  }
  return static_cast<int>(it - cands.begin());
}

void validate_split(const Split& split, bool evaluation) {
  const int n = static_cast<int>(split.size());
  for (int i = 0; i < n; ++i) {
    const auto& ex = split.examples[static_cast<std::size_t>(i)];
    if (ex.context.empty()) {
      throw ContractError("example " + ex.id + " has an empty context");
    }
    if (ex.response.empty()) {
      throw ContractError("example " + ex.id + " has an empty ground-truth response");
    }
    if (!evaluation) {
      continue;
    }
    int seen = 0;
    for (int c : ex.candidates) {
      if (c < 0 || c >= n) {
        throw ContractError("example " + ex.id + " candidate " + std::to_string(c) +
                            " outside the split");
      }
      seen += c == i ? 1 : 0;
    }
    if (seen != 1) {
      throw ContractError("example " + ex.id + " must list its ground truth exactly once, found " +
                          std::to_string(seen));
    }
  }
}

void write_corpus(const Split& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write corpus " + path.string());
  }
  out << kHeader << " split=" << split.name << " count=" << split.size() << "\n";
  for (const auto& ex : split.examples) {
    out << "id=" << ex.id;
    for (const auto& turn : ex.context) {
      out << '\t' << (turn.speaker == Speaker::user ? "usr=" : "sys=") << join_tokens(turn.tokens);
    }
    out << "\tresp=" << join_tokens(ex.response);
    if (!ex.candidates.empty()) {
      out << "\tcand=";
      for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
        out << (i ? " " : "") << ex.candidates[i];
      }
    }
    if (ex.topic) {
      out << "\ttopic=" << *ex.topic;
    }
    out << "\n";
  }
}

Split load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open corpus " + path.string());
  }
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw EmptyCorpusError(name + ": empty corpus file");
  }
  if (line.rfind(kHeader, 0) != 0) {
    throw ParseError(name + ":1: missing '" + std::string(kHeader) + "' header");
  }
  Split split;
  split.name = header_field(line, "split");
  const std::string count_field = header_field(line, "count");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = name + ":" + std::to_string(line_no);
    if (line.empty()) {
      throw ParseError(where + ": empty record");
    }
    DialogExample ex;
    bool has_id = false;
    bool has_resp = false;
    for (const auto& field : split_on(line, '\t')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        throw ParseError(where + ": field without tag '" + field + "'");
      }
      const std::string tag = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (tag == "id") {
        ex.id = value;
        has_id = true;
      } else if (tag == "usr" || tag == "sys") {
        if (has_resp) {
          throw ParseError(where + ": context turn after the response");
        }
        ex.context.push_back(Turn{tag == "usr" ? Speaker::user : Speaker::system,
                                  split_tokens(value)});
      } else if (tag == "resp") {
        ex.response = split_tokens(value);
        has_resp = true;
      } else if (tag == "cand") {
        for (const auto& t : split_tokens(value)) {
          ex.candidates.push_back(parse_int(t, where));
        }
      } else if (tag == "topic") {
        ex.topic = parse_int(value, where);
      } else {
        throw ParseError(where + ": unknown field tag '" + tag + "'");
      }
    }
    if (!has_id || ex.id.empty()) {
      throw ParseError(where + ": record without id");
    }
    if (ex.context.empty()) {
      throw ParseError(where + ": record without context turns");
    }
    if (!has_resp || ex.response.empty()) {
      throw ParseError(where + ": record without response");
    }
    split.examples.push_back(std::move(ex));
  }
  if (!count_field.empty() &&
      static_cast<std::size_t>(parse_int(count_field, name + ":1")) != split.size()) {
    throw ParseError(name + ":" + std::to_string(line_no + 1) + ": expected " + count_field +
                     " records, file ends after " + std::to_string(split.size()));
  }
  if (split.examples.empty()) {
    throw EmptyCorpusError(name + ": corpus has no records");
  }
  return split;
}

Vocabulary build_vocab(const Split& train, std::size_t max_size, std::size_t min_count) {
  if (train.examples.empty()) {
    throw EmptyCorpusError("cannot build a vocabulary from an empty split");
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& ex : train.examples) {
    for (const auto& turn : ex.context) {
      for (const auto& t : turn.tokens) {
        ++counts[t];
      }
    }
    for (const auto& t : ex.response) {
      ++counts[t];
    }
  }
  return Vocabulary::from_counts(counts, max_size, min_count);
}

TokenIds context_ids(const DialogExample& example, const Vocabulary& vocab, int truncation) {
  if (truncation <= 0) {
    throw ContractError("context truncation must be positive");
  }
  TokenIds ids;
  for (const auto& turn : example.context) {
    ids.push_back(turn.speaker == Speaker::user ? Vocabulary::user_tag_id
                                                : Vocabulary::system_tag_id);
    for (const auto& t : turn.tokens) {
      ids.push_back(vocab.id(t));
    }
  }
  if (ids.size() > static_cast<std::size_t>(truncation)) {
    ids.erase(ids.begin(), ids.end() - truncation);
  }
  return ids;
}

TokenIds response_ids(const DialogExample& example, const Vocabulary& vocab) {
  return vocab.encode(example.response);
}

const Turn* last_user_turn(const DialogExample& example) {
  for (auto it = example.context.rbegin(); it != example.context.rend(); ++it) {
    if (it->speaker == Speaker::user) {
      return &*it;
    }
  }
  return nullptr;
}

Split binary_to_retrieval(const std::vector<LabeledPair>& pairs, const std::string& name) {
  Split split;
  split.name = name;
  std::size_t index = 0;
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1) {
      throw ParseError("pair " + std::to_string(index) + " has label " + std::to_string(p.label) +
                       ", expected 0 or 1");
    }
    if (p.label == 1) {
      DialogExample ex;
      ex.id = "p" + std::to_string(index);
      ex.context = p.context;
      ex.response = p.response;
      split.examples.push_back(std::move(ex));
    }
    ++index;
  }
  if (split.examples.empty()) {
    throw EmptyCorpusError("no positive pairs to build a retrieval split from");
  }
  return split;
}

std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::vector<LabeledPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    auto fields = split_on(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(where + ": expected label, context and response separated by tabs");
    }
    LabeledPair p;
    p.label = parse_int(fields[0], where);
    const std::string marker = " __eot__ ";
    std::size_t start = 0;
    Speaker who = Speaker::user;
    while (true) {
      const auto pos = fields[1].find(marker, start);
      p.context.push_back(Turn{who, tokenize(fields[1].substr(start, pos - start))});
      who = who == Speaker::user ? Speaker::system : Speaker::user;
      if (pos == std::string::npos) {
        break;
      }
      start = pos + marker.size();
    }
    p.response = tokenize(fields[2]);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) {
    throw EmptyCorpusError(path.string() + ": no labeled pairs");
  }
  return pairs;
}

}  // namespace mgt
