#include "mgt/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"

namespace mgt {

namespace {
constexpr const char* kHeader = "#mgt-vocab v1";
}

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<usr>", "<sys>"}) {
    add(t);
  }
  rehash();
}

Vocabulary Vocabulary::from_counts(const std::unordered_map<std::string, std::size_t>& counts,
                                   std::size_t max_size, std::size_t min_count) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  entries.reserve(counts.size());
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) {
      entries.emplace_back(tok, n);
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, n] : entries) {
    if (static_cast<std::size_t>(v.content_size()) >= max_size) {
      break;
    }
    if (v.index_.count(tok) == 0) {
      v.add(tok);
    }
  }
  v.rehash();
  return v;
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

void Vocabulary::rehash() {
  Fnv1a h;
  for (const auto& t : tokens_) {
    h.update(t);
    h.update("\n");
  }
  hash_ = h.digest();
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    ids.push_back(id(t));
  }
  return ids;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write vocabulary " + path.string());
  }
  out << kHeader << " size=" << size() << " hash=" << to_hex(hash_) << "\n";
  for (int i = reserved_count; i < size(); ++i) {
    out << tokens_[static_cast<std::size_t>(i)] << "\n";
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open vocabulary " + path.string());
  }
  std::string header;
  std::getline(in, header);
  if (header.rfind(kHeader, 0) != 0) {
    throw ParseError(path.string() + ":1: not a vocabulary file");
  }
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      throw ParseError(path.string() + ": empty token line");
    }
    v.add(line);
  }
  v.rehash();
  const auto pos = header.find("hash=");
  if (pos != std::string::npos && from_hex(header.substr(pos + 5)) != v.hash_) {
    throw IntegrityError("vocabulary " + path.string() + " does not match its recorded hash");
  }
  return v;
}

}  // namespace mgt
