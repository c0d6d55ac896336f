#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgt {

using TokenIds = std::vector<int>;

class Vocabulary {
 public:
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;
  static constexpr int user_tag_id = 2;
  static constexpr int system_tag_id = 3;
  static constexpr int reserved_count = 4;

  Vocabulary();

  /// Most frequent tokens first, frequency ties broken lexicographically,
  /// at most `max_size` content entries, each seen at least `min_count` times.
  static Vocabulary from_counts(const std::unordered_map<std::string, std::size_t>& counts,
                                std::size_t max_size, std::size_t min_count);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  TokenIds encode(const std::vector<std::string>& tokens) const;

  /// Total entries including reserved ids.
  int size() const { return static_cast<int>(tokens_.size()); }
  int content_size() const { return size() - reserved_count; }
  bool is_reserved(int id) const { return id < reserved_count; }
  std::uint64_t hash() const { return hash_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);
  void rehash();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::uint64_t hash_ = 0;
};

}  // namespace mgt
