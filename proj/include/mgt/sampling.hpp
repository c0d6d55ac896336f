#pragma once

// Similarity-bucketed negative sampling.
//
// For every anchor response the rest of the pool is ranked by descending
// cosine similarity to the anchor (ties: ascending pool index) and cut into L
// contiguous, size-balanced rank segments. Segment 1 holds the closest
// responses, segment L the farthest. Level-l training negatives for an
// example are drawn uniformly from segment l of its ground-truth response.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgt/autograd.hpp"
#include "mgt/corpus.hpp"
#include "mgt/dual_encoder.hpp"
#include "mgt/vocab.hpp"

namespace mgt {

double cosine_similarity(std::span<const double> a, std::span<const double> b);

class ResponsePool {
 public:
  ResponsePool() = default;
  /// Rows of `embeddings` belong to `responses` in order. Zero rows are
  /// replaced by a deterministic epsilon vector (with a warning).
  ResponsePool(std::vector<std::vector<std::string>> responses, ag::Matrix embeddings,
               std::uint64_t encoder_fingerprint);

  std::size_t size() const { return responses_.size(); }
  int dim() const { return static_cast<int>(embeddings_.cols()); }
  const std::vector<std::vector<std::string>>& responses() const { return responses_; }
  const ag::Matrix& embeddings() const { return embeddings_; }
  std::uint64_t encoder_fingerprint() const { return fingerprint_; }
  std::size_t perturbed_rows() const { return perturbed_; }

  /// Cosine similarity of `anchor` to every pool entry.
  std::vector<double> similarities(int anchor) const;

  void save(const std::filesystem::path& path) const;
  static ResponsePool load(const std::filesystem::path& path);

 private:
  std::vector<std::vector<std::string>> responses_;
  ag::Matrix embeddings_;
  std::vector<double> norms_;
  std::uint64_t fingerprint_ = 0;
  std::size_t perturbed_ = 0;
};

/// Encodes every training response with the frozen response encoder.
ResponsePool build_pool(const Split& train, const Vocabulary& vocab, const DualEncoder& encoder);

class BucketIndex {
 public:
  BucketIndex(int anchor, int levels, std::vector<int> ranked, std::vector<double> similarity);

  int anchor() const { return anchor_; }
  int levels() const { return levels_; }
  /// Members of segment `level` (1-based) in rank order.
  std::span<const int> segment(int level) const;
  std::size_t segment_size(int level) const { return segment(level).size(); }
  /// Pool indices ordered by descending similarity, anchor excluded.
  const std::vector<int>& ranked() const { return ranked_; }
  /// Similarity of pool entry i to the anchor (anchor's own entry included).
  double similarity(int i) const { return similarity_[static_cast<std::size_t>(i)]; }

 private:
  int anchor_;
  int levels_;
  std::vector<int> ranked_;
  std::vector<double> similarity_;
  std::vector<std::size_t> bounds_;
};

/// Ranks the pool against `anchor` and splits the |R|−1 other entries into L
/// segments with boundaries at floor((|R|−1)·l/L).
BucketIndex build_bucket_index(const ResponsePool& pool, int anchor, int levels);

using Rng = std::mt19937_64;

/// k−1 distinct indices drawn uniformly from segment `level` of `index`, or
/// from the whole pool when `index` is null. The anchor and `exclusions` are
/// never drawn. With fewer than k−1 eligible entries every eligible entry is
/// taken once and the remainder is drawn with replacement.
std::vector<int> sample_negatives(const BucketIndex* index, std::optional<int> level,
                                  std::size_t pool_size, int anchor, int k, Rng& rng,
                                  std::span<const int> exclusions);

struct TrainingExample {
  TokenIds context;
  int response = 0;
  std::vector<int> negatives;
  int level = 0;
  bool operator==(const TrainingExample&) const = default;
};

/// Level 0 is the uniformly sampled baseline corpus.
struct TrainingCorpus {
  int level = 0;
  int k = 0;
  std::vector<TrainingExample> examples;
  bool operator==(const TrainingCorpus&) const = default;
};

struct CorporaSet {
  TrainingCorpus baseline;
  std::vector<TrainingCorpus> levels;  // levels[l-1] is T^l
};

struct CorpusBuildOptions {
  int levels = 5;
  int k = 10;
  std::uint64_t seed = 1;
  int truncation = 160;
  /// Mixed into every per-anchor seed; distinct epochs give fresh draws.
  int epoch = 0;
};

/// Builds T^1..T^L plus the baseline corpus over the training split. The
/// pool must hold every training response, embedded by the checkpoint whose
/// fingerprint is `checkpoint_fingerprint`.
CorporaSet build_corpora(const Split& train, const Vocabulary& vocab, const ResponsePool& pool,
                         std::uint64_t checkpoint_fingerprint, const CorpusBuildOptions& options);

/// Baseline corpus only: negatives drawn uniformly from the whole training
/// pool. Needs no embeddings and matches build_corpora(...).baseline.
TrainingCorpus build_uniform_corpus(const Split& train, const Vocabulary& vocab,
                                    const CorpusBuildOptions& options);

/// Pool indices whose response text equals that of `anchor` (anchor excluded).
std::vector<std::vector<int>> duplicate_groups(const std::vector<std::vector<std::string>>& responses);

void write_training_corpus(const TrainingCorpus& corpus, const std::filesystem::path& path);
TrainingCorpus load_training_corpus(const std::filesystem::path& path);

/// Mean cosine similarity between each example's ground truth and its negatives.
double mean_negative_similarity(const TrainingCorpus& corpus, const ResponsePool& pool);

/// Human-readable listing of one example's ground truth and the first
/// negative drawn at every level.
std::string describe_levels(const Split& train, const CorporaSet& corpora, std::size_t example);

}  // namespace mgt
