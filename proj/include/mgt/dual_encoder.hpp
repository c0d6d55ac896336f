#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgt/autograd.hpp"
#include "mgt/encoder.hpp"

namespace mgt {

/// Context and response encoders with unshared parameters; a candidate is
/// scored by the inner product of the two final hidden states.
struct DualEncoder {
  EncoderParams context;
  EncoderParams response;
  /// Granularity level in [1, L]; empty for a uniformly trained baseline.
  std::optional<int> granularity_level;
  std::uint64_t vocab_hash = 0;

  int hidden() const { return context.hidden; }
  std::vector<ag::Parameter*> parameters();
  std::vector<const ag::Parameter*> parameters() const;
  void zero_grad();
};

DualEncoder init_dual_encoder(int vocab_size, int emb_dim, int hidden, std::uint64_t seed,
                              std::uint64_t vocab_hash);

struct ScoredCandidates {
  ag::Tensor logits;  // 1 × k
  int ground_truth_position = 0;
};

/// logits[i] = f_c(context) · f_r(candidates[i]) recorded on `tape`.
ScoredCandidates score(ag::Tape& tape, DualEncoder& model, const TokenIds& context,
                       std::span<const TokenIds> candidates, int ground_truth_position,
                       bool trainable = true);
/// Softmax cross-entropy with the ground truth as target.
ag::Tensor loss(const ScoredCandidates& scored);

/// Logits without recording.
std::vector<double> score_values(const DualEncoder& model, const TokenIds& context,
                                 std::span<const TokenIds> candidates);

// Checkpoint file layout (all integers little-endian):
//   "MGTCKPT\0"  u32 version=1  u64 vocab_hash  i32 granularity_level (-1: none)
//   u32 tensor_count, then per tensor:
//     u32 name_len, name bytes, u32 rows, u32 cols, rows·cols f64 row-major
//   u64 FNV-1a of all preceding bytes (the model fingerprint)
std::string serialize_checkpoint(const DualEncoder& model);
DualEncoder deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");
void save_checkpoint(const DualEncoder& model, const std::filesystem::path& path);
DualEncoder load_checkpoint(const std::filesystem::path& path);
std::uint64_t fingerprint(const DualEncoder& model);
/// Fingerprint stored in a checkpoint trailer, without loading the tensors.
std::uint64_t checkpoint_fingerprint(const std::filesystem::path& path);

}  // namespace mgt
