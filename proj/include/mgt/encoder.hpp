#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mgt/autograd.hpp"
#include "mgt/vocab.hpp"

namespace mgt {

/// Embedding table plus a single-layer unidirectional LSTM. Gate blocks in
/// `w_ih`, `w_hh` and `bias` are stacked in the order input, forget,
/// candidate, output.
struct EncoderParams {
  int vocab_size = 0;
  int emb_dim = 0;
  int hidden = 0;
  ag::Parameter embedding;  // vocab_size × emb_dim
  ag::Parameter w_ih;       // 4·hidden × emb_dim
  ag::Parameter w_hh;       // 4·hidden × hidden
  ag::Parameter bias;       // 1 × 4·hidden

  std::vector<ag::Parameter*> parameters();
  std::vector<const ag::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// Uniform(−0.08, 0.08) everywhere, then forget-gate biases set to 1.0.
EncoderParams init_encoder(int vocab_size, int emb_dim, int hidden, std::uint64_t seed);
/// All-zero parameters (forget bias included).
EncoderParams zero_encoder(int vocab_size, int emb_dim, int hidden);

struct BoundEncoder {
  ag::Tensor embedding, w_ih, w_hh, bias;
  int vocab_size = 0;
  int hidden = 0;
};

BoundEncoder bind(ag::Tape& tape, EncoderParams& params, bool trainable);
BoundEncoder bind_frozen(ag::Tape& tape, const EncoderParams& params);

/// Final hidden state (1 × hidden) after reading `tokens` left to right.
ag::Tensor encode(const BoundEncoder& encoder, const TokenIds& tokens);

/// Row i is encode(sequences[i]). Sequences are processed together, longest
/// first, with the active batch shrinking as sequences end.
ag::Tensor encode_batch(const BoundEncoder& encoder, std::span<const TokenIds> sequences);

/// Convenience: encodes without recording, in chunks of `chunk` sequences.
ag::Matrix encode_all(const EncoderParams& params, std::span<const TokenIds> sequences,
                      std::size_t chunk = 256);

}  // namespace mgt
