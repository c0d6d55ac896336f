#include "mgt/encoder.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "mgt/errors.hpp"

namespace mgt {

namespace {

void check_dims(int vocab_size, int emb_dim, int hidden) {
  if (vocab_size < 2 || emb_dim <= 0 || hidden <= 0) {
    throw ConfigError("encoder needs vocab_size >= 2 and positive emb_dim/hidden, got " +
                      std::to_string(vocab_size) + "/" + std::to_string(emb_dim) + "/" +
                      std::to_string(hidden));
  }
}

}  // namespace

std::vector<ag::Parameter*> EncoderParams::parameters() {
  return {&embedding, &w_ih, &w_hh, &bias};
}

std::vector<const ag::Parameter*> EncoderParams::parameters() const {
  return {&embedding, &w_ih, &w_hh, &bias};
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) {
    n += p->size();
  }
  return n;
}

void EncoderParams::zero_grad() {
  for (auto* p : parameters()) {
    p->zero_grad();
  }
}

EncoderParams zero_encoder(int vocab_size, int emb_dim, int hidden) {
  check_dims(vocab_size, emb_dim, hidden);
  EncoderParams p;
  p.vocab_size = vocab_size;
  p.emb_dim = emb_dim;
  p.hidden = hidden;
  p.embedding = ag::Parameter("embedding", ag::Matrix::Zero(vocab_size, emb_dim));
  p.w_ih = ag::Parameter("w_ih", ag::Matrix::Zero(4 * hidden, emb_dim));
  p.w_hh = ag::Parameter("w_hh", ag::Matrix::Zero(4 * hidden, hidden));
  p.bias = ag::Parameter("bias", ag::Matrix::Zero(1, 4 * hidden));
  return p;
}

EncoderParams init_encoder(int vocab_size, int emb_dim, int hidden, std::uint64_t seed) {
  EncoderParams p = zero_encoder(vocab_size, emb_dim, hidden);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.08, 0.08);
  for (auto* param : p.parameters()) {
    for (Eigen::Index i = 0; i < param->value.size(); ++i) {
      param->value.data()[i] = dist(rng);
    }
  }
  p.bias.value.middleCols(hidden, hidden).setConstant(1.0);
  return p;
}

BoundEncoder bind(ag::Tape& tape, EncoderParams& params, bool trainable) {
  return BoundEncoder{tape.parameter(params.embedding, trainable),
                      tape.parameter(params.w_ih, trainable),
                      tape.parameter(params.w_hh, trainable),
                      tape.parameter(params.bias, trainable), params.vocab_size, params.hidden};
}

BoundEncoder bind_frozen(ag::Tape& tape, const EncoderParams& params) {
  return BoundEncoder{tape.frozen(params.embedding), tape.frozen(params.w_ih),
                      tape.frozen(params.w_hh), tape.frozen(params.bias), params.vocab_size,
                      params.hidden};
}

ag::Tensor encode(const BoundEncoder& encoder, const TokenIds& tokens) {
  return encode_batch(encoder, std::span<const TokenIds>(&tokens, 1));
}

ag::Tensor encode_batch(const BoundEncoder& encoder, std::span<const TokenIds> sequences) {
  if (sequences.empty()) {
    throw ContractError("encode_batch: no sequences");
  }
  for (const auto& seq : sequences) {
    if (seq.empty()) {
      throw ContractError("encode: empty token sequence");
    }
    for (int id : seq) {
      if (id < 0 || id >= encoder.vocab_size) {
        throw ContractError("encode: token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(encoder.vocab_size));
      }
    }
  }
  ag::Tape& tape = *encoder.embedding.tape();
  const auto n = static_cast<Eigen::Index>(sequences.size());
  const Eigen::Index h_dim = encoder.hidden;

  std::vector<int> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sequences[static_cast<std::size_t>(a)].size() >
           sequences[static_cast<std::size_t>(b)].size();
  });
  const std::size_t max_len = sequences[static_cast<std::size_t>(order[0])].size();

  ag::Tensor h;
  ag::Tensor c;
  Eigen::Index active = n;
  std::vector<ag::Tensor> finished;
  std::vector<int> step_ids;
  for (std::size_t t = 0; t < max_len; ++t) {
    Eigen::Index still = 0;
    while (still < active && sequences[static_cast<std::size_t>(order[still])].size() > t) {
      ++still;
    }
    if (still < active) {
      // Rows [still, active) ended at the previous step.
      finished.push_back(ag::slice_rows(h, still, active - still));
      h = ag::slice_rows(h, 0, still);
      c = ag::slice_rows(c, 0, still);
      active = still;
    }
    step_ids.resize(static_cast<std::size_t>(active));
    for (Eigen::Index r = 0; r < active; ++r) {
      step_ids[static_cast<std::size_t>(r)] = sequences[static_cast<std::size_t>(order[r])][t];
    }
    ag::Tensor x = ag::gather_rows(encoder.embedding, step_ids);
    ag::Tensor z = ag::matmul_nt(x, encoder.w_ih);
    if (t > 0) {
      z = ag::add(z, ag::matmul_nt(h, encoder.w_hh));
    }
    z = ag::add_row(z, encoder.bias);
    ag::Tensor in_gate = ag::sigmoid(ag::slice_cols(z, 0, h_dim));
    ag::Tensor candidate = ag::tanh(ag::slice_cols(z, 2 * h_dim, h_dim));
    ag::Tensor out_gate = ag::sigmoid(ag::slice_cols(z, 3 * h_dim, h_dim));
    if (t == 0) {
      c = ag::mul(in_gate, candidate);
    } else {
      ag::Tensor forget = ag::sigmoid(ag::slice_cols(z, h_dim, h_dim));
      c = ag::add(ag::mul(forget, c), ag::mul(in_gate, candidate));
    }
    h = ag::mul(out_gate, ag::tanh(c));
  }
  finished.push_back(h);
  std::reverse(finished.begin(), finished.end());
  ag::Tensor sorted = finished.size() == 1 ? finished[0] : ag::concat_rows(finished);

  std::vector<int> inverse(sequences.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    inverse[static_cast<std::size_t>(order[r])] = static_cast<int>(r);
  }
  bool identity = true;
  for (std::size_t i = 0; i < inverse.size(); ++i) {
    identity = identity && inverse[i] == static_cast<int>(i);
  }
  (void)tape;
  return identity ? sorted : ag::gather_rows(sorted, inverse);
}

ag::Matrix encode_all(const EncoderParams& params, std::span<const TokenIds> sequences,
                      std::size_t chunk) {
  ag::Matrix out(static_cast<Eigen::Index>(sequences.size()), params.hidden);
  for (std::size_t begin = 0; begin < sequences.size(); begin += chunk) {
    const std::size_t count = std::min(chunk, sequences.size() - begin);
    ag::Tape tape(false);
    BoundEncoder enc = bind_frozen(tape, params);
    ag::Tensor v = encode_batch(enc, sequences.subspan(begin, count));
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) = v.value();
  }
  return out;
}

}  // namespace mgt
