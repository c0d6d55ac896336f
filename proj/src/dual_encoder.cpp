#include "mgt/dual_encoder.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"

namespace mgt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'G', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(origin_ + ": checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

const char* const kNames[8] = {"context.embedding", "context.w_ih", "context.w_hh", "context.bias",
                               "response.embedding", "response.w_ih", "response.w_hh",
                               "response.bias"};

}  // namespace

std::vector<ag::Parameter*> DualEncoder::parameters() {
  auto p = context.parameters();
  auto r = response.parameters();
  p.insert(p.end(), r.begin(), r.end());
  return p;
}

std::vector<const ag::Parameter*> DualEncoder::parameters() const {
  auto p = context.parameters();
  auto r = response.parameters();
  p.insert(p.end(), r.begin(), r.end());
  return p;
}

void DualEncoder::zero_grad() {
  context.zero_grad();
  response.zero_grad();
}

DualEncoder init_dual_encoder(int vocab_size, int emb_dim, int hidden, std::uint64_t seed,
                              std::uint64_t vocab_hash) {
  DualEncoder m;
  m.context = init_encoder(vocab_size, emb_dim, hidden, mix_seed(seed, 0));
  m.response = init_encoder(vocab_size, emb_dim, hidden, mix_seed(seed, 1));
  m.vocab_hash = vocab_hash;
  return m;
}

ScoredCandidates score(ag::Tape& tape, DualEncoder& model, const TokenIds& context,
                       std::span<const TokenIds> candidates, int ground_truth_position,
                       bool trainable) {
  if (candidates.size() < 2) {
    throw ContractError("score: need at least 2 candidates, got " +
                        std::to_string(candidates.size()));
  }
  if (context.empty()) {
    throw ContractError("score: empty context");
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].empty()) {
      throw ContractError("score: candidate " + std::to_string(i) + " is empty");
    }
  }
  if (ground_truth_position < 0 ||
      ground_truth_position >= static_cast<int>(candidates.size())) {
    throw ContractError("score: ground truth position outside candidate set");
  }
  BoundEncoder ctx = bind(tape, model.context, trainable);
  BoundEncoder rsp = bind(tape, model.response, trainable);
  ag::Tensor c = encode(ctx, context);
  ag::Tensor r = encode_batch(rsp, candidates);
  return ScoredCandidates{ag::matmul_nt(c, r), ground_truth_position};
}

ag::Tensor loss(const ScoredCandidates& scored) {
  return ag::softmax_cross_entropy(scored.logits, scored.ground_truth_position);
}

std::vector<double> score_values(const DualEncoder& model, const TokenIds& context,
                                 std::span<const TokenIds> candidates) {
  ag::Tape tape(false);
  BoundEncoder ctx = bind_frozen(tape, model.context);
  BoundEncoder rsp = bind_frozen(tape, model.response);
  ag::Tensor logits = ag::matmul_nt(encode(ctx, context), encode_batch(rsp, candidates));
  const ag::Matrix& v = logits.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::string serialize_checkpoint(const DualEncoder& model) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, model.vocab_hash);
  put<std::int32_t>(out, model.granularity_level.value_or(-1));
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = kNames[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const ag::Matrix& v = params[i]->value;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.cols()));
    out.append(reinterpret_cast<const char*>(v.data()),
               static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  put<std::uint64_t>(out, hash_bytes(out));
  return out;
}

DualEncoder deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(origin + ": not a checkpoint file");
  }
  Reader r(bytes, origin);
  r.get_string(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw ParseError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  DualEncoder m;
  m.vocab_hash = r.get<std::uint64_t>();
  const auto level = r.get<std::int32_t>();
  if (level >= 0) {
    m.granularity_level = level;
  }
  const auto count = r.get<std::uint32_t>();
  if (count != 8) {
    throw ParseError(origin + ": expected 8 tensors, found " + std::to_string(count));
  }
  auto params = m.parameters();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.get_string(name_len);
    if (name != kNames[i]) {
      throw ParseError(origin + ": expected tensor " + kNames[i] + ", found " + name);
    }
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    ag::Matrix v(rows, cols);
    r.read_doubles(v.data(), static_cast<std::size_t>(rows) * cols);
    *params[i] = ag::Parameter(name.substr(name.find('.') + 1), std::move(v));
  }
  const std::size_t body = r.pos();
  const auto stored = r.get<std::uint64_t>();
  if (stored != hash_bytes(std::string_view(bytes.data(), body))) {
    throw IntegrityError(origin + ": checkpoint checksum mismatch");
  }
  for (EncoderParams* enc : {&m.context, &m.response}) {
    enc->vocab_size = static_cast<int>(enc->embedding.value.rows());
    enc->emb_dim = static_cast<int>(enc->embedding.value.cols());
    enc->hidden = static_cast<int>(enc->w_hh.value.cols());
    if (enc->w_ih.value.rows() != 4 * enc->hidden || enc->w_ih.value.cols() != enc->emb_dim ||
        enc->w_hh.value.rows() != 4 * enc->hidden || enc->bias.value.cols() != 4 * enc->hidden) {
      throw ParseError(origin + ": inconsistent encoder tensor shapes");
    }
  }
  if (m.context.hidden != m.response.hidden) {
    throw ParseError(origin + ": context and response hidden sizes differ");
  }
  return m;
}

void save_checkpoint(const DualEncoder& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write checkpoint " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DualEncoder load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IntegrityError("cannot open checkpoint " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

std::uint64_t fingerprint(const DualEncoder& model) {
  const std::string bytes = serialize_checkpoint(model);
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + bytes.size() - sizeof(v), sizeof(v));
  return v;
}

std::uint64_t checkpoint_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw IntegrityError("cannot open checkpoint " + path.string());
  }
  const auto size = static_cast<std::streamoff>(in.tellg());
  if (size < 8) {
    throw ParseError(path.string() + ": checkpoint truncated");
  }
  in.seekg(size - 8);
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace mgt
