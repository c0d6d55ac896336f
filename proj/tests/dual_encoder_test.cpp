#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mgt/dual_encoder.hpp"
#include "mgt/errors.hpp"
#include "support/gradcheck.hpp"

namespace ag = mgt::ag;
namespace fs = std::filesystem;
using mgt::TokenIds;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mgt_dual_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ag::Matrix encode_one(const mgt::EncoderParams& p, const TokenIds& t) {
  std::vector<TokenIds> one{t};
  return mgt::encode_all(p, one);
}

}  // namespace

TEST(DualEncoder, EncodersAreIndependent) {
  auto m = mgt::init_dual_encoder(20, 4, 5, 3, 99);
  EXPECT_NE(m.context.embedding.value, m.response.embedding.value);
  EXPECT_EQ(m.parameters().size(), 8u);
  EXPECT_EQ(m.vocab_hash, 99u);
  EXPECT_FALSE(m.granularity_level.has_value());
}

TEST(DualEncoder, LogitsAreInnerProducts) {
  auto m = mgt::init_dual_encoder(20, 4, 5, 3, 0);
  TokenIds ctx{4, 5, 6, 7};
  std::vector<TokenIds> cands{{8, 9}, {10}, {11, 12, 13}};
  auto logits = mgt::score_values(m, ctx, cands);
  const ag::Matrix c = encode_one(m.context, ctx);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const ag::Matrix r = encode_one(m.response, cands[i]);
    EXPECT_NEAR(logits[i], c.row(0).dot(r.row(0)), 1e-14);
  }
}

TEST(DualEncoder, LossIsCrossEntropyOfLogits) {
  auto m = mgt::init_dual_encoder(20, 4, 5, 3, 0);
  TokenIds ctx{4, 5, 6};
  std::vector<TokenIds> cands{{8, 9}, {10}, {11, 12, 13}, {4}};
  auto logits = mgt::score_values(m, ctx, cands);
  double denom = 0;
  for (double z : logits) {
    denom += std::exp(z);
  }
  ag::Tape tape;
  auto scored = mgt::score(tape, m, ctx, cands, 2);
  EXPECT_NEAR(mgt::loss(scored).item(), -std::log(std::exp(logits[2]) / denom), 1e-12);
}

TEST(DualEncoder, GroundTruthDominanceGivesNearZeroLoss) {
  ag::Tape tape;
  ag::Matrix z(1, 3);
  z << 25.0, 5.0, 0.0;
  mgt::ScoredCandidates s{tape.constant(z), 0};
  EXPECT_LT(mgt::loss(s).item(), 1e-8);
  ag::Tape tape2;
  ag::Matrix two(1, 2);
  two << 0.5, -0.5;
  EXPECT_NEAR(mgt::loss({tape2.constant(two), 0}).item(), std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(DualEncoder, ScoreContracts) {
  auto m = mgt::init_dual_encoder(20, 4, 5, 3, 0);
  ag::Tape tape;
  std::vector<TokenIds> one{{4}};
  std::vector<TokenIds> two{{4}, {5}};
  std::vector<TokenIds> with_empty{{4}, {}};
  EXPECT_THROW(mgt::score(tape, m, {4}, one, 0), mgt::ContractError);
  EXPECT_THROW(mgt::score(tape, m, {}, two, 0), mgt::ContractError);
  EXPECT_THROW(mgt::score(tape, m, {4}, two, 2), mgt::ContractError);
  EXPECT_THROW(mgt::score(tape, m, {4}, with_empty, 0), mgt::ContractError);
}

TEST(DualEncoder, FullLossGradientsOnRandomMiniExamples) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto r = mgt::testing::check_dual_encoder_example(seed);
    EXPECT_TRUE(r.all_passed()) << "example " << seed << ": " << r.passed << "/" << r.checked
                                << " worst " << r.worst_relative;
  }
}

TEST(DualEncoder, CheckpointRoundTripIsExact) {
  auto dir = temp_dir("roundtrip");
  auto m = mgt::init_dual_encoder(30, 4, 6, 5, 1234);
  m.granularity_level = 3;
  mgt::save_checkpoint(m, dir / "m.ckpt");
  auto back = mgt::load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.granularity_level, std::optional<int>(3));
  EXPECT_EQ(back.vocab_hash, 1234u);
  auto a = m.parameters();
  auto b = back.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  }
  EXPECT_EQ(mgt::fingerprint(m), mgt::fingerprint(back));
  EXPECT_EQ(mgt::checkpoint_fingerprint(dir / "m.ckpt"), mgt::fingerprint(m));
  EXPECT_EQ(mgt::serialize_checkpoint(m), mgt::serialize_checkpoint(back));
}

TEST(DualEncoder, FingerprintTracksWeights) {
  auto m = mgt::init_dual_encoder(30, 4, 6, 5, 0);
  const auto before = mgt::fingerprint(m);
  m.response.bias.value(0, 0) += 1e-12;
  EXPECT_NE(before, mgt::fingerprint(m));
}

TEST(DualEncoder, CorruptCheckpointsAreRejected) {
  auto m = mgt::init_dual_encoder(30, 4, 6, 5, 0);
  std::string bytes = mgt::serialize_checkpoint(m);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(mgt::deserialize_checkpoint(flipped), mgt::IntegrityError);

  EXPECT_THROW(mgt::deserialize_checkpoint(bytes.substr(0, bytes.size() - 20)), mgt::ParseError);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(mgt::deserialize_checkpoint(wrong_magic), mgt::ParseError);

  EXPECT_THROW(mgt::load_checkpoint(temp_dir("missing") / "none.ckpt"), mgt::IntegrityError);
}
