#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mgt/ensemble.hpp"
#include "mgt/errors.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<double> reference_softmax(const std::vector<double>& z) {
  double total = 0;
  std::vector<double> out;
  for (double v : z) {
    out.push_back(std::exp(v));
    total += out.back();
  }
  for (double& v : out) {
    v /= total;
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mgt_ensemble_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Ensemble, AverageIsAProbabilityVector) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> members(1, 6), cands(2, 12);
  std::normal_distribution<double> logit(0.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::vector<double>> m(static_cast<std::size_t>(members(rng)));
    const int k = cands(rng);
    for (auto& row : m) {
      row.resize(static_cast<std::size_t>(k));
      for (double& v : row) {
        v = logit(rng);
      }
    }
    auto p = mgt::ensemble_average(m);
    double total = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);

    auto shuffled = m;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto q = mgt::ensemble_average(shuffled);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(p[i], q[i], 1e-12);
    }

    auto single = mgt::ensemble_average({m[0]});
    auto ref = reference_softmax(m[0]);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(single[i], ref[i], 1e-12);
    }
  }
}

TEST(Ensemble, AveragesMemberDistributions) {
  std::vector<double> a{0.0, std::log(3.0)};  // softmax [0.25, 0.75]
  std::vector<double> b{std::log(3.0), 0.0};  // softmax [0.75, 0.25]
  auto p = mgt::ensemble_average({a, b});
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
}

TEST(Ensemble, AverageContracts) {
  EXPECT_THROW(mgt::ensemble_average({}), mgt::ContractError);
  EXPECT_THROW(mgt::ensemble_average({{1.0}}), mgt::ContractError);
  EXPECT_THROW(mgt::ensemble_average({{1.0, 2.0}, {1.0, 2.0, 3.0}}), mgt::DimensionError);
}

TEST(Ensemble, ModeNames) {
  EXPECT_EQ(mgt::parse_ensemble_mode("mgt"), mgt::EnsembleMode::mgt);
  EXPECT_EQ(mgt::parse_ensemble_mode("vanilla"), mgt::EnsembleMode::vanilla);
  EXPECT_EQ(mgt::to_string(mgt::EnsembleMode::vanilla), "vanilla");
  EXPECT_THROW(mgt::parse_ensemble_mode("bagging"), mgt::ConfigError);
}

TEST(Ensemble, PredictMatchesManualAverage) {
  std::vector<mgt::DualEncoder> members;
  for (int s = 1; s <= 3; ++s) {
    members.push_back(mgt::init_dual_encoder(15, 3, 4, static_cast<std::uint64_t>(s), 5));
  }
  mgt::EnsembleBundle bundle(mgt::EnsembleMode::mgt, members);
  mgt::TokenIds ctx{4, 5, 6};
  std::vector<mgt::TokenIds> cands{{7}, {8, 9}, {10, 11, 12}};
  auto p = mgt::ensemble_predict(bundle, ctx, cands);
  std::vector<double> expected(3, 0.0);
  for (const auto& m : members) {
    auto s = reference_softmax(mgt::score_values(m, ctx, cands));
    for (int i = 0; i < 3; ++i) {
      expected[static_cast<std::size_t>(i)] += s[static_cast<std::size_t>(i)] / 3.0;
    }
  }
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p[static_cast<std::size_t>(i)], expected[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(Ensemble, IncompatibleMembersAreRejected) {
  std::vector<mgt::DualEncoder> vocab_mismatch{mgt::init_dual_encoder(15, 3, 4, 1, 5),
                                               mgt::init_dual_encoder(15, 3, 4, 2, 6)};
  EXPECT_THROW(mgt::EnsembleBundle(mgt::EnsembleMode::mgt, vocab_mismatch), mgt::IntegrityError);
  std::vector<mgt::DualEncoder> hidden_mismatch{mgt::init_dual_encoder(15, 3, 4, 1, 5),
                                                mgt::init_dual_encoder(15, 3, 5, 2, 5)};
  EXPECT_THROW(mgt::EnsembleBundle(mgt::EnsembleMode::mgt, hidden_mismatch), mgt::IntegrityError);
  EXPECT_THROW(mgt::EnsembleBundle(mgt::EnsembleMode::mgt, {}), mgt::ContractError);
}

TEST(Ensemble, ManifestRoundTripAndTamperDetection) {
  auto dir = temp_dir("manifest");
  std::vector<mgt::DualEncoder> members;
  std::vector<fs::path> paths;
  for (int s = 1; s <= 2; ++s) {
    members.push_back(mgt::init_dual_encoder(15, 3, 4, static_cast<std::uint64_t>(s), 5));
    paths.push_back(dir / ("m" + std::to_string(s) + ".ckpt"));
    mgt::save_checkpoint(members.back(), paths.back());
  }
  mgt::EnsembleBundle bundle(mgt::EnsembleMode::vanilla, members, paths);
  bundle.save(dir / "e.bundle");

  // The manifest refers to members relative to its own directory, so the
  // whole directory can move.
  auto moved = temp_dir("manifest_moved");
  fs::remove_all(moved);
  fs::copy(dir, moved, fs::copy_options::recursive);
  auto loaded = mgt::EnsembleBundle::load(moved / "e.bundle");
  EXPECT_EQ(loaded.mode(), mgt::EnsembleMode::vanilla);
  EXPECT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded.fingerprints(), bundle.fingerprints());

  auto other = mgt::init_dual_encoder(15, 3, 4, 99, 5);
  mgt::save_checkpoint(other, moved / "m2.ckpt");
  EXPECT_THROW(mgt::EnsembleBundle::load(moved / "e.bundle"), mgt::IntegrityError);

  {
    std::ofstream out(dir / "broken.bundle");
    out << "#mgt-bundle v1\nmode=mgt\nmember=only-a-path\n";
  }
  EXPECT_THROW(mgt::EnsembleBundle::load(dir / "broken.bundle"), mgt::ParseError);
}
