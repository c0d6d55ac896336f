#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "mgt/errors.hpp"
#include "mgt/metrics.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<double>> random_scores(std::mt19937_64& rng, std::size_t n, int k) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> out(n, std::vector<double>(static_cast<std::size_t>(k)));
  for (auto& row : out) {
    for (double& v : row) {
      v = u(rng);
    }
  }
  return out;
}

}  // namespace

TEST(Metrics, RankCountsTiesAgainstTruth) {
  std::vector<double> s{0.5, 0.9, 0.5, 0.1};
  EXPECT_EQ(mgt::rank_of_truth(s, 1), 1);
  EXPECT_EQ(mgt::rank_of_truth(s, 0), 3);
  EXPECT_EQ(mgt::rank_of_truth(s, 2), 3);
  EXPECT_EQ(mgt::rank_of_truth(s, 3), 4);
  std::vector<double> flat(10, 0.0);
  EXPECT_EQ(mgt::rank_of_truth(flat, 4), 10);
  EXPECT_THROW(mgt::rank_of_truth(s, 4), mgt::ContractError);
}

TEST(Metrics, MrrOfKnownRanks) {
  std::vector<int> ranks{1, 2, 4};
  EXPECT_NEAR(mgt::mrr(ranks), (1.0 + 0.5 + 0.25) / 3.0, 1e-12);
  EXPECT_NEAR(mgt::mrr(ranks), 0.583333, 1e-6);
  std::vector<int> ones(7, 1);
  EXPECT_DOUBLE_EQ(mgt::mrr(ones), 1.0);
  EXPECT_DOUBLE_EQ(mgt::hits_at_1(ranks), 1.0 / 3.0);
  EXPECT_THROW(mgt::mrr(std::vector<int>{}), mgt::ContractError);
  EXPECT_THROW(mgt::mrr(std::vector<int>{0}), mgt::ContractError);
}

TEST(Metrics, UniformRandomRankingMatchesHarmonicMean) {
  double analytic = 0.0;
  for (int r = 1; r <= 20; ++r) {
    analytic += 1.0 / r;
  }
  analytic /= 20.0;
  EXPECT_NEAR(analytic, 0.17989, 1e-5);

  std::mt19937_64 rng(2024);
  auto scores = random_scores(rng, 10000, 20);
  std::vector<int> truth(10000, 0);
  auto report = mgt::evaluate_scores(scores, truth, {});
  EXPECT_NEAR(report.mrr, analytic, 0.005);
}

TEST(Metrics, RTenAtOneEqualsHitsAtOneOnTenCandidates) {
  std::mt19937_64 rng(5);
  auto scores = random_scores(rng, 500, 10);
  std::vector<int> truth(500);
  for (int& t : truth) {
    t = std::uniform_int_distribution<int>(0, 9)(rng);
  }
  auto report = mgt::evaluate_scores(scores, truth, {{10, 1}, {10, 5}, {2, 1}});
  ASSERT_EQ(report.r_n_at_k.size(), 3u);
  EXPECT_EQ(report.r_n_at_k[0].value, report.hits_at_1);
  EXPECT_EQ(mgt::r_n_at_k(scores, truth, 10, 1), report.hits_at_1);
  EXPECT_EQ(mgt::r_n_at_k(scores, truth, 10, 10), 1.0);
}

TEST(Metrics, RTwoAtOneIsHalfForRandomScores) {
  std::mt19937_64 rng(6);
  auto scores = random_scores(rng, 20000, 10);
  std::vector<int> truth(20000, 3);
  EXPECT_NEAR(mgt::r_n_at_k(scores, truth, 2, 1), 0.5, 0.015);
}

TEST(Metrics, RnAtKUsesTruthPlusFirstOthers) {
  // Truth at position 2; the first other candidate (position 0) beats it,
  // the second (position 1) does not.
  std::vector<std::vector<double>> scores{{0.9, 0.1, 0.5, 0.95}};
  std::vector<int> truth{2};
  EXPECT_EQ(mgt::r_n_at_k(scores, truth, 2, 1), 0.0);
  EXPECT_EQ(mgt::r_n_at_k(scores, truth, 3, 2), 1.0);
  EXPECT_EQ(mgt::r_n_at_k(scores, truth, 4, 2), 0.0);
  EXPECT_THROW(mgt::r_n_at_k(scores, truth, 5, 1), mgt::ContractError);
  EXPECT_THROW(mgt::r_n_at_k(scores, truth, 2, 3), mgt::ContractError);
}

TEST(Metrics, ReportSkipsOversizedSpecs) {
  std::vector<std::vector<double>> scores{{1.0, 0.0, 0.5}};
  std::vector<int> truth{0};
  auto report = mgt::evaluate_scores(scores, truth, {{2, 1}, {10, 1}});
  ASSERT_EQ(report.r_n_at_k.size(), 1u);
  EXPECT_EQ(report.r_n_at_k[0].n, 2);
  EXPECT_EQ(report.count, 1u);
}

TEST(Metrics, BootstrapDetectsRealDifference) {
  std::vector<int> good(400, 1), bad(400, 3);
  for (std::size_t i = 0; i < 400; i += 7) {
    good[i] = 2;
  }
  EXPECT_LT(mgt::paired_significance(good, bad, 2000, 1), 0.01);
}

TEST(Metrics, BootstrapOnIdenticalSystemsIsNotSignificant) {
  std::mt19937_64 rng(9);
  std::vector<int> a(300);
  for (int& r : a) {
    r = std::uniform_int_distribution<int>(1, 10)(rng);
  }
  EXPECT_DOUBLE_EQ(mgt::paired_significance(a, a, 999, 3), 1.0);
}

TEST(Metrics, BootstrapPValueIsSmoothed) {
  // With every resample less extreme than the observation, p = 1/(B+1).
  std::vector<int> a(200, 1), b(200, 2);
  EXPECT_DOUBLE_EQ(mgt::paired_significance(a, b, 99, 3), 1.0 / 100.0);
  EXPECT_EQ(mgt::paired_significance(a, b, 99, 3), mgt::paired_significance(a, b, 99, 3));
  EXPECT_THROW(mgt::paired_significance(a, std::vector<int>(3, 1), 10, 1), mgt::ContractError);
}

TEST(Metrics, SpearmanReferenceValues) {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> up{10, 20, 30, 40, 50};
  std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_NEAR(mgt::spearman(x, up), 1.0, 1e-12);
  EXPECT_NEAR(mgt::spearman(x, down), -1.0, 1e-12);
  // y = [1, 3, 2, 5, 4]: d = [0, -1, 1, -1, 1], rho = 1 - 6·4 / (5·24) = 0.8.
  std::vector<double> y{1, 3, 2, 5, 4};
  EXPECT_NEAR(mgt::spearman(x, y), 0.8, 1e-12);
  // Ties get average ranks; Pearson on [1,2,3,4] vs [1.5,1.5,3,4].
  std::vector<double> a{1, 2, 3, 4};
  std::vector<double> b{7, 7, 8, 9};
  const double ma = 2.5, mb = 2.5;
  const std::vector<double> ra{1, 2, 3, 4}, rb{1.5, 1.5, 3, 4};
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  EXPECT_NEAR(mgt::spearman(a, b), sab / std::sqrt(saa * sbb), 1e-12);
  EXPECT_TRUE(std::isnan(mgt::spearman(x, std::vector<double>(5, 1.0))));
}

TEST(Metrics, RanksFileRoundTrip) {
  fs::path p = fs::temp_directory_path() / "mgt_metrics_ranks.txt";
  std::vector<int> ranks{1, 5, 2, 10, 3};
  mgt::write_ranks(ranks, p);
  EXPECT_EQ(mgt::read_ranks(p), ranks);
  {
    std::ofstream out(p, std::ios::app);
    out << "x\n";
  }
  EXPECT_THROW(mgt::read_ranks(p), mgt::ParseError);
}

TEST(Metrics, ReportFormatIsStable) {
  mgt::EvalReport r;
  r.mrr = 0.5;
  r.hits_at_1 = 0.25;
  r.count = 4;
  r.r_n_at_k.push_back({10, 1, 0.25});
  const std::string text = mgt::format_report(r, "baseline");
  EXPECT_NE(text.find("name=baseline\nexamples=4\nmrr=0.500000\n"), std::string::npos);
  EXPECT_NE(text.find("r10_at_1=0.250000"), std::string::npos);
  EXPECT_EQ(text, mgt::format_report(r, "baseline"));
}
