#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mgt {

/// 1 + number of other candidates scoring at least as high as the truth, so
/// ties count against the truth.
int rank_of_truth(std::span<const double> scores, int truth_index);

double mrr(std::span<const int> ranks);
double hits_at_1(std::span<const int> ranks);

/// Fraction of examples whose truth ranks within the top `k` when the
/// candidate set is cut down to the truth plus the first N−1 other candidates
/// in stored order.
double r_n_at_k(const std::vector<std::vector<double>>& scores, std::span<const int> truth_positions,
                int n, int k);

/// Two-sided paired bootstrap test on the MRR difference; returns
/// (count + 1) / (iterations + 1) where count is the number of resamples whose
/// centred difference is at least as extreme as the observed one.
double paired_significance(std::span<const int> ranks_a, std::span<const int> ranks_b,
                           int iterations, std::uint64_t seed);

struct RnAtK {
  int n = 0;
  int k = 0;
  double value = 0.0;
};

struct EvalReport {
  double mrr = 0.0;
  double hits_at_1 = 0.0;
  std::vector<RnAtK> r_n_at_k;
  std::vector<int> ranks;
  std::size_t count = 0;
};

/// `r_specs` lists (N, k) pairs; pairs with N larger than a candidate set are
/// skipped for the whole report.
EvalReport evaluate_scores(const std::vector<std::vector<double>>& scores,
                           std::span<const int> truth_positions,
                           const std::vector<std::pair<int, int>>& r_specs);

/// Structured key-value text, one metric per line.
std::string format_report(const EvalReport& report, const std::string& name);
void write_report(const EvalReport& report, const std::string& name,
                  const std::filesystem::path& path);

void write_ranks(std::span<const int> ranks, const std::filesystem::path& path);
std::vector<int> read_ranks(const std::filesystem::path& path);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace mgt
