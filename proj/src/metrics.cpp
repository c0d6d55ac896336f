#include "mgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mgt/errors.hpp"

namespace mgt {

int rank_of_truth(std::span<const double> scores, int truth_index) {
  if (truth_index < 0 || truth_index >= static_cast<int>(scores.size())) {
    throw ContractError("rank_of_truth: truth index " + std::to_string(truth_index) +
                        " outside candidate set of " + std::to_string(scores.size()));
  }
  const double truth = scores[static_cast<std::size_t>(truth_index)];
  int rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (static_cast<int>(j) != truth_index && scores[j] >= truth) {
      ++rank;
    }
  }
  return rank;
}

double mrr(std::span<const int> ranks) {
  if (ranks.empty()) {
    throw ContractError("mrr of an empty rank list");
  }
  double total = 0.0;
  for (int r : ranks) {
    if (r < 1) {
      throw ContractError("rank " + std::to_string(r) + " is not positive");
    }
    total += 1.0 / r;
  }
  return total / static_cast<double>(ranks.size());
}

double hits_at_1(std::span<const int> ranks) {
  if (ranks.empty()) {
    throw ContractError("hits@1 of an empty rank list");
  }
  const auto hits = std::count(ranks.begin(), ranks.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double r_n_at_k(const std::vector<std::vector<double>>& scores, std::span<const int> truth_positions,
                int n, int k) {
  if (scores.empty() || scores.size() != truth_positions.size()) {
    throw ContractError("r_n_at_k: need one truth position per scored example");
  }
  if (n < 1 || k < 1 || k > n) {
    throw ContractError("r_n_at_k: need 1 <= k <= N, got N=" + std::to_string(n) +
                        " k=" + std::to_string(k));
  }
  std::size_t hits = 0;
  std::vector<double> subset;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const auto& s = scores[e];
    if (static_cast<std::size_t>(n) > s.size()) {
      throw ContractError("r_n_at_k: N=" + std::to_string(n) + " exceeds the " +
                          std::to_string(s.size()) + " candidates of example " + std::to_string(e));
    }
    const int truth = truth_positions[e];
    subset.clear();
    subset.push_back(s[static_cast<std::size_t>(truth)]);
    for (std::size_t j = 0; j < s.size() && subset.size() < static_cast<std::size_t>(n); ++j) {
      if (static_cast<int>(j) != truth) {
        subset.push_back(s[j]);
      }
    }
    hits += rank_of_truth(subset, 0) <= k ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double paired_significance(std::span<const int> ranks_a, std::span<const int> ranks_b,
                           int iterations, std::uint64_t seed) {
  if (ranks_a.size() != ranks_b.size()) {
    throw ContractError("paired_significance: rank lists differ in length (" +
                        std::to_string(ranks_a.size()) + " vs " + std::to_string(ranks_b.size()) +
                        ")");
  }
  if (ranks_a.empty() || iterations < 1) {
    throw ContractError("paired_significance: need examples and at least one iteration");
  }
  const std::size_t n = ranks_a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = 1.0 / ranks_a[i] - 1.0 / ranks_b[i];
  }
  const double observed = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  int extreme = 0;
  for (int b = 0; b < iterations; ++b) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += diff[pick(rng)];
    }
    const double resampled = total / static_cast<double>(n);
    if (std::abs(resampled - observed) >= std::abs(observed)) {
      ++extreme;
    }
  }
  return (extreme + 1.0) / (iterations + 1.0);
}

EvalReport evaluate_scores(const std::vector<std::vector<double>>& scores,
                           std::span<const int> truth_positions,
                           const std::vector<std::pair<int, int>>& r_specs) {
  if (scores.empty() || scores.size() != truth_positions.size()) {
    throw ContractError("evaluate_scores: need one truth position per scored example");
  }
  EvalReport report;
  report.count = scores.size();
  std::size_t min_candidates = std::numeric_limits<std::size_t>::max();
  for (std::size_t e = 0; e < scores.size(); ++e) {
    report.ranks.push_back(rank_of_truth(scores[e], truth_positions[e]));
    min_candidates = std::min(min_candidates, scores[e].size());
  }
  report.mrr = mrr(report.ranks);
  report.hits_at_1 = hits_at_1(report.ranks);
  for (const auto& [n, k] : r_specs) {
    if (static_cast<std::size_t>(n) <= min_candidates) {
      report.r_n_at_k.push_back(RnAtK{n, k, r_n_at_k(scores, truth_positions, n, k)});
    }
  }
  return report;
}

std::string format_report(const EvalReport& report, const std::string& name) {
  std::ostringstream out;
  char buf[64];
  out << "name=" << name << "\n";
  out << "examples=" << report.count << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", report.mrr);
  out << "mrr=" << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", report.hits_at_1);
  out << "hits_at_1=" << buf << "\n";
  for (const auto& r : report.r_n_at_k) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.value);
    out << "r" << r.n << "_at_" << r.k << "=" << buf << "\n";
  }
  return out.str();
}

void write_report(const EvalReport& report, const std::string& name,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write report " + path.string());
  }
  out << format_report(report, name);
}

void write_ranks(std::span<const int> ranks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write ranks " + path.string());
  }
  out << "#mgt-ranks v1 count=" << ranks.size() << "\n";
  for (int r : ranks) {
    out << r << "\n";
  }
}

std::vector<int> read_ranks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open ranks " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind("#mgt-ranks v1", 0) != 0) {
    throw ParseError(path.string() + ":1: not a ranks file");
  }
  std::vector<int> ranks;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      std::size_t used = 0;
      const int r = std::stoi(line, &used);
      if (used != line.size() || r < 1) {
        throw std::invalid_argument("rank");
      }
      ranks.push_back(r);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad rank '" + line + "'");
    }
  }
  return ranks;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
      ++j;
    }
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      ranks[idx[t]] = avg;
    }
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractError("spearman: need two equally long series of length >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace mgt
