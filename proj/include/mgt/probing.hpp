#pragma once

// Linear probes on frozen context representations.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgt/autograd.hpp"
#include "mgt/corpus.hpp"
#include "mgt/dual_encoder.hpp"

namespace mgt {

enum class ProbeKind { bag_of_words, abstract_label };

std::string to_string(ProbeKind kind);
/// Accepts "bow"/"bag_of_words" and "abstract"/"abstract_label".
ProbeKind parse_probe_kind(const std::string& text);

struct ProbeTask {
  ProbeKind kind = ProbeKind::bag_of_words;
  int label_dim = 0;
  ag::Matrix targets;  // examples × label_dim, entries 0/1
};

/// bag_of_words: label j is vocabulary id reserved_count + j, set when the id
/// occurs in the last user turn. abstract_label: one-hot latent topic.
ProbeTask make_probe_task(ProbeKind kind, const Split& split, const Vocabulary& vocab,
                          int num_topics);

/// Context vectors from the frozen context encoder. With a cache directory
/// the matrix is stored under the checkpoint fingerprint and a hash of the
/// contexts; `cache_hit` reports whether the file was reused.
ag::Matrix freeze_and_encode(const DualEncoder& model, const std::vector<TokenIds>& contexts,
                             const std::filesystem::path& cache_dir = {},
                             bool* cache_hit = nullptr);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<double> label_precision;
  std::vector<double> label_recall;
};

/// Micro-averaged over the labels not listed in `excluded`. Predictions and
/// targets are 0/1 matrices of equal shape.
F1Score micro_f1(const ag::Matrix& predictions, const ag::Matrix& targets,
                 std::span<const int> excluded = {});

struct ProbeConfig {
  int epochs = 40;
  double lr = 0.01;
  int batch = 64;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
};

struct ProbeData {
  ag::Matrix train_x, train_y;
  ag::Matrix valid_x, valid_y;
  ag::Matrix test_x, test_y;
};

struct ProbeResult {
  std::string model;
  std::optional<int> level;
  ProbeKind kind = ProbeKind::bag_of_words;
  F1Score test;
  double valid_f1 = 0.0;
  int best_epoch = 0;
  std::vector<int> excluded_labels;
};

struct LinearProbe {
  ag::Parameter weight;  // features × labels
  ag::Parameter bias;    // 1 × labels

  ag::Matrix logits(const ag::Matrix& features) const;
  ag::Matrix predict(const ag::Matrix& features) const;  // threshold 0.5
};

/// Sigmoid outputs, binary cross-entropy summed over labels, Adam; the epoch
/// with the best validation micro-F1 is kept. Label columns that are all zero
/// in the training targets are excluded from every F1.
ProbeResult train_probe(const ProbeData& data, ProbeKind kind, const ProbeConfig& config,
                        LinearProbe* trained = nullptr);

struct ProbeSplit {
  std::vector<TokenIds> contexts;
  ProbeTask bow;
  ProbeTask abstract;
  const ProbeTask& task(ProbeKind kind) const {
    return kind == ProbeKind::bag_of_words ? bow : abstract;
  }
};

struct ProbeSuite {
  ProbeSplit train, valid, test;
};

ProbeSuite make_probe_suite(const Split& train, const Split& valid, const Split& test,
                            const Vocabulary& vocab, int truncation, int num_topics);

/// Frozen probe over the concatenated context vectors of `models`, in order.
ProbeResult probe_models(const std::vector<const DualEncoder*>& models, const ProbeSuite& suite,
                         ProbeKind kind, const ProbeConfig& config,
                         const std::filesystem::path& cache_dir = {});

struct SweepResult {
  /// bow[l-1] and abstract[l-1] belong to level l; a task that was not
  /// requested stays empty.
  std::vector<ProbeResult> bow;
  std::vector<ProbeResult> abstract;
  /// Spearman correlation between granularity (L+1−l, so level 1 is the
  /// most granular) and F1. Empty when L = 1.
  std::optional<double> rho_bow;
  std::optional<double> rho_abstract;
};

/// `models[l-1]` is the level-l model.
SweepResult granularity_sweep(const std::vector<const DualEncoder*>& models,
                              const ProbeSuite& suite, const ProbeConfig& config,
                              const std::vector<ProbeKind>& kinds = {ProbeKind::bag_of_words,
                                                                     ProbeKind::abstract_label},
                              const std::filesystem::path& cache_dir = {});

/// Like a frozen probe but the context encoder is trained together with the
/// linear layer. `model` is modified.
ProbeResult finetune_probe(DualEncoder& model, const ProbeSuite& suite, ProbeKind kind,
                           const ProbeConfig& config);

}  // namespace mgt
