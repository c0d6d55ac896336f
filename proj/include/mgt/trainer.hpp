#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mgt/config.hpp"
#include "mgt/corpus.hpp"
#include "mgt/dual_encoder.hpp"
#include "mgt/metrics.hpp"
#include "mgt/optimizer.hpp"
#include "mgt/sampling.hpp"

namespace mgt {

/// An evaluation split in id form. candidates[i] index into `responses`;
/// truth[i] is the ground-truth position inside candidates[i].
struct EvalSet {
  std::vector<TokenIds> contexts;
  std::vector<TokenIds> responses;
  std::vector<std::vector<int>> candidates;
  std::vector<int> truth;

  std::size_t size() const { return contexts.size(); }
};

EvalSet make_eval_set(const Split& split, const Vocabulary& vocab, int truncation);

/// Inner-product logits of every example's candidates. Contexts and the
/// split's responses are each encoded once.
std::vector<std::vector<double>> candidate_logits(const DualEncoder& model, const EvalSet& set);

EvalReport evaluate_model(const DualEncoder& model, const EvalSet& set,
                          const std::vector<std::pair<int, int>>& r_specs = {});

/// Mean loss over `batch` (indices into corpus.examples); gradients of that
/// mean are accumulated into the model's parameters.
double batch_loss_backward(DualEncoder& model, const TrainingCorpus& corpus,
                           std::span<const std::size_t> batch,
                           const std::vector<TokenIds>& pool_responses);

/// Loss of a single example without recording.
double example_loss(const DualEncoder& model, const TrainingExample& example,
                    const std::vector<TokenIds>& pool_responses);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_mrr = 0.0;
  std::filesystem::path checkpoint;
  std::uint64_t fingerprint = 0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best = 0;
  DualEncoder best_model;
  double untrained_valid_mrr = 0.0;

  /// Indices of the `n` epochs with the highest validation MRR, best first;
  /// ties go to the earlier epoch.
  std::vector<std::size_t> top(std::size_t n) const;
};

/// Supplies the training corpus for a 1-based epoch.
using CorpusSchedule = std::function<const TrainingCorpus&(int epoch)>;

/// Adam with global-norm clipping; validation MRR and a checkpoint
/// `<dir>/<prefix>_epoch_NN.ckpt` after every epoch. `model` ends holding the
/// final-epoch weights; the best-MRR weights are returned in the result.
TrainResult train(DualEncoder& model, const CorpusSchedule& schedule,
                  const std::vector<TokenIds>& pool_responses, const EvalSet& valid,
                  const Config& config, const std::filesystem::path& dir, const std::string& prefix);

/// Response ids of every training example, indexed like the pool.
std::vector<TokenIds> pool_token_ids(const Split& train, const Vocabulary& vocab);

}  // namespace mgt
