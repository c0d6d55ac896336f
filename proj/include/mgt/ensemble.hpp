#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mgt/dual_encoder.hpp"
#include "mgt/trainer.hpp"

namespace mgt {

/// `mgt`: best checkpoint of each granularity level. `vanilla`: the top
/// checkpoints of a single baseline run.
enum class EnsembleMode { mgt, vanilla };

std::string to_string(EnsembleMode mode);
EnsembleMode parse_ensemble_mode(const std::string& text);

/// Mean of the members' softmax distributions over the same candidates.
std::vector<double> ensemble_average(const std::vector<std::vector<double>>& member_logits);

class EnsembleBundle {
 public:
  /// Members must agree on vocabulary hash and hidden size.
  EnsembleBundle(EnsembleMode mode, std::vector<DualEncoder> members,
                 std::vector<std::filesystem::path> paths = {});

  /// Manifest:
  ///   #mgt-bundle v1
  ///   mode=<mgt|vanilla>
  ///   member=<checkpoint path> <fingerprint hex>
  /// Relative member paths resolve against the manifest's directory.
  static EnsembleBundle load(const std::filesystem::path& manifest);
  void save(const std::filesystem::path& manifest) const;

  EnsembleMode mode() const { return mode_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<DualEncoder>& members() const { return members_; }
  const std::vector<std::uint64_t>& fingerprints() const { return fingerprints_; }
  std::uint64_t vocab_hash() const { return members_.front().vocab_hash; }

 private:
  EnsembleMode mode_;
  std::vector<DualEncoder> members_;
  std::vector<std::filesystem::path> paths_;
  std::vector<std::uint64_t> fingerprints_;
};

std::vector<double> ensemble_predict(const EnsembleBundle& bundle, const TokenIds& context,
                                     std::span<const TokenIds> candidates);

/// Ensemble probabilities for every example of an evaluation set.
std::vector<std::vector<double>> ensemble_probabilities(const EnsembleBundle& bundle,
                                                        const EvalSet& set);

}  // namespace mgt
