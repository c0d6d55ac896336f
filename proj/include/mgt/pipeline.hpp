#pragma once

// Stage-by-stage experiment driver. Every stage reads its inputs from and
// writes its outputs to the run directory; manifest.json records the config
// snapshot and the content hash of every artifact a completed stage produced.
//
//   data/       generated splits, vocabulary, generator spec
//   baseline/   uniform-negative corpus, per-epoch checkpoints, best.ckpt,
//               vanilla.bundle
//   buckets/    response pool, level_<l>.corpus, similarity summary
//   mgt/        per-level checkpoints, mgt.bundle
//   reports/    evaluation, probe and summary reports
//   cache/      frozen feature cache

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgt/config.hpp"
#include "mgt/ensemble.hpp"
#include "mgt/probing.hpp"

namespace mgt {

enum class Stage { generate, train_baseline, build_buckets, train_mgt, evaluate, probe, report };

const char* stage_name(Stage stage);
std::optional<Stage> parse_stage(const std::string& name);
const std::vector<Stage>& all_stages();

struct StageRecord {
  bool complete = false;
  std::string options;
  std::map<std::string, std::string> artifacts;  // run-relative path -> FNV-1a hex
};

struct RunManifest {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string config;  // format_config() snapshot
  std::map<std::string, StageRecord> stages;

  static RunManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct StageOptions {
  std::vector<EnsembleMode> ensemble_modes{EnsembleMode::vanilla, EnsembleMode::mgt};
  std::vector<ProbeKind> probe_tasks{ProbeKind::bag_of_words, ProbeKind::abstract_label};
  bool finetune = false;

  std::string describe(Stage stage) const;
};

class Pipeline {
 public:
  /// Opens or creates the run directory. An existing manifest whose config
  /// snapshot differs from `config` is a DriftError.
  Pipeline(std::filesystem::path run_dir, Config config);

  /// Runs one stage. Returns false when the stage was already complete with
  /// the same options and intact artifacts (nothing is rewritten).
  bool run(Stage stage, const StageOptions& options = {});
  void run_all(const StageOptions& options = {});

  const RunManifest& manifest() const { return manifest_; }
  const Config& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return dir_; }

  /// Throws IntegrityError if any artifact of a completed stage is missing
  /// or no longer matches its recorded hash.
  void verify() const;

 private:
  std::vector<std::string> generate();
  std::vector<std::string> train_baseline();
  std::vector<std::string> build_buckets();
  std::vector<std::string> train_mgt();
  std::vector<std::string> evaluate(const StageOptions& options);
  std::vector<std::string> probe(const StageOptions& options);
  std::vector<std::string> report();

  void verify_stage(Stage stage) const;
  void save_manifest() const;
  std::filesystem::path path(const std::string& relative) const { return dir_ / relative; }

  std::filesystem::path dir_;
  Config config_;
  RunManifest manifest_;
};

}  // namespace mgt
