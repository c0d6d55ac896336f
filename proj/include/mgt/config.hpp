#pragma once

// Key-value configuration files:
//
//   # comment
//   key = value
//
// Blank lines and lines starting with '#' are ignored. Keys are unique.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace mgt {

using KeyValues = std::map<std::string, std::string>;

/// Errors carry `origin:line`.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);

struct Config {
  // retrieval training
  int k = 10;
  int levels = 5;  // L
  int epochs = 20;
  double lr = 0.005;
  int batch_size = 32;
  double clip_norm = 5.0;
  int emb_dim = 50;
  int hidden = 150;
  std::uint64_t seed = 1;
  int truncation = 160;
  bool resample_per_epoch = false;
  int max_vocab = 1261;

  // synthetic data
  int train_dialogs = 2000;
  int valid_dialogs = 300;
  int test_dialogs = 300;
  std::string generator_spec;  // empty: built-in spec

  // probes
  int probe_epochs = 40;
  double probe_lr = 0.01;
  int probe_batch = 64;
  int finetune_epochs = 20;
  double finetune_lr = 0.02;

  int bootstrap_iterations = 10000;

  bool operator==(const Config&) const = default;
};

/// Unknown keys and malformed values are configuration errors.
Config config_from_key_values(const KeyValues& values, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});
/// Canonical text form; parsing it back yields an equal Config.
std::string format_config(const Config& config);
/// Range checks shared by every entry point.
void validate_config(const Config& config);

}  // namespace mgt
