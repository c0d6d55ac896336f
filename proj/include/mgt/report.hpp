#pragma once

#include <string>
#include <vector>

#include "mgt/config.hpp"

namespace mgt {

/// Fixed six-decimal rendering used by every report so reruns compare bytewise.
std::string format_metric(double value);

class TextTable {
 public:
  explicit TextTable(std::vector<std::string> headers) : headers_(std::move(headers)) {}
  void add_row(std::vector<std::string> cells);
  /// Left-aligned first column, right-aligned numeric columns.
  std::string render() const;

 private:
  std::vector<std::string> headers_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes `key = value` lines in key order.
std::string format_key_values(const KeyValues& values);

/// Human-readable comparison tables built from the merged metrics of a run.
std::string render_summary(const KeyValues& metrics, const Config& config);

}  // namespace mgt
