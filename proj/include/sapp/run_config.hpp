#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sapp/block_extractor.hpp"
#include "sapp/clone_engine.hpp"
#include "sapp/corpus.hpp"

namespace sapp {

/// Effective settings of one run, echoed into every report.
struct RunConfig {
  double theta = 0.8;
  std::uint64_t min_tokens = 23;
  bool exclude_self_pairs = true;
  Denominator denominator = Denominator::max_size;
  GranularitySet granularities{Granularity::file};
  std::optional<std::string> default_license;
  std::optional<std::string> rules_path;
  std::optional<std::string> matrix_path;
  std::optional<std::string> store_path;
  std::vector<std::string> apprentice_urls;
  std::optional<std::string> manager_url;
  std::optional<std::uint64_t> seed;

  /// Throws ErrorKind::config.
  void validate() const;
  DetectionConfig detection() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// "file,module,function" → set. Throws ErrorKind::config on unknown names.
GranularitySet parse_granularity_list(const std::string& text);

}  // namespace sapp
