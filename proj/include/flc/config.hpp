#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "flc/algorithms.hpp"
#include "flc/data.hpp"
#include "flc/models.hpp"
#include "flc/privacy.hpp"

namespace flc {

enum class DataSource { kSynthetic, kIdx, kCsv };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  SyntheticSpec synthetic;
  bool synthetic_seed_set = false;  // otherwise the run seed is used
  std::filesystem::path images, labels, test_images, test_labels;  // idx
  std::filesystem::path csv, test_csv;                              // csv
  std::size_t label_column = 0;
  bool header = false;
  double test_fraction = 0.2;  // used when no explicit test files are given
  PartitionSpec partition;
};

/// Everything that determines a run's trajectory.
struct RunConfig {
  ModelSpec model;
  AlgoConfig algo;
  PrivacyConfig privacy;
  DataConfig data;
  std::uint32_t clients = 4;
  std::uint64_t seed = 0;
  std::uint32_t eval_every = 1;
  std::filesystem::path output = "metrics.jsonl";
  std::uint32_t timeout_ms = 60000;
};

/// Parses the JSON document (sections model/algo/privacy/data/run). Unknown
/// keys and out-of-range values raise ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Effective configuration; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

/// Cross-section checks (model vs data shape, partition sizes, ...).
void validate(const RunConfig& config);

}  // namespace flc
