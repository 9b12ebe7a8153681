#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "flc/models.hpp"

namespace flc {

/// In-memory samples, row-major. Immutable after construction by convention.
struct Dataset {
  std::vector<double> inputs;
  std::vector<double> labels;
  std::size_t input_dim = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * input_dim, input_dim);
  }
  bool operator==(const Dataset&) const = default;
};

/// Copies the selected rows, in order, into a Batch.
Batch gather_rows(const Dataset& data, std::span<const std::size_t> indices);
Batch as_batch(const Dataset& data);

enum class SyntheticKind { kRegression, kBlobs };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kBlobs;
  std::size_t n = 200;
  std::size_t input_dim = 2;
  std::size_t classes = 2;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticTruth {
  std::vector<double> weights;  // regression only
  double bias = 0.0;            // regression only
  std::vector<double> centers;  // blobs only, classes x input_dim
};

/// Regression: x ~ N(0, I), y = <x, w*> + b* + noise * N(0, 1).
/// Blobs: sample i has class i mod classes and is drawn from N(center, noise^2 I);
/// centers are rescaled so every pair is at least 4 * noise apart.
Dataset generate_synthetic(const SyntheticSpec& spec, SyntheticTruth* truth = nullptr);

/// Splits off the trailing `test_fraction` of the rows (at least one row each side).
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction);

enum class PartitionScheme { kEqual, kIidShuffle, kLabelShards };

PartitionScheme parse_partition_scheme(std::string_view name);

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::kEqual;
  std::size_t shards_per_client = 2;
};

/// Index sets, one per client.
using Partition = std::vector<std::vector<std::size_t>>;

/// equal: contiguous blocks of floor(I/P), first I mod P clients get one extra.
/// iid-shuffle: the same sizes over a seeded permutation.
/// label-shards: stable sort by label, cut into P*k near-equal shards, deal k
/// shards per client through a seeded permutation of shard ids.
Partition partition(const Dataset& data, std::size_t clients, const PartitionSpec& spec, std::uint64_t seed);

/// Block sizes for splitting `total` items into `parts` with the remainder on the first blocks.
std::vector<std::size_t> equal_block_sizes(std::size_t total, std::size_t parts);

struct BatchPlan {
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 0;
};

/// Seeded shuffle of `indices` keyed by (shuffle_seed, client, round, epoch),
/// cut into ceil(|indices| / batch_size) batches; the last may be short.
/// A batch size covering every index yields one batch in the original order.
std::vector<std::vector<std::size_t>> batch_indices(std::span<const std::size_t> indices, const BatchPlan& plan,
                                                    std::uint64_t client, std::uint64_t round,
                                                    std::uint64_t epoch);

std::vector<Batch> batches(const Dataset& data, std::span<const std::size_t> indices, const BatchPlan& plan,
                           std::uint64_t client, std::uint64_t round, std::uint64_t epoch);

/// IDX image/label pair (MNIST layout). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Numeric CSV; `label_column` is removed from the features.
Dataset load_csv(const std::filesystem::path& path, std::size_t label_column, bool has_header);
Dataset parse_csv(std::string_view text, std::size_t label_column, bool has_header);

}  // namespace flc
