#include "flc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>

#include "flc/errors.hpp"
#include "flc/rng.hpp"

namespace flc {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'", 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, std::string_view what) {
  if (bytes.size() < offset + 4) {
    throw IngestionError(std::string(what) + ": truncated header", bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Batch gather_rows(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b;
  b.input_dim = data.input_dim;
  b.inputs.reserve(indices.size() * data.input_dim);
  b.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto r = data.row(i);
    b.inputs.insert(b.inputs.end(), r.begin(), r.end());
    b.labels.push_back(data.labels[i]);
  }
  return b;
}

Batch as_batch(const Dataset& data) { return Batch{data.inputs, data.labels, data.input_dim}; }

Dataset generate_synthetic(const SyntheticSpec& spec, SyntheticTruth* truth) {
  if (spec.n == 0 || spec.input_dim == 0) throw ConfigError("synthetic data needs n >= 1 and input_dim >= 1");
  if (spec.noise < 0.0 || !std::isfinite(spec.noise)) throw ConfigError("synthetic noise must be finite and >= 0");
  auto rng = CounterRng::for_stream(spec.seed, StreamDomain::kSynthetic);
  Dataset out;
  out.input_dim = spec.input_dim;
  out.inputs.resize(spec.n * spec.input_dim);
  out.labels.resize(spec.n);
  const std::size_t d = spec.input_dim;

  if (spec.kind == SyntheticKind::kRegression) {
    std::vector<double> w(d);
    for (double& v : w) v = rng.next_normal();
    const double b = rng.next_normal();
    for (std::size_t i = 0; i < spec.n; ++i) {
      double y = b;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = rng.next_normal();
        out.inputs[i * d + j] = x;
        y += w[j] * x;
      }
      out.labels[i] = y + spec.noise * rng.next_normal();
    }
    if (truth != nullptr) {
      truth->weights = w;
      truth->bias = b;
    }
    return out;
  }

  if (spec.classes == 0 || spec.n < spec.classes) {
    throw ConfigError("blobs need n >= classes >= 1");
  }
  const std::size_t k = spec.classes;
  std::vector<double> centers(k * d);
  for (double& c : centers) c = rng.next_normal();
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t c = a + 1; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = centers[a * d + j] - centers[c * d + j];
        s += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(s));
    }
  }
  const double required = 4.0 * spec.noise;
  if (k > 1 && min_dist < required) {
    const double scale = required / std::max(min_dist, 1e-12);
    for (double& c : centers) c *= scale;
  }
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t label = i % k;
    for (std::size_t j = 0; j < d; ++j) {
      out.inputs[i * d + j] = centers[label * d + j] + spec.noise * rng.next_normal();
    }
    out.labels[i] = static_cast<double>(label);
  }
  if (truth != nullptr) truth->centers = centers;
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (data.size() < 2) throw ConfigError("need at least two samples to split train/test");
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, data.size() - 1);
  const std::size_t n_train = data.size() - n_test;
  const std::size_t d = data.input_dim;
  Dataset train, test;
  train.input_dim = test.input_dim = d;
  train.inputs.assign(data.inputs.begin(), data.inputs.begin() + static_cast<std::ptrdiff_t>(n_train * d));
  train.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.inputs.assign(data.inputs.begin() + static_cast<std::ptrdiff_t>(n_train * d), data.inputs.end());
  test.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(n_train), data.labels.end());
  return {std::move(train), std::move(test)};
}

PartitionScheme parse_partition_scheme(std::string_view name) {
  if (name == "equal") return PartitionScheme::kEqual;
  if (name == "iid-shuffle") return PartitionScheme::kIidShuffle;
  if (name == "label-shards") return PartitionScheme::kLabelShards;
  throw ConfigError("unknown partition scheme '" + std::string(name) + "'");
}

std::vector<std::size_t> equal_block_sizes(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> sizes(parts, total / parts);
  for (std::size_t p = 0; p < total % parts; ++p) ++sizes[p];
  return sizes;
}

Partition partition(const Dataset& data, std::size_t clients, const PartitionSpec& spec, std::uint64_t seed) {
  const std::size_t total = data.size();
  if (clients == 0) throw ConfigError("partition needs at least one client");
  if (clients > total) {
    throw ConfigError("cannot split " + std::to_string(total) + " samples across " + std::to_string(clients) +
                      " clients");
  }
  auto rng = CounterRng::for_stream(seed, StreamDomain::kPartition);
  Partition parts(clients);

  if (spec.scheme == PartitionScheme::kLabelShards) {
    const std::size_t k = spec.shards_per_client;
    if (k == 0) throw ConfigError("label-shards needs shards_per_client >= 1");
    const std::size_t shards = clients * k;
    if (shards > total) throw ConfigError("more shards than samples");
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });
    const auto shard_sizes = equal_block_sizes(total, shards);
    std::vector<std::size_t> shard_start(shards, 0);
    for (std::size_t s = 1; s < shards; ++s) shard_start[s] = shard_start[s - 1] + shard_sizes[s - 1];
    const auto deal = seeded_permutation(shards, rng);
    for (std::size_t p = 0; p < clients; ++p) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t s = deal[p * k + j];
        for (std::size_t i = 0; i < shard_sizes[s]; ++i) parts[p].push_back(order[shard_start[s] + i]);
      }
    }
    return parts;
  }

  std::vector<std::size_t> order(total);
  if (spec.scheme == PartitionScheme::kIidShuffle) {
    order = seeded_permutation(total, rng);
  } else {
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  const auto sizes = equal_block_sizes(total, clients);
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < clients; ++p) {
    parts[p].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                    order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[p]));
    cursor += sizes[p];
  }
  return parts;
}

std::vector<std::vector<std::size_t>> batch_indices(std::span<const std::size_t> indices, const BatchPlan& plan,
                                                    std::uint64_t client, std::uint64_t round,
                                                    std::uint64_t epoch) {
  if (plan.batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::vector<std::size_t>> out;
  if (indices.empty()) return out;
  if (plan.batch_size >= indices.size()) {
    out.emplace_back(indices.begin(), indices.end());
    return out;
  }
  auto rng = CounterRng::for_stream(plan.shuffle_seed, StreamDomain::kBatchShuffle, client, round, epoch);
  const auto perm = seeded_permutation(indices.size(), rng);
  for (std::size_t start = 0; start < perm.size(); start += plan.batch_size) {
    const std::size_t end = std::min(perm.size(), start + plan.batch_size);
    std::vector<std::size_t> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(indices[perm[i]]);
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<Batch> batches(const Dataset& data, std::span<const std::size_t> indices, const BatchPlan& plan,
                           std::uint64_t client, std::uint64_t round, std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(indices, plan, client, round, epoch)) out.push_back(gather_rows(data, idx));
  return out;
}

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  if (read_be32(images, 0, "images") != 0x00000803U) throw IngestionError("images: bad IDX magic", 0);
  if (read_be32(labels, 0, "labels") != 0x00000801U) throw IngestionError("labels: bad IDX magic", 0);
  const std::uint64_t count = read_be32(images, 4, "images");
  const std::uint64_t rows = read_be32(images, 8, "images");
  const std::uint64_t cols = read_be32(images, 12, "images");
  const std::uint64_t label_count = read_be32(labels, 4, "labels");
  if (count != label_count) {
    throw IngestionError("image count " + std::to_string(count) + " does not match label count " +
                             std::to_string(label_count),
                         4);
  }
  if (count == 0 || rows * cols == 0) throw IngestionError("images: empty IDX file", 4);
  const std::uint64_t pixels = rows * cols;
  if (images.size() - 16 < count * pixels) {
    throw IngestionError("images: truncated payload, expected " + std::to_string(count * pixels) + " bytes",
                         images.size());
  }
  if (labels.size() - 8 < count) {
    throw IngestionError("labels: truncated payload, expected " + std::to_string(count) + " bytes", labels.size());
  }
  if (images.size() - 16 > count * pixels) throw IngestionError("images: trailing bytes", 16 + count * pixels);
  if (labels.size() - 8 > count) throw IngestionError("labels: trailing bytes", 8 + count);
  Dataset out;
  out.input_dim = static_cast<std::size_t>(pixels);
  out.inputs.resize(count * pixels);
  out.labels.resize(count);
  for (std::size_t i = 0; i < out.inputs.size(); ++i) out.inputs[i] = images[16 + i] / 255.0;
  for (std::size_t i = 0; i < count; ++i) out.labels[i] = labels[8 + i];
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  return parse_idx(img, lab);
}

Dataset parse_csv(std::string_view text, std::size_t label_column, bool has_header) {
  Dataset out;
  std::size_t pos = 0;
  bool first_line = true;
  std::size_t width = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    const std::size_t line_start = pos;
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (first_line && has_header) {
      first_line = false;
      continue;
    }
    first_line = false;
    if (line.empty()) continue;

    std::vector<double> fields;
    std::size_t fpos = 0;
    while (true) {
      std::size_t comma = line.find(',', fpos);
      if (comma == std::string_view::npos) comma = line.size();
      std::string_view field = line.substr(fpos, comma - fpos);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double value = 0.0;
      const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (field.empty() || ec != std::errc() || end != field.data() + field.size() || !std::isfinite(value)) {
        throw IngestionError("csv: non-numeric field '" + std::string(field) + "'", line_start + fpos);
      }
      fields.push_back(value);
      if (comma == line.size()) break;
      fpos = comma + 1;
    }
    if (label_column >= fields.size()) {
      throw IngestionError("csv: label column " + std::to_string(label_column) + " out of range", line_start);
    }
    if (width == 0) {
      width = fields.size();
      if (width < 2) throw IngestionError("csv: need at least one feature column", line_start);
      out.input_dim = width - 1;
    } else if (fields.size() != width) {
      throw IngestionError("csv: row has " + std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(width),
                           line_start);
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j == label_column) {
        out.labels.push_back(fields[j]);
      } else {
        out.inputs.push_back(fields[j]);
      }
    }
  }
  if (out.size() == 0) throw IngestionError("csv: no data rows", text.size());
  return out;
}

Dataset load_csv(const std::filesystem::path& path, std::size_t label_column, bool has_header) {
  const auto bytes = read_file(path);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), label_column,
                   has_header);
}

}  // namespace flc
