#include "flc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "flc/errors.hpp"

namespace flc {
namespace {

using nlohmann::json;

// Reads a section, rejecting keys outside `allowed`.
const json& section(const json& doc, const char* name, std::initializer_list<const char*> allowed) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  const json& s = doc.at(name);
  if (!s.is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : s.items()) {
    if (!keys.contains(key)) throw ConfigError(std::string("unknown key '") + name + "." + key + "'");
  }
  return s;
}

template <typename T>
T get_or(const json& s, const char* key, T fallback, const char* where) {
  if (!s.contains(key)) return fallback;
  try {
    return s.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + where + "." + key + "': " + e.what());
  }
}

double real_or_inf(const json& s, const char* key, double fallback, const char* where) {
  if (!s.contains(key)) return fallback;
  const json& v = s.at(key);
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity")) {
    return std::numeric_limits<double>::infinity();
  }
  if (!v.is_number()) throw ConfigError(std::string("'") + where + "." + key + "' must be a number or \"inf\"");
  return v.get<double>();
}

json real_or_inf_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

std::string_view synthetic_kind_name(SyntheticKind k) { return k == SyntheticKind::kBlobs ? "blobs" : "regression"; }

std::string_view partition_name(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::kEqual: return "equal";
    case PartitionScheme::kIidShuffle: return "iid-shuffle";
    case PartitionScheme::kLabelShards: return "label-shards";
  }
  return "equal";
}

}  // namespace

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "model" && key != "algo" && key != "privacy" && key != "data" && key != "run") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  RunConfig c;

  const json& m = section(doc, "model", {"kind", "input_dim", "output_dim", "hidden_dim"});
  c.model.kind = parse_model_kind(get_or<std::string>(m, "kind", "linear-regression", "model"));
  c.model.input_dim = get_or<std::uint32_t>(m, "input_dim", 1, "model");
  c.model.output_dim = get_or<std::uint32_t>(m, "output_dim", 1, "model");
  c.model.hidden_dim = get_or<std::uint32_t>(m, "hidden_dim", 0, "model");

  const json& a = section(doc, "algo", {"kind", "rho", "zeta", "eta", "beta", "local_steps", "batch_size", "rounds",
                                        "rho_growth", "rho_max"});
  c.algo.kind = parse_algo_kind(get_or<std::string>(a, "kind", "iiadmm", "algo"));
  c.algo.rho = get_or<double>(a, "rho", c.algo.rho, "algo");
  c.algo.zeta = get_or<double>(a, "zeta", c.algo.zeta, "algo");
  c.algo.eta = get_or<double>(a, "eta", c.algo.eta, "algo");
  c.algo.beta = get_or<double>(a, "beta", c.algo.beta, "algo");
  c.algo.local_steps = get_or<std::uint32_t>(a, "local_steps", c.algo.local_steps, "algo");
  c.algo.batch_size = get_or<std::size_t>(a, "batch_size", c.algo.batch_size, "algo");
  c.algo.rounds = get_or<std::uint32_t>(a, "rounds", c.algo.rounds, "algo");
  c.algo.rho_growth = get_or<double>(a, "rho_growth", c.algo.rho_growth, "algo");
  c.algo.rho_max = real_or_inf(a, "rho_max", c.algo.rho_max, "algo");

  const json& p = section(doc, "privacy", {"enabled", "epsilon", "clip"});
  c.privacy.enabled = get_or<bool>(p, "enabled", false, "privacy");
  c.privacy.epsilon = real_or_inf(p, "epsilon", kInfiniteEpsilon, "privacy");
  c.privacy.clip = get_or<double>(p, "clip", c.privacy.clip, "privacy");

  const json& d = section(doc, "data", {"source", "synthetic", "images", "labels", "test_images", "test_labels", "csv",
                                        "test_csv", "label_column", "header", "test_fraction", "partition"});
  const auto source = get_or<std::string>(d, "source", "synthetic", "data");
  if (source == "synthetic") {
    c.data.source = DataSource::kSynthetic;
  } else if (source == "idx") {
    c.data.source = DataSource::kIdx;
  } else if (source == "csv") {
    c.data.source = DataSource::kCsv;
  } else {
    throw ConfigError("unknown data source '" + source + "'");
  }
  const json& s = section(d, "synthetic", {"kind", "n", "input_dim", "classes", "noise", "seed"});
  const auto skind = get_or<std::string>(s, "kind", "blobs", "data.synthetic");
  if (skind == "blobs") {
    c.data.synthetic.kind = SyntheticKind::kBlobs;
  } else if (skind == "regression") {
    c.data.synthetic.kind = SyntheticKind::kRegression;
  } else {
    throw ConfigError("unknown synthetic kind '" + skind + "'");
  }
  c.data.synthetic.n = get_or<std::size_t>(s, "n", c.data.synthetic.n, "data.synthetic");
  c.data.synthetic.input_dim = get_or<std::size_t>(s, "input_dim", c.model.input_dim, "data.synthetic");
  c.data.synthetic.classes = get_or<std::size_t>(s, "classes", c.model.output_dim, "data.synthetic");
  c.data.synthetic.noise = get_or<double>(s, "noise", c.data.synthetic.noise, "data.synthetic");
  c.data.synthetic_seed_set = s.contains("seed");
  c.data.synthetic.seed = get_or<std::uint64_t>(s, "seed", 0, "data.synthetic");
  c.data.images = get_or<std::string>(d, "images", "", "data");
  c.data.labels = get_or<std::string>(d, "labels", "", "data");
  c.data.test_images = get_or<std::string>(d, "test_images", "", "data");
  c.data.test_labels = get_or<std::string>(d, "test_labels", "", "data");
  c.data.csv = get_or<std::string>(d, "csv", "", "data");
  c.data.test_csv = get_or<std::string>(d, "test_csv", "", "data");
  c.data.label_column = get_or<std::size_t>(d, "label_column", 0, "data");
  c.data.header = get_or<bool>(d, "header", false, "data");
  c.data.test_fraction = get_or<double>(d, "test_fraction", c.data.test_fraction, "data");
  const json& part = section(d, "partition", {"scheme", "shards_per_client"});
  c.data.partition.scheme = parse_partition_scheme(get_or<std::string>(part, "scheme", "equal", "data.partition"));
  c.data.partition.shards_per_client =
      get_or<std::size_t>(part, "shards_per_client", c.data.partition.shards_per_client, "data.partition");

  const json& r = section(doc, "run", {"clients", "seed", "eval_every", "output", "timeout_ms"});
  c.clients = get_or<std::uint32_t>(r, "clients", c.clients, "run");
  c.seed = get_or<std::uint64_t>(r, "seed", c.seed, "run");
  c.eval_every = get_or<std::uint32_t>(r, "eval_every", c.eval_every, "run");
  c.output = get_or<std::string>(r, "output", c.output.string(), "run");
  c.timeout_ms = get_or<std::uint32_t>(r, "timeout_ms", c.timeout_ms, "run");

  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& c) {
  json doc;
  doc["model"] = {{"kind", std::string(to_string(c.model.kind))},
                  {"input_dim", c.model.input_dim},
                  {"output_dim", c.model.output_dim},
                  {"hidden_dim", c.model.hidden_dim}};
  doc["algo"] = {{"kind", std::string(to_string(c.algo.kind))},
                 {"rho", c.algo.rho},
                 {"zeta", c.algo.zeta},
                 {"eta", c.algo.eta},
                 {"beta", c.algo.beta},
                 {"local_steps", c.algo.local_steps},
                 {"batch_size", c.algo.batch_size},
                 {"rounds", c.algo.rounds},
                 {"rho_growth", c.algo.rho_growth},
                 {"rho_max", real_or_inf_json(c.algo.rho_max)}};
  doc["privacy"] = {{"enabled", c.privacy.enabled},
                    {"epsilon", real_or_inf_json(c.privacy.epsilon)},
                    {"clip", c.privacy.clip}};
  json data;
  switch (c.data.source) {
    case DataSource::kSynthetic: {
      data["source"] = "synthetic";
      json s = {{"kind", std::string(synthetic_kind_name(c.data.synthetic.kind))},
                {"n", c.data.synthetic.n},
                {"input_dim", c.data.synthetic.input_dim},
                {"classes", c.data.synthetic.classes},
                {"noise", c.data.synthetic.noise}};
      if (c.data.synthetic_seed_set) s["seed"] = c.data.synthetic.seed;
      data["synthetic"] = s;
      break;
    }
    case DataSource::kIdx:
      data["source"] = "idx";
      data["images"] = c.data.images.string();
      data["labels"] = c.data.labels.string();
      data["test_images"] = c.data.test_images.string();
      data["test_labels"] = c.data.test_labels.string();
      break;
    case DataSource::kCsv:
      data["source"] = "csv";
      data["csv"] = c.data.csv.string();
      data["test_csv"] = c.data.test_csv.string();
      data["label_column"] = c.data.label_column;
      data["header"] = c.data.header;
      break;
  }
  data["test_fraction"] = c.data.test_fraction;
  data["partition"] = {{"scheme", std::string(partition_name(c.data.partition.scheme))},
                       {"shards_per_client", c.data.partition.shards_per_client}};
  doc["data"] = data;
  doc["run"] = {{"clients", c.clients},
                {"seed", c.seed},
                {"eval_every", c.eval_every},
                {"output", c.output.string()},
                {"timeout_ms", c.timeout_ms}};
  return doc;
}

void validate(const RunConfig& c) {
  validate(c.model);
  validate(c.algo);
  if (c.clients == 0) throw ConfigError("run.clients must be positive");
  if (c.eval_every == 0) throw ConfigError("run.eval_every must be positive");
  if (c.timeout_ms == 0) throw ConfigError("run.timeout_ms must be positive");
  if (c.privacy.enabled) {
    if (!(c.privacy.epsilon > 0.0)) throw ConfigError("privacy.epsilon must be positive or \"inf\"");
    if (!(c.privacy.clip > 0.0) || !std::isfinite(c.privacy.clip)) {
      throw ConfigError("privacy.clip must be finite and positive");
    }
  }
  if (c.data.source == DataSource::kSynthetic) {
    const bool regression = c.data.synthetic.kind == SyntheticKind::kRegression;
    if (regression != (c.model.kind == ModelKind::kLinearRegression)) {
      throw ConfigError("synthetic regression data pairs with linear-regression and blobs with classifiers");
    }
    if (c.data.synthetic.input_dim != c.model.input_dim) {
      throw ConfigError("data.synthetic.input_dim differs from model.input_dim");
    }
    if (!regression && c.data.synthetic.classes > c.model.output_dim) {
      throw ConfigError("data.synthetic.classes exceeds model.output_dim");
    }
  }
}

}  // namespace flc
