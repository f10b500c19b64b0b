#include "dkm/run_config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "dkm/errors.hpp"

namespace dkm {

namespace {

constexpr std::array<const char*, 10> kCifarNames = {"airplane", "automobile", "bird", "cat", "deer",
                                                     "dog",      "frog",       "horse", "ship", "truck"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw config_error(key + ": expected a number, got '" + value + "'");
  }
  return v;
}

std::uint64_t to_count(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw config_error(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error(key + ": expected true or false, got '" + value + "'");
}

}  // namespace

std::optional<int> parse_cifar_class(const std::string& token) {
  for (std::size_t i = 0; i < kCifarNames.size(); ++i) {
    if (token == kCifarNames[i]) return static_cast<int>(i);
  }
  int v = -1;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec == std::errc() && res.ptr == token.data() + token.size() && v >= 0 && v <= 9) return v;
  return std::nullopt;
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key)) throw config_error(key + ": specified twice");
    kv[key] = value;
  }

  RunConfig cfg;
  TrainConfig& t = cfg.train;
  bool synthetic_seed_set = false;
  BlobParams blobs;
  CifarSource cifar;
  bool any_synthetic = false;
  bool any_cifar = false;

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  for (const auto& [key, value] : kv) {
    if (key == "run_id") {
      if (value.empty() || value.find('/') != std::string::npos) throw config_error("run_id: must be a plain name");
      cfg.run_id = value;
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "seed") {
      t.seed = to_count(key, value);
    } else if (key == "K") {
      t.k = to_count(key, value);
    } else if (key == "alpha_r") {
      t.alpha_r = to_real(key, value);
    } else if (key == "alpha_c") {
      t.alpha_c = to_real(key, value);
    } else if (key == "learning_rate") {
      t.learning_rate = to_real(key, value);
    } else if (key == "rms_decay") {
      t.rms_decay = to_real(key, value);
    } else if (key == "momentum") {
      t.momentum = to_real(key, value);
    } else if (key == "epsilon") {
      t.epsilon = to_real(key, value);
    } else if (key == "batch_size") {
      t.batch_size = to_count(key, value);
    } else if (key == "epochs") {
      t.epochs = to_count(key, value);
    } else if (key == "hidden_dims") {
      t.hidden_dims.clear();
      for (const auto& item : split_list(value)) t.hidden_dims.push_back(to_count(key, item));
    } else if (key == "cluster_init") {
      auto scheme = parse_cluster_init(value);
      if (!scheme) throw config_error("cluster_init: unknown scheme '" + value + "'");
      t.cluster_init = *scheme;
    } else if (key == "init_stddev") {
      t.init_stddev = to_real(key, value);
    } else if (key == "weight_decay") {
      t.weight_decay = to_real(key, value);
    } else if (key == "cluster_warmup") {
      t.cluster_warmup = to_count(key, value);
    } else if (key == "freeze_net") {
      t.freeze_net = to_bool(key, value);
    } else if (key == "train_fraction") {
      cfg.train_fraction = to_real(key, value);
    } else if (key.starts_with("synthetic.")) {
      any_synthetic = true;
      const std::string field = key.substr(10);
      if (field == "dim") {
        blobs.dim = to_count(key, value);
      } else if (field == "fg_classes") {
        blobs.n_fg_classes = to_count(key, value);
      } else if (field == "per_class") {
        blobs.per_class = to_count(key, value);
      } else if (field == "n_bg") {
        blobs.n_bg = to_count(key, value);
      } else if (field == "separation") {
        blobs.separation = to_real(key, value);
      } else if (field == "noise_sigma") {
        blobs.noise_sigma = to_real(key, value);
      } else if (field == "seed") {
        blobs.seed = to_count(key, value);
        synthetic_seed_set = true;
      } else {
        throw config_error(key + ": unknown key");
      }
    } else if (key.starts_with("cifar.")) {
      any_cifar = true;
      const std::string field = key.substr(6);
      if (field == "train") {
        for (const auto& item : split_list(value)) cifar.train_files.push_back(resolve(item));
      } else if (field == "test") {
        for (const auto& item : split_list(value)) cifar.test_files.push_back(resolve(item));
      } else if (field == "fg_classes") {
        for (const auto& item : split_list(value)) {
          auto id = parse_cifar_class(item);
          if (!id) throw config_error(key + ": unknown CIFAR-10 class '" + item + "'");
          cifar.fg_classes.insert(*id);
        }
      } else if (field == "bg_keep") {
        cifar.bg_keep = to_real(key, value);
      } else {
        throw config_error(key + ": unknown key");
      }
    } else {
      throw config_error(key + ": unknown key");
    }
  }

  if (any_synthetic == any_cifar) {
    throw config_error("dataset: exactly one of the synthetic.* and cifar.* groups must be given");
  }
  if (any_synthetic) {
    if (!synthetic_seed_set) blobs.seed = t.seed;
    cfg.synthetic_seed_explicit = synthetic_seed_set;
    if (!(blobs.separation > 0.0)) throw config_error("synthetic.separation: must be > 0");
    if (!(blobs.noise_sigma > 0.0)) throw config_error("synthetic.noise_sigma: must be > 0");
    if (blobs.dim == 0) throw config_error("synthetic.dim: must be > 0");
    if (blobs.n_fg_classes * blobs.per_class + blobs.n_bg == 0) {
      throw config_error("synthetic: dataset would be empty");
    }
    cfg.synthetic = blobs;
  } else {
    if (cifar.train_files.empty()) throw config_error("cifar.train: at least one file required");
    if (cifar.fg_classes.empty()) throw config_error("cifar.fg_classes: at least one class required");
    if (!(cifar.bg_keep > 0.0 && cifar.bg_keep <= 1.0)) throw config_error("cifar.bg_keep: must lie in (0, 1]");
    cfg.cifar = cifar;
  }
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw config_error("train_fraction: must lie in (0, 1)");
  }
  t.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot read " + path.string());
  return parse_run_config(in, path.parent_path());
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
  if (cfg.synthetic && !cfg.synthetic_seed_explicit) cfg.synthetic->seed = seed;
  cfg.train.seed = seed;
}

PreparedData prepare_data(const RunConfig& cfg) {
  const std::uint64_t split_seed = cfg.train.seed ^ 0x73706c74;
  if (cfg.synthetic) {
    Dataset all = gen_blobs(*cfg.synthetic).data;
    auto [train, test] = split(all, cfg.train_fraction, split_seed);
    return {std::move(train), std::move(test)};
  }
  const CifarSource& src = *cfg.cifar;
  Dataset train = relabel_foreground(read_cifar10_binary(src.train_files), src.fg_classes);
  Dataset test;
  if (src.test_files.empty()) {
    auto parts = split(train, cfg.train_fraction, split_seed);
    train = std::move(parts.first);
    test = std::move(parts.second);
  } else {
    test = relabel_foreground(read_cifar10_binary(src.test_files), src.fg_classes);
  }
  train = downsample_background(train, src.bg_keep, cfg.train.seed ^ 0x626b6570);
  return {std::move(train), std::move(test)};
}

}  // namespace dkm
