#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dkm/data.hpp"
#include "dkm/trainer.hpp"

namespace dkm {

struct CifarSource {
  std::vector<std::filesystem::path> train_files;
  std::vector<std::filesystem::path> test_files;  // empty: split the training files
  std::set<int> fg_classes;
  double bg_keep = 1.0;
};

/// Everything a run needs, read from one key=value file. Exactly one of
/// `synthetic` and `cifar` is set.
struct RunConfig {
  TrainConfig train;
  std::optional<BlobParams> synthetic;
  std::optional<CifarSource> cifar;
  bool synthetic_seed_explicit = false;  // false: synthetic.seed follows seed
  double train_fraction = 0.7;
  std::filesystem::path out_dir = "runs";
  std::string run_id = "run";

  std::filesystem::path run_dir() const { return out_dir / run_id; }
};

/// Parses "key = value" lines; '#' starts a comment. Relative CIFAR paths are
/// resolved against base_dir. Throws config_error naming the field.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Applies a --seed override to every seed derived from the run seed.
void override_seed(RunConfig& cfg, std::uint64_t seed);

// CIFAR-10 class id for "airplane".."truck" or a decimal id.
std::optional<int> parse_cifar_class(const std::string& token);

struct PreparedData {
  Dataset train;  // raw feature space
  Dataset test;
};

/// Generates or reads the configured dataset and splits it into train/test.
PreparedData prepare_data(const RunConfig& cfg);

}  // namespace dkm
