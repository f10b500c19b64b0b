#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "dkm/matrix.hpp"

namespace dkm {

// hidden_class value for generated background samples.
inline constexpr int kBackgroundClass = -1;

/// What the trainer sees: features and foreground flags, nothing else.
struct SampleBatch {
  Matrix features;                    // N x D
  std::vector<std::uint8_t> fg_flags; // N entries, 1 = foreground

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t foreground_count() const noexcept;
};

/// Labelled dataset. hidden_class is the true category and is only consumed
/// by evaluation; batch() strips it.
struct Dataset {
  Matrix features;
  std::vector<std::uint8_t> fg_flags;
  std::vector<int> hidden_class;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::size_t foreground_count() const noexcept;

  SampleBatch batch() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  // Foreground rows only.
  Dataset foreground() const;
  void validate() const;
};

struct BlobParams {
  std::size_t dim = 16;
  std::size_t n_fg_classes = 3;
  std::size_t n_bg = 300;
  std::size_t per_class = 100;
  double separation = 10.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
};

struct BlobDataset {
  Dataset data;
  Matrix centers;  // n_fg_classes x dim, true foreground means
};

/// Foreground class c is drawn from N(separation * u_c, noise_sigma^2 I) with
/// seeded random unit directions u_c (mutually orthogonal when
/// n_fg_classes <= dim); background from N(0, (2 separation)^2 I).
/// Foreground samples come first, class by class, then background.
BlobDataset gen_blobs(const BlobParams& params);

inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarImageBytes + 1;

struct RawImages {
  Matrix pixels;              // N x 3072, R plane then G then B, scaled to [0, 1]
  std::vector<int> labels;    // 0..9
};

/// Reads CIFAR-10 binary batch files (records of one label byte followed by
/// 1024 R, 1024 G and 1024 B bytes) and concatenates them in order.
RawImages read_cifar10_binary(std::span<const std::filesystem::path> paths);

/// fg_flag = 1 iff the label is in fg_classes; hidden_class keeps the label.
Dataset relabel_foreground(const RawImages& raw, const std::set<int>& fg_classes);

/// Keeps every foreground sample and a seeded random round(keep_fraction * n_bg)
/// background samples, preserving the original order.
Dataset downsample_background(const Dataset& data, double keep_fraction, std::uint64_t seed);

/// Seeded shuffle followed by a prefix split: the first round(fraction * N)
/// shuffled samples form the first part.
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed);

/// Per-dimension standardisation fitted on a training set. Dimensions with
/// zero variance are centred but left unscaled.
struct Standardizer {
  Matrix mean;     // 1 x D
  Matrix inv_std;  // 1 x D

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(std::size_t dim);
  Matrix apply(const Matrix& x) const;
  Dataset apply(const Dataset& data) const;
};

// CSV with header hidden_class,fg_flag,f_0..f_{D-1}.
void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace dkm
