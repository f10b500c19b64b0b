#include "dkm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "dkm/errors.hpp"
#include "dkm/format.hpp"

namespace dkm {

namespace {

std::size_t count_ones(const std::vector<std::uint8_t>& flags) {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::size_t SampleBatch::foreground_count() const noexcept { return count_ones(fg_flags); }

std::size_t Dataset::foreground_count() const noexcept { return count_ones(fg_flags); }

SampleBatch Dataset::batch() const { return SampleBatch{features, fg_flags}; }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = gather_rows(features, indices);
  out.fg_flags.reserve(indices.size());
  out.hidden_class.reserve(indices.size());
  for (std::size_t i : indices) {
    out.fg_flags.push_back(fg_flags[i]);
    out.hidden_class.push_back(hidden_class[i]);
  }
  return out;
}

Dataset Dataset::foreground() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < size(); ++i) {
    if (fg_flags[i] == 1) idx.push_back(i);
  }
  return subset(idx);
}

void Dataset::validate() const {
  if (fg_flags.size() != features.rows() || hidden_class.size() != features.rows()) {
    throw dimension_error("dataset: " + std::to_string(features.rows()) + " feature rows, " +
                          std::to_string(fg_flags.size()) + " flags, " +
                          std::to_string(hidden_class.size()) + " classes");
  }
}

BlobDataset gen_blobs(const BlobParams& p) {
  if (!(p.separation > 0.0)) throw precondition_error("gen_blobs: separation must be positive");
  if (!(p.noise_sigma > 0.0)) throw precondition_error("gen_blobs: noise_sigma must be positive");
  if (p.dim == 0) throw precondition_error("gen_blobs: dim must be positive");
  if (p.n_fg_classes == 0 && p.per_class > 0) {
    throw precondition_error("gen_blobs: per_class > 0 needs at least one foreground class");
  }
  if (p.n_fg_classes * p.per_class + p.n_bg == 0) {
    throw precondition_error("gen_blobs: dataset would be empty");
  }

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  // Random directions, Gram-Schmidt orthogonalised while they fit in dim.
  Matrix dirs(p.n_fg_classes, p.dim);
  for (std::size_t c = 0; c < p.n_fg_classes; ++c) {
    auto u = dirs.row(c);
    double norm = 0.0;
    do {
      for (double& v : u) v = unit(rng);
      if (c < p.dim) {
        for (std::size_t prev = 0; prev < c; ++prev) {
          auto q = dirs.row(prev);
          double dot = 0.0;
          for (std::size_t d = 0; d < p.dim; ++d) dot += u[d] * q[d];
          for (std::size_t d = 0; d < p.dim; ++d) u[d] -= dot * q[d];
        }
      }
      norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    } while (norm < 1e-8);
    for (double& v : u) v /= norm;
  }

  BlobDataset out;
  out.centers = dirs;
  for (double& v : out.centers.values()) v *= p.separation;

  const std::size_t n_fg = p.n_fg_classes * p.per_class;
  const std::size_t total = n_fg + p.n_bg;
  Dataset& data = out.data;
  data.features = Matrix(total, p.dim);
  data.fg_flags.assign(total, 0);
  data.hidden_class.assign(total, kBackgroundClass);

  std::normal_distribution<double> noise(0.0, p.noise_sigma);
  std::size_t n = 0;
  for (std::size_t c = 0; c < p.n_fg_classes; ++c) {
    auto center = out.centers.row(c);
    for (std::size_t i = 0; i < p.per_class; ++i, ++n) {
      auto r = data.features.row(n);
      for (std::size_t d = 0; d < p.dim; ++d) r[d] = center[d] + noise(rng);
      data.fg_flags[n] = 1;
      data.hidden_class[n] = static_cast<int>(c);
    }
  }
  std::normal_distribution<double> broad(0.0, 2.0 * p.separation);
  for (; n < total; ++n) {
    for (double& v : data.features.row(n)) v = broad(rng);
  }
  return out;
}

RawImages read_cifar10_binary(std::span<const std::filesystem::path> paths) {
  std::vector<std::vector<char>> blobs;
  std::size_t total_records = 0;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cifar10: cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % kCifarRecordBytes != 0) {
      const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
      throw format_error("cifar10: " + path.string() + " has " + std::to_string(bytes.size()) +
                         " bytes, not a multiple of " + std::to_string(kCifarRecordBytes) +
                         "; truncated record at byte offset " + std::to_string(offset));
    }
    total_records += bytes.size() / kCifarRecordBytes;
    blobs.push_back(std::move(bytes));
  }

  RawImages out{Matrix(total_records, kCifarImageBytes), {}};
  out.labels.reserve(total_records);
  std::size_t n = 0;
  for (std::size_t f = 0; f < blobs.size(); ++f) {
    const auto& bytes = blobs[f];
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes, ++n) {
      const auto label = static_cast<unsigned char>(bytes[off]);
      if (label > 9) {
        throw format_error("cifar10: " + paths[f].string() + " has label " + std::to_string(label) +
                           " at byte offset " + std::to_string(off));
      }
      out.labels.push_back(label);
      auto r = out.pixels.row(n);
      for (std::size_t i = 0; i < kCifarImageBytes; ++i) {
        r[i] = static_cast<unsigned char>(bytes[off + 1 + i]) / 255.0;
      }
    }
  }
  return out;
}

Dataset relabel_foreground(const RawImages& raw, const std::set<int>& fg_classes) {
  if (fg_classes.empty()) throw precondition_error("relabel_foreground: empty foreground class set");
  if (raw.labels.size() != raw.pixels.rows()) {
    throw dimension_error("relabel_foreground: label count does not match image count");
  }
  Dataset out;
  out.features = raw.pixels;
  out.hidden_class = raw.labels;
  out.fg_flags.reserve(raw.labels.size());
  for (int label : raw.labels) out.fg_flags.push_back(fg_classes.contains(label) ? 1 : 0);
  return out;
}

Dataset downsample_background(const Dataset& data, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw precondition_error("downsample_background: keep fraction must lie in (0, 1]");
  }
  if (keep_fraction == 1.0) return data;
  std::vector<std::size_t> bg;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.fg_flags[i] == 0) bg.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(bg.begin(), bg.end(), rng);
  bg.resize(static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(bg.size()))));
  std::vector<bool> keep(data.size(), false);
  for (std::size_t i : bg) keep[i] = true;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.fg_flags[i] == 1 || keep[i]) idx.push_back(i);
  return data.subset(idx);
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw precondition_error("split: fraction must lie in (0, 1)");
  data.validate();
  const auto order = shuffled_indices(data.size(), seed);
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  std::span<const std::size_t> all(order);
  return {data.subset(all.first(cut)), data.subset(all.subspan(cut))};
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() == 0) throw precondition_error("Standardizer::fit: no rows");
  const std::size_t d_count = x.cols();
  Standardizer s{Matrix(1, d_count), Matrix(1, d_count, 1.0)};
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t d = 0; d < d_count; ++d) s.mean(0, d) += x(n, d);
  }
  for (std::size_t d = 0; d < d_count; ++d) s.mean(0, d) *= inv_n;
  Matrix var(1, d_count);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t d = 0; d < d_count; ++d) {
      const double c = x(n, d) - s.mean(0, d);
      var(0, d) += c * c;
    }
  }
  for (std::size_t d = 0; d < d_count; ++d) {
    const double sd = std::sqrt(var(0, d) * inv_n);
    s.inv_std(0, d) = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) { return {Matrix(1, dim), Matrix(1, dim, 1.0)}; }

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.cols()) {
    throw dimension_error("Standardizer::apply: input " + x.shape_string() + " vs fitted dimension " +
                          std::to_string(mean.cols()));
  }
  Matrix out = x;
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto r = out.row(n);
    for (std::size_t d = 0; d < r.size(); ++d) r[d] = (r[d] - mean(0, d)) * inv_std(0, d);
  }
  return out;
}

Dataset Standardizer::apply(const Dataset& data) const {
  Dataset out = data;
  out.features = apply(data.features);
  return out;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  data.validate();
  out << "hidden_class,fg_flag";
  for (std::size_t d = 0; d < data.dim(); ++d) out << ",f_" << d;
  out << '\n';
  for (std::size_t n = 0; n < data.size(); ++n) {
    out << data.hidden_class[n] << ',' << static_cast<int>(data.fg_flags[n]);
    for (double v : data.features.row(n)) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace dkm
