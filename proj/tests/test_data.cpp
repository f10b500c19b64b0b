#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "dkm/data.hpp"
#include "dkm/errors.hpp"
#include "dkm/evalkit.hpp"

using namespace dkm;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("dkm_test_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

fs::path write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return p;
}

std::vector<std::size_t> fg_rows(const Dataset& d) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.fg_flags[i]) rows.push_back(i);
  return rows;
}

std::multiset<std::vector<double>> row_multiset(const Matrix& m) {
  std::multiset<std::vector<double>> s;
  for (std::size_t r = 0; r < m.rows(); ++r) s.emplace(m.row(r).begin(), m.row(r).end());
  return s;
}

}  // namespace

TEST_CASE("gen_blobs layout") {
  BlobParams p;
  p.dim = 5;
  p.n_fg_classes = 2;
  p.per_class = 4;
  p.n_bg = 3;
  p.seed = 9;
  const auto b = gen_blobs(p);
  REQUIRE(b.data.size() == 11);
  CHECK(b.data.dim() == 5);
  CHECK(b.centers.rows() == 2);
  CHECK(b.data.hidden_class == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, -1, -1, -1});
  CHECK(b.data.fg_flags == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0});
  CHECK(b.data.foreground_count() == 8);
  for (std::size_t c = 0; c < 2; ++c) {
    double norm = 0.0;
    for (double v : b.centers.row(c)) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(10.0).epsilon(1e-12));
  }
  // Directions are orthogonal.
  double dot = 0.0;
  for (std::size_t d = 0; d < 5; ++d) dot += b.centers(0, d) * b.centers(1, d);
  CHECK(std::abs(dot) < 1e-9);
}

TEST_CASE("gen_blobs edge cases and errors") {
  BlobParams p;
  p.per_class = 0;
  p.n_bg = 7;
  const auto b = gen_blobs(p);
  CHECK(b.data.size() == 7);
  CHECK(b.data.foreground_count() == 0);

  CHECK(gen_blobs(p).data.features == b.data.features);
  auto q = p;
  q.seed = 1;
  CHECK_FALSE(gen_blobs(q).data.features == b.data.features);

  auto bad = p;
  bad.separation = 0;
  CHECK_THROWS_AS(gen_blobs(bad), precondition_error);
  bad = p;
  bad.noise_sigma = -1;
  CHECK_THROWS_AS(gen_blobs(bad), precondition_error);
  bad = p;
  bad.n_bg = 0;
  CHECK_THROWS_AS(gen_blobs(bad), precondition_error);
  bad = p;
  bad.dim = 0;
  CHECK_THROWS_AS(gen_blobs(bad), precondition_error);
}

TEST_CASE("gen_blobs statistics") {
  BlobParams p;
  p.per_class = 2000;
  p.n_bg = 2000;
  p.seed = 3;
  const auto b = gen_blobs(p);
  // Foreground noise around the true centers and the background spread.
  double fg_sq = 0.0, bg_sq = 0.0;
  std::size_t fg_n = 0, bg_n = 0;
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    const int c = b.data.hidden_class[i];
    for (std::size_t d = 0; d < p.dim; ++d) {
      if (c >= 0) {
        const double e = b.data.features(i, d) - b.centers(c, d);
        fg_sq += e * e;
        ++fg_n;
      } else {
        bg_sq += b.data.features(i, d) * b.data.features(i, d);
        ++bg_n;
      }
    }
  }
  CHECK(std::sqrt(fg_sq / fg_n) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::sqrt(bg_sq / bg_n) == doctest::Approx(20.0).epsilon(0.02));
}

TEST_CASE("gen_blobs foreground is separable by the true centers") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    BlobParams p;
    p.seed = seed;
    const auto b = gen_blobs(p);
    const auto fg = b.data.foreground();
    const auto a = assign(fg.features, ClusterHead(b.centers));
    for (std::size_t i = 0; i < fg.size(); ++i) CHECK(static_cast<int>(a.cluster_of[i]) == fg.hidden_class[i]);
  }
}

TEST_CASE("Lloyd on raw two-blob foreground reaches purity 1") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    BlobParams p;
    p.n_fg_classes = 2;
    p.seed = seed;
    const auto fg = gen_blobs(p).data.foreground();
    const auto r = lloyd_kmeans(fg.features, 2, seed);
    CHECK(confusion(r.assignment, fg.hidden_class).purity == 1.0);
  }
}

TEST_CASE("read_cifar10_binary") {
  TempDir tmp;
  SUBCASE("one zero record") {
    const auto f = write_bytes(tmp.path() / "zero.bin", std::vector<unsigned char>(3073, 0));
    const auto raw = read_cifar10_binary(std::vector{f});
    CHECK(raw.labels == std::vector<int>{0});
    CHECK(raw.pixels.rows() == 1);
    CHECK(raw.pixels.cols() == 3072);
    CHECK(std::all_of(raw.pixels.values().begin(), raw.pixels.values().end(), [](double v) { return v == 0.0; }));
  }
  SUBCASE("two records and several files") {
    std::vector<unsigned char> bytes(6146, 0);
    bytes[0] = 3;
    bytes[3073] = 7;
    bytes[1] = 255;  // first red pixel of the first image
    const auto f = write_bytes(tmp.path() / "two.bin", bytes);
    const auto g = write_bytes(tmp.path() / "one.bin", std::vector<unsigned char>(3073, 9));
    const auto raw = read_cifar10_binary(std::vector{f, g});
    CHECK(raw.labels == std::vector<int>{3, 7, 9});
    CHECK(raw.pixels(0, 0) == 1.0);
    CHECK(raw.pixels(1, 0) == 0.0);
    CHECK(raw.pixels(2, 3071) == 9.0 / 255.0);
  }
  SUBCASE("lossless up to scaling") {
    std::mt19937_64 rng(1);
    std::vector<unsigned char> bytes(3 * 3073);
    for (auto& b : bytes) b = static_cast<unsigned char>(rng() & 0xff);
    for (std::size_t r = 0; r < 3; ++r) bytes[r * 3073] = static_cast<unsigned char>(r + 2);
    const auto f = write_bytes(tmp.path() / "rand.bin", bytes);
    const auto raw = read_cifar10_binary(std::vector{f});
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(raw.labels[r] == static_cast<int>(r + 2));
      for (std::size_t i = 0; i < 3072; ++i) {
        const double v = raw.pixels(r, i);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        REQUIRE(std::lround(v * 255.0) == bytes[r * 3073 + 1 + i]);
      }
    }
  }
  SUBCASE("size not a multiple of the record") {
    const auto f = write_bytes(tmp.path() / "short.bin", std::vector<unsigned char>(3073 + 100, 0));
    try {
      read_cifar10_binary(std::vector{f});
      FAIL("expected format_error");
    } catch (const format_error& e) {
      CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
    }
  }
  SUBCASE("label above 9") {
    std::vector<unsigned char> bytes(6146, 0);
    bytes[3073] = 10;
    const auto f = write_bytes(tmp.path() / "label.bin", bytes);
    try {
      read_cifar10_binary(std::vector{f});
      FAIL("expected format_error");
    } catch (const format_error& e) {
      CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_cifar10_binary(std::vector{tmp.path() / "nope.bin"}), format_error);
  }
}

TEST_CASE("relabel_foreground") {
  RawImages raw{Matrix(8, 2), {0, 1, 5, 5, 9, 1, 3, 5}};
  const auto d = relabel_foreground(raw, {1, 5});
  CHECK(d.foreground_count() == 5);
  CHECK(d.hidden_class == raw.labels);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK((d.fg_flags[i] == 1) == (raw.labels[i] == 1 || raw.labels[i] == 5));

  const auto all = relabel_foreground(raw, {0, 1, 3, 5, 9});
  CHECK(all.foreground_count() == all.size());

  CHECK_THROWS_AS(relabel_foreground(raw, {}), precondition_error);

  // Shuffling does not change the flag histogram.
  std::vector<std::size_t> perm{7, 3, 0, 6, 1, 5, 2, 4};
  CHECK(d.subset(perm).foreground_count() == d.foreground_count());
}

TEST_CASE("downsample_background") {
  BlobParams p;
  p.per_class = 10;
  p.n_bg = 200;
  const auto d = gen_blobs(p).data;
  const auto half = downsample_background(d, 0.5, 4);
  CHECK(half.foreground_count() == d.foreground_count());
  CHECK(half.size() - half.foreground_count() == 100);
  CHECK(downsample_background(d, 0.5, 4).features == half.features);
  CHECK(downsample_background(d, 1.0, 4).size() == d.size());
  CHECK_THROWS_AS(downsample_background(d, 0.0, 4), precondition_error);
  CHECK_THROWS_AS(downsample_background(d, 1.5, 4), precondition_error);
}

TEST_CASE("split") {
  BlobParams p;
  p.n_fg_classes = 1;
  p.per_class = 4;
  p.n_bg = 6;
  const auto d = gen_blobs(p).data;
  REQUIRE(d.size() == 10);
  const auto [a, b] = split(d, 0.5, 1);
  CHECK(a.size() == 5);
  CHECK(b.size() == 5);

  auto rows_a = row_multiset(a.features);
  const auto rows_b = row_multiset(b.features);
  for (const auto& r : rows_b) CHECK(rows_a.count(r) == 0);
  rows_a.insert(rows_b.begin(), rows_b.end());
  CHECK(rows_a == row_multiset(d.features));
  CHECK(a.foreground_count() + b.foreground_count() == 4);

  const auto [a2, b2] = split(d, 0.5, 1);
  CHECK(a2.features == a.features);
  CHECK(a2.hidden_class == a.hidden_class);
  CHECK(split(d, 0.7, 1).first.size() == 7);

  CHECK_THROWS_AS(split(d, 0.0, 1), precondition_error);
  CHECK_THROWS_AS(split(d, 1.0, 1), precondition_error);
}

TEST_CASE("Standardizer") {
  const Matrix x{{1, 5, 2}, {3, 5, 4}, {5, 5, 9}};
  const auto s = Standardizer::fit(x);
  CHECK(s.mean == Matrix{{3, 5, 5}});
  const Matrix z = s.apply(x);
  for (std::size_t d = 0; d < 3; ++d) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < 3; ++r) mean += z(r, d) / 3.0;
    for (std::size_t r = 0; r < 3; ++r) var += (z(r, d) - mean) * (z(r, d) - mean) / 3.0;
    CHECK(std::abs(mean) < 1e-12);
    // The constant column is centred but not scaled.
    CHECK(var == doctest::Approx(d == 1 ? 0.0 : 1.0).epsilon(1e-12));
  }
  CHECK(Standardizer::identity(3).apply(x) == x);
  CHECK_THROWS_AS(s.apply(Matrix(1, 2)), dimension_error);
  CHECK_THROWS_AS(Standardizer::fit(Matrix(0, 3)), precondition_error);
}

TEST_CASE("SampleBatch strips hidden classes") {
  const auto d = gen_blobs({}).data;
  const SampleBatch b = d.batch();
  CHECK(b.features == d.features);
  CHECK(b.fg_flags == d.fg_flags);
  CHECK(b.foreground_count() == d.foreground_count());
  CHECK(fg_rows(d).size() == d.foreground().size());
}

TEST_CASE("Dataset validation") {
  Dataset d{Matrix(2, 1), {1}, {0, 0}};
  CHECK_THROWS_AS(d.validate(), dimension_error);
}

TEST_CASE("write_dataset_csv") {
  Dataset d{Matrix{{0.5, -1}, {2, 3}}, {1, 0}, {2, -1}};
  std::ostringstream out;
  write_dataset_csv(out, d);
  CHECK(out.str() == "hidden_class,fg_flag,f_0,f_1\n2,1,0.5,-1\n-1,0,2,3\n");
}
