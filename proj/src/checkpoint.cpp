#include "dkm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "dkm/errors.hpp"

namespace dkm {

namespace {

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
    throw format_error(std::string("checkpoint: truncated while reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

void put_param(std::ostream& out, const std::string& name, const Matrix& m) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.cols());
  for (double v : m.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelBundle& model) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const auto& hidden = model.net.hidden_layers();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(hidden.size() + 1));
  put_param(out, "input.mean", model.standardizer.mean);
  put_param(out, "input.inv_std", model.standardizer.inv_std);
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    put_param(out, "hidden." + std::to_string(i) + ".weight", hidden[i].weight);
    put_param(out, "hidden." + std::to_string(i) + ".bias", hidden[i].bias);
  }
  put_param(out, "classifier.weight", model.net.classifier().weight);
  put_param(out, "classifier.bias", model.net.classifier().bias);
  put_param(out, "clusters.weight", model.head.weights);
  if (!out) throw format_error("checkpoint: write failed");
}

ModelBundle read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw format_error("checkpoint: bad magic");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw format_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto layer_count = get_le<std::uint32_t>(in, "layer count");
  if (layer_count < 2) throw format_error("checkpoint: needs at least one hidden layer and a classifier");

  std::map<std::string, Matrix> params;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    if (name_len > 4096) throw format_error("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw format_error("checkpoint: truncated name");
    const auto rows = get_le<std::uint64_t>(in, "rows");
    const auto cols = get_le<std::uint64_t>(in, "cols");
    if (rows > (1ull << 32) || cols > (1ull << 32)) throw format_error("checkpoint: implausible shape for " + name);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, name.c_str()));
    if (!params.emplace(name, Matrix::from_data(rows, cols, std::move(data))).second) {
      throw format_error("checkpoint: duplicate parameter " + name);
    }
  }
  const std::size_t expected = 2 + 2 * static_cast<std::size_t>(layer_count) + 1;
  if (params.size() != expected) {
    throw format_error("checkpoint: " + std::to_string(params.size()) + " records, expected " +
                       std::to_string(expected) + " for " + std::to_string(layer_count) + " layers");
  }

  auto take = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw format_error("checkpoint: missing parameter " + name);
    return it->second;
  };
  auto layer = [&](const std::string& prefix) {
    AffineLayer l;
    l.weight = take(prefix + ".weight");
    l.bias = take(prefix + ".bias");
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw format_error("checkpoint: bias shape does not match " + prefix + ".weight");
    }
    l.grad_weight = Matrix(l.weight.rows(), l.weight.cols());
    l.grad_bias = Matrix(1, l.bias.cols());
    return l;
  };

  ModelBundle model;
  model.standardizer = {take("input.mean"), take("input.inv_std")};
  std::vector<AffineLayer> hidden;
  for (std::uint32_t i = 0; i + 1 < layer_count; ++i) hidden.push_back(layer("hidden." + std::to_string(i)));
  try {
    model.net = EmbeddingNet(std::move(hidden), layer("classifier"));
  } catch (const std::invalid_argument& e) {
    throw format_error(std::string("checkpoint: inconsistent network: ") + e.what());
  }
  model.head = ClusterHead(take("clusters.weight"));
  if (model.head.dim() != model.net.embed_dim() ||
      model.standardizer.mean.cols() != model.net.input_dim() ||
      !model.standardizer.mean.same_shape(model.standardizer.inv_std)) {
    throw format_error("checkpoint: parameter shapes are inconsistent");
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw format_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace dkm
