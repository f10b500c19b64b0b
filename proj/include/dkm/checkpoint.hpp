#pragma once

#include <filesystem>
#include <iosfwd>

#include "dkm/cluster_head.hpp"
#include "dkm/data.hpp"
#include "dkm/trainer.hpp"

namespace dkm {

/// Everything needed to embed and cluster new raw samples.
struct ModelBundle {
  Standardizer standardizer;
  EmbeddingNet net;
  ClusterHead head;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'K', 'M', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers and floats little-endian:
///   8 bytes  magic "DKMCKPT\0"
///   u32      format version
///   u32      affine layer count (hidden layers + classifier)
///   then one record per parameter until end of file:
///   u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 row-major
/// Records: input.mean, input.inv_std, hidden.<i>.weight, hidden.<i>.bias,
/// classifier.weight, classifier.bias, clusters.weight.
void write_checkpoint(std::ostream& out, const ModelBundle& model);
ModelBundle read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace dkm
