#pragma once

// Binary checkpoint of a PeerEnsemble. All integers and doubles little-endian:
//
//   magic    8 bytes  "SSKDCKPT"
//   version  u32      1
//   count    u32      number of tensors
//   rho      f64
//   iter     i64      ensemble iteration counter
//   count x { name_len u32, name bytes (UTF-8), rows u32, cols u32 }
//   count x row-major f64 blocks, in shape-table order
//
// Tensor names are "student{k}.<tensor>" then "teacher{k}.<tensor>" for
// k = 0, 1, 2, with <tensor> from kTensorNames.

#include "sskd/model.hpp"

#include <string>

namespace sskd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const PeerEnsemble &ens);
PeerEnsemble deserialize_checkpoint(const std::string &bytes);

void write_checkpoint(const std::string &path, const PeerEnsemble &ens);
PeerEnsemble read_checkpoint(const std::string &path);

} // namespace sskd
