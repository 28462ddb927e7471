#pragma once

// Binary checkpoint, all integers little-endian:
//
//   "GSAN"  u32 version  u32 spec_length  spec_text[spec_length]
//   u32 tensor_count
//   per tensor:
//     u16 name_length  name  u8 dtype (0 = f32, 1 = i8)  u8 rank  u32 dims[rank]
//     u64 payload_bytes  payload  u32 crc32(payload)
//
// spec_text is the network config emitted by emit_network_config, so a
// checkpoint is self-describing.

#include <cstdint>
#include <string>
#include <string_view>

#include "gsan/layers.hpp"
#include "gsan/network.hpp"

namespace gsan {

inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  NetworkSpec spec;
  TensorTable tensors;
};

std::string encode_checkpoint(const NetworkSpec& spec, const TensorTable& tensors);
// `origin` names the source in error messages. Throws FormatError.
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

// Writes through a temporary file and renames it into place.
void save_checkpoint(const GhostSANet& model, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
// Rebuilds the model described by the checkpoint and loads its state.
GhostSANet load_checkpoint(const std::string& path);

}  // namespace gsan
