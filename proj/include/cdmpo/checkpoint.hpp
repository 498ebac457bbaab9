#pragma once

// Versioned binary checkpoints.
//
// Layout (all integers and floats little-endian):
//   "CDMPOCKP"                8-byte magic
//   u32 version               currently 1
//   u32 section_count
//   per section:
//     u32 name_length, name bytes
//     u32 kind                0 = network, 1 = text blob
//     network: u32 layer_count, then the shape table
//              (u64 in, u64 out, u32 activation) per layer,
//              then per layer out*in weights and out biases as f64
//     blob:    u64 byte_length, bytes

#include <filesystem>
#include <map>
#include <string>

#include "cdmpo/approximator.hpp"

namespace cdmpo {

inline constexpr char kCheckpointMagic[8] = {'C', 'D', 'M', 'P', 'O', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, MlpParams> networks;
  std::map<std::string, std::string> blobs;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws IoError on a bad magic, an unsupported version, or truncation.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cdmpo
