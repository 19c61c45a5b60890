#pragma once

// Checkpoint layout (all integers little-endian):
//
//   "AMQM"                       magic
//   u32 version                  currently 1
//   u32 in_channels, in_height, in_width
//   u32 n_classes
//   u32 layer_count
//   layer_count descriptors:     u8 kind, then
//       conv    u32 out_channels, u32 kernel, u32 stride, u32 pad
//       dropout f64 rate
//       dense   u32 out_features
//       (maxpool, relu, flatten, softmax carry no fields)
//   per parametric layer, in declaration order:
//       weights then bias as f32 values
//   u64 FNV-1a checksum of every preceding byte

#include <filesystem>
#include <string>

#include "amq/model.hpp"

namespace amq::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Parameters params;
};

std::string encode_checkpoint(const ModelConfig& config, const Parameters& params);
// Throws FormatError naming the byte offset of the first problem.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace amq::nn
