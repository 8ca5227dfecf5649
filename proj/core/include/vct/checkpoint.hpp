// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vct/vit.hpp"

namespace vct {

// Model checkpoint, single file, little-endian:
//   bytes 0..7   magic "VCTCKPT1"
//   8 x int32    image_size, patch_size, channels, embed_dim,
//                num_layers, num_heads, mlp_ratio, num_classes
//   float32[]    parameters in registry order (all_params)
//   uint32       CRC-32 of every byte after the magic
// Parameters are stored at 32-bit width regardless of the build's scalar
// width. Malformed input (bad magic, truncation, trailing bytes, checksum
// mismatch) raises IoError; impossible config values raise ConfigError.
std::string serialize_checkpoint(const ViTModel& model);
ViTModel parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ViTModel& model);
ViTModel load_checkpoint(const std::string& path);

}  // namespace vct
