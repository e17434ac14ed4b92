#pragma once

// Binary checkpoint: all integers little-endian.
//
//   "CAMCKPT\0"  u32 version
//   u32 len + config text (key=value lines)
//   u32 count, then per parameter: u16 len + name, u8 rank, u32 dims[rank], f32 data
//   u32 count, then per cluster set: u16 len + name, u8 initialized, u32 iters,
//       f32 ema_decay, u32 k, u32 d, f32 centers[k·d]
//
// Prompt dictionaries are ordinary parameters (names ending in ".cam.dict").

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camc/model.hpp"

namespace camc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
// FormatError on bad magic/version, unknown or missing tensors, shape mismatch
// or trailing bytes.
Model deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace camc
