#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msfa/numcore/params.hpp"

namespace msfa {

// Binary layout, all integers little-endian:
//   magic "MSFACKPT" | u32 format version | u8 scalar bytes (4 or 8)
//   | u8 little-endian flag (1) | u16 reserved (0) | u64 ParamSet version
//   | u64 record count
// followed by one record per path in sorted order:
//   u32 path length | path bytes | u32 rank | u64 dim[rank] | raw scalars
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& file, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& file);

}  // namespace msfa
