#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cpdewarp/types.hpp"

namespace cpd {

// CPBM layout: "CPBM", u32 version (1), u32 width, u32 height, then
// width*height (x, y) float32 pairs, row-major. All integers and floats are
// little-endian.
inline constexpr std::uint32_t kCpbmVersion = 1;

std::string encode_backward_map(const BackwardMap& map);
BackwardMap decode_backward_map(std::string_view bytes);

void write_backward_map(const std::filesystem::path& path, const BackwardMap& map);
BackwardMap read_backward_map(const std::filesystem::path& path);

/// Round every entry through float32, the precision stored by CPBM.
BackwardMap quantize_to_float(const BackwardMap& map);

}  // namespace cpd
