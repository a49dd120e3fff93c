#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cpdewarp/types.hpp"

namespace cpd {

/// Decode PNG or JPEG bytes. Colour images come back as RGB, grey as 1 channel;
/// alpha is dropped and 16-bit samples are scaled to 8 bits.
ImageBuffer decode_image(std::string_view bytes);
ImageBuffer read_image(const std::filesystem::path& path);

std::string encode_png(const ImageBuffer& image);
void write_png(const std::filesystem::path& path, const ImageBuffer& image);

/// Area averaging when shrinking, bilinear when enlarging.
ImageBuffer resize_image(const ImageBuffer& image, Size size);

ImageBuffer to_rgb(const ImageBuffer& image);

/// ITU-R BT.601 luma as doubles, row-major.
std::vector<double> luminance(const ImageBuffer& image);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace cpd
