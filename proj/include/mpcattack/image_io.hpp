#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mpcattack/core.hpp"

namespace mpcattack {

/// Intensity -> byte with round-half-away-from-zero: 0.5 maps to 128.
std::uint8_t quantize_value(double v);
std::vector<std::uint8_t> quantize(const ImageTensor& img);
ImageTensor dequantize(int height, int width, std::span<const std::uint8_t> rgb);

/// Decodes PNG or JPEG (detected from the file signature) into RGB in [0,1].
/// Grayscale, palette and alpha inputs are converted to RGB.
ImageTensor read_image(const std::filesystem::path& path);

/// 8-bit RGB PNG, no ancillary chunks, so equal images give equal bytes.
std::vector<std::uint8_t> encode_png(const ImageTensor& img);
void write_png(const ImageTensor& img, const std::filesystem::path& path);

}  // namespace mpcattack
