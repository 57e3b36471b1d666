#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace scenecond {

/// 8-bit grayscale PNG.
std::string encode_png_gray8(int width, int height, std::span<const std::uint8_t> pixels);

std::string base64_encode(std::string_view bytes);

}  // namespace scenecond
