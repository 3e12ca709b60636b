#pragma once

#include <filesystem>

#include "locedit/providers.hpp"

namespace locedit {

// 8-bit RGB PNG; values are clamped to [0, 1] and rounded to the nearest level.
Image read_png_image(const std::filesystem::path& path);
void write_png_image(const std::filesystem::path& path, const Image& image);

// 8-bit single-channel PNG, 255 = foreground. Reading treats >= 128 as foreground.
Mask read_png_mask(const std::filesystem::path& path);
void write_png_mask(const std::filesystem::path& path, const Mask& mask);

}  // namespace locedit
