#include "locedit/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace locedit {

namespace {

std::vector<unsigned char> read_png(const std::filesystem::path& path, png_uint_32 format, int& width, int& height) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read png " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode png " + path.string() + ": " + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int width, int height,
               const std::vector<unsigned char>& buffer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write png " + path.string() + ": " + img.message);
  }
}

unsigned char quantize(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Image read_png_image(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto buf = read_png(path, PNG_FORMAT_RGB, w, h);
  Image img(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img(c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    }
  }
  return img;
}

void write_png_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 3) throw ShapeError("write_png_image needs 3 channels, got " + image.shape().str());
  const int w = image.width();
  const int h = image.height();
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] = quantize(image(c, y, x));
    }
  }
  write_png(path, PNG_FORMAT_RGB, w, h, buf);
}

Mask read_png_mask(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto buf = read_png(path, PNG_FORMAT_GRAY, w, h);
  Tensor m(1, h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m[i] = buf[i] >= 128 ? 1.0 : 0.0;
  return make_mask(std::move(m), path.filename().string());
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
  std::vector<unsigned char> buf(mask.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] != 0.0 ? 255 : 0;
  write_png(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), buf);
}

}  // namespace locedit
