#include "lfa/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "lfa/errors.hpp"

namespace lfa {
namespace {

void write_with_format(const std::filesystem::path& path, std::size_t height, std::size_t width,
                       std::uint32_t format, const std::uint8_t* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr)) {
    std::string why = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + why);
  }
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot read " + path.string());
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string why = image.message;
    png_image_free(&image);
    throw DecodeError("cannot decode " + path.string() + ": " + why);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage out(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string why = image.message;
    png_image_free(&image);
    throw DecodeError("cannot decode " + path.string() + ": " + why);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_with_format(path, image.height, image.width, PNG_FORMAT_GRAY, image.pixels.data());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_with_format(path, image.height, image.width, PNG_FORMAT_RGB, image.pixels.data());
}

}  // namespace lfa
