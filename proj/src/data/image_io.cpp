#include "feddiff/data/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace feddiff::data {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error("image " + path.string() + ": " + why);
}

RawImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(path, "cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "libpng init failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "decode error");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

RawImage read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6") fail(path, "unsupported PNM type " + magic);
  auto next_int = [&]() {
    int value = 0;
    while (is >> std::ws && is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
    }
    if (!(is >> value)) fail(path, "bad PNM header");
    return value;
  };
  RawImage img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (maxval != 255) fail(path, "only 8-bit PNM is supported");
  is.get();
  img.channels = magic == "P6" ? 3 : 1;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size()))) {
    fail(path, "truncated PNM data");
  }
  return img;
}

}  // namespace

RawImage read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail(path, "cannot open");
  unsigned char head[8] = {};
  probe.read(reinterpret_cast<char*>(head), 8);
  if (probe.gcount() >= 8 && png_sig_cmp(head, 0, 8) == 0) return read_png(path);
  if (head[0] == 'P' && (head[1] == '5' || head[1] == '6')) return read_pnm(path);
  fail(path, "unrecognized image format");
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels != 1 && image.channels != 3) fail(path, "PNG writer needs 1 or 3 channels");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    fail(path, "libpng init failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "encode error");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data() +
                                    static_cast<std::size_t>(y) * image.width * image.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RawImage convert(const RawImage& image, int channels, int width, int height) {
  // Channel conversion first, at source resolution.
  RawImage src;
  src.width = image.width;
  src.height = image.height;
  src.channels = channels;
  const std::size_t px = static_cast<std::size_t>(image.width) * image.height;
  src.pixels.resize(px * channels);
  for (std::size_t i = 0; i < px; ++i) {
    const std::uint8_t* p = image.pixels.data() + i * image.channels;
    std::uint8_t* q = src.pixels.data() + i * channels;
    if (channels == 1) {
      if (image.channels >= 3) {
        q[0] = static_cast<std::uint8_t>(std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
      } else {
        q[0] = p[0];
      }
    } else {
      for (int c = 0; c < channels; ++c) q[c] = image.channels >= 3 ? p[std::min(c, 2)] : p[0];
    }
  }
  if (width == image.width && height == image.height) return src;

  RawImage out;
  out.width = width;
  out.height = height;
  out.channels = channels;
  out.pixels.resize(static_cast<std::size_t>(width) * height * channels);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < channels; ++c) {
        auto at = [&](int yy, int xx) {
          return static_cast<double>(src.pixels[(static_cast<std::size_t>(yy) * src.width + xx) * channels + c]);
        };
        const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                         wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        out.pixels[(static_cast<std::size_t>(y) * width + x) * channels + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::uint8_t to_byte(double value) {
  const double scaled = std::floor((value + 1.0) * 127.5 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace feddiff::data
