#include <csetjmp>

#include <png.h>

#include "cadfit/error.hpp"
#include "cadfit/review.hpp"

namespace cadfit {

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void no_flush(png_structp) {}

}  // namespace

std::string encode_png_gray(int width, int height, int bit_depth, const std::vector<std::uint16_t>& pixels) {
  if (width <= 0 || height <= 0 || (bit_depth != 8 && bit_depth != 16) ||
      pixels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::invalid_argument, "bad png image parameters");
  }
  const std::size_t bpp = bit_depth / 8;
  std::vector<png_byte> bytes(pixels.size() * bpp);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (bpp == 1) {
      bytes[i] = static_cast<png_byte>(std::min<std::uint16_t>(pixels[i], 255));
    } else {
      bytes[2 * i] = static_cast<png_byte>(pixels[i] >> 8);  // big-endian
      bytes[2 * i + 1] = static_cast<png_byte>(pixels[i] & 0xff);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * bpp;

  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::io_error, "png encoder unavailable");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw Error(ErrorCode::io_error, "png encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, no_flush);
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace cadfit
