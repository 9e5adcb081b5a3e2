#pragma once

// PNG encoding of RGB images (libpng) and data-URI wrapping.

#include <csetjmp>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>
#include <png.h>

#include "xrl/error.hpp"
#include "xrl/saliency.hpp"

namespace xrl {

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

inline void png_flush_noop(png_structp) {}

}  // namespace detail

/// 8-bit RGB PNG, no interlacing, default compression.
inline std::string encode_png(const RgbImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != 3 * static_cast<std::size_t>(img.width * img.height))
    throw PreconditionError("encode_png: pixel buffer does not match dimensions");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed while encoding");
  }
  png_set_write_fn(png, &out, detail::png_append, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int r = 0; r < img.height; ++r)
    rows[static_cast<std::size_t>(r)] =
        const_cast<png_bytep>(img.pixels.data() + 3 * static_cast<std::size_t>(r * img.width));
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

/// Decodes a PNG produced by encode_png back to RGB (tests, tooling).
inline RgbImage decode_png(const std::string& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw ParseError(std::string("png: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  RgbImage img;
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ParseError(std::string("png: ") + image.message);
  }
  return img;
}

inline std::string base64(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::string png_data_uri(const RgbImage& img) {
  return "data:image/png;base64," + base64(encode_png(img));
}

}  // namespace xrl
