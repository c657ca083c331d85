#include "docs2synth/image.hpp"

#include <png.h>
// jpeglib.h expects FILE and size_t to be declared first.
#include <cstdio>
#include <jpeglib.h>

#include <csetjmp>
#include <cstring>
#include <memory>

#include "docs2synth/errors.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::image {

RgbImage::RgbImage(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw UndecodableImage("image dimensions must be positive");
  pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

std::array<std::uint8_t, 3> RgbImage::at(int x, int y) const {
  auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void RgbImage::set(int x, int y, std::array<std::uint8_t, 3> rgb) {
  auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
  pixels[i] = rgb[0];
  pixels[i + 1] = rgb[1];
  pixels[i + 2] = rgb[2];
}

Codec sniff_codec(std::string_view bytes) noexcept {
  static constexpr unsigned char kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPng, 8) == 0) return Codec::Png;
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return Codec::Jpeg;
  }
  return Codec::Unknown;
}

std::string media_type(Codec codec) {
  switch (codec) {
    case Codec::Png: return "image/png";
    case Codec::Jpeg: return "image/jpeg";
    case Codec::Unknown: break;
  }
  return "application/octet-stream";
}

namespace {

RgbImage decode_png(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw UndecodableImage(std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw UndecodableImage(std::string("png: ") + img.message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage decode_jpeg(std::string_view bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  // The raster lives on the heap so the local handle is never modified
  // between setjmp and a possible longjmp.
  auto holder = std::make_unique<RgbImage>();
  RgbImage& out = *holder;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw UndecodableImage(std::string("jpeg: ") + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) *
                                                 static_cast<std::size_t>(out.width) * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return std::move(out);
}

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void png_flush_noop(png_structp) {}

}  // namespace

RgbImage decode(std::string_view bytes) {
  switch (sniff_codec(bytes)) {
    case Codec::Png: return decode_png(bytes);
    case Codec::Jpeg: return decode_jpeg(bytes);
    case Codec::Unknown: break;
  }
  throw UndecodableImage("unrecognized image format");
}

RgbImage load(const std::string& path) {
  std::string bytes;
  try {
    bytes = text::read_file(path);
  } catch (const IoError& e) {
    throw UndecodableImage(e.what());
  }
  return decode(bytes);
}

ImageSize probe_size(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  switch (sniff_codec(bytes)) {
    case Codec::Png:
      if (bytes.size() < 24 || std::memcmp(p + 12, "IHDR", 4) != 0) break;
      return {static_cast<int>(read_be32(p + 16)), static_cast<int>(read_be32(p + 20))};
    case Codec::Jpeg: {
      std::size_t i = 2;
      while (i + 9 < bytes.size()) {
        if (p[i] != 0xFF) {
          ++i;
          continue;
        }
        unsigned marker = p[i + 1];
        if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0xFF) {
          ++i;
          continue;
        }
        std::size_t seg_len = (std::size_t{p[i + 2]} << 8) | p[i + 3];
        bool is_sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
        if (is_sof) {
          int h = (p[i + 5] << 8) | p[i + 6];
          int w = (p[i + 7] << 8) | p[i + 8];
          return {w, h};
        }
        i += 2 + seg_len;
      }
      break;
    }
    case Codec::Unknown: break;
  }
  throw UndecodableImage("cannot read image dimensions");
}

std::string encode_png(const RgbImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3) {
    throw UndecodableImage("inconsistent raster dimensions");
  }
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw UndecodableImage("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw UndecodableImage("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(img.width) * 3;
  for (int y = 0; y < img.height; ++y) {
    // libpng takes a non-const row pointer but does not modify it.
    auto* row = const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * stride);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace docs2synth::image
