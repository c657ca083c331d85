#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace docs2synth::image {

// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255});

  std::array<std::uint8_t, 3> at(int x, int y) const;
  void set(int x, int y, std::array<std::uint8_t, 3> rgb);

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

enum class Codec { Png, Jpeg, Unknown };

Codec sniff_codec(std::string_view bytes) noexcept;
std::string media_type(Codec codec);

// Decodes PNG or JPEG (sniffed from magic bytes). Throws UndecodableImage.
RgbImage decode(std::string_view bytes);
RgbImage load(const std::string& path);

// Reads dimensions from the header only. Throws UndecodableImage.
ImageSize probe_size(std::string_view bytes);

// Deterministic PNG encoding: fixed compression settings and no time chunk.
std::string encode_png(const RgbImage& img);

}  // namespace docs2synth::image
