#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "dishforge/hash.hpp"

namespace dishforge {

enum class MediaType { Jpeg, Png };

std::string_view media_type_name(MediaType t) noexcept;  // "jpeg" / "png"
std::string_view media_type_extension(MediaType t) noexcept;  // "jpg" / "png"
std::string_view media_type_mime(MediaType t) noexcept;
MediaType media_type_from_name(std::string_view name);

struct ImageSize {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
};

/// Detects the container from magic bytes.
std::optional<MediaType> sniff_media_type(std::span<const std::uint8_t> bytes);

/// Reads width/height from the PNG IHDR or the first JPEG SOF segment.
/// Throws UndecodableImage if the bytes are not a `type` image with a
/// positive size.
ImageSize probe_image(std::span<const std::uint8_t> bytes, MediaType type);

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels.
struct Raster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 3;
  Bytes pixels;

  Raster() = default;
  Raster(std::uint32_t w, std::uint32_t h, std::uint32_t c)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t* at(std::uint32_t x, std::uint32_t y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

/// Key/value text metadata stored as uncompressed iTXt chunks (UTF-8).
using ImageMetadata = std::map<std::string, std::string>;

/// Encodes with filter type 0 and zlib level 9, metadata in key order, so
/// equal inputs give byte-identical files.
Bytes encode_png(const Raster& raster, const ImageMetadata& metadata = {});

Raster decode_png(std::span<const std::uint8_t> bytes);

ImageMetadata read_png_metadata(std::span<const std::uint8_t> bytes);

/// Fraction of pixel positions whose values are identical in both rasters.
/// Throws InvalidArgument on a shape mismatch.
double pixel_overlap(const Raster& a, const Raster& b);

}  // namespace dishforge
