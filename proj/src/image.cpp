#include "dishforge/image.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>

#include "dishforge/error.hpp"

namespace dishforge {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void append_be32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(Bytes& out, const char type[4], std::span<const std::uint8_t> data) {
  append_be32(out, static_cast<std::uint32_t>(data.size()));
  std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  auto crc = crc32(0L, out.data() + type_pos, static_cast<uInt>(4 + data.size()));
  append_be32(out, static_cast<std::uint32_t>(crc));
}

bool has_png_signature(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0;
}

ImageSize probe_png(std::span<const std::uint8_t> bytes) {
  // signature + IHDR length/type + width + height
  if (!has_png_signature(bytes) || bytes.size() < 24 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    fail(Errc::UndecodableImage, "not a PNG stream");
  }
  return {read_be32(bytes.data() + 16), read_be32(bytes.data() + 20)};
}

ImageSize probe_jpeg(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 0xFF || bytes[1] != 0xD8) fail(Errc::UndecodableImage, "not a JPEG stream");
  std::size_t i = 2;
  while (i + 4 <= bytes.size()) {
    if (bytes[i] != 0xFF) fail(Errc::UndecodableImage, "corrupt JPEG marker stream");
    std::uint8_t marker = bytes[i + 1];
    if (marker == 0xFF) {  // fill byte
      ++i;
      continue;
    }
    if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) {
      i += 2;
      continue;
    }
    if (marker == 0xD9 || marker == 0xDA) break;  // EOI / start of scan before any SOF
    std::size_t seg_len = (std::size_t{bytes[i + 2]} << 8) | bytes[i + 3];
    if (seg_len < 2) fail(Errc::UndecodableImage, "corrupt JPEG segment length");
    bool is_sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
    if (is_sof) {
      if (i + 9 > bytes.size()) break;
      std::uint32_t h = (std::uint32_t{bytes[i + 5]} << 8) | bytes[i + 6];
      std::uint32_t w = (std::uint32_t{bytes[i + 7]} << 8) | bytes[i + 8];
      return {w, h};
    }
    i += 2 + seg_len;
  }
  fail(Errc::UndecodableImage, "JPEG stream has no frame header");
}

}  // namespace

std::string_view media_type_name(MediaType t) noexcept { return t == MediaType::Png ? "png" : "jpeg"; }
std::string_view media_type_extension(MediaType t) noexcept { return t == MediaType::Png ? "png" : "jpg"; }
std::string_view media_type_mime(MediaType t) noexcept { return t == MediaType::Png ? "image/png" : "image/jpeg"; }

MediaType media_type_from_name(std::string_view name) {
  if (name == "png") return MediaType::Png;
  if (name == "jpeg" || name == "jpg") return MediaType::Jpeg;
  fail(Errc::InvalidArgument, "unknown media type '" + std::string(name) + "'");
}

std::optional<MediaType> sniff_media_type(std::span<const std::uint8_t> bytes) {
  if (has_png_signature(bytes)) return MediaType::Png;
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return MediaType::Jpeg;
  return std::nullopt;
}

ImageSize probe_image(std::span<const std::uint8_t> bytes, MediaType type) {
  if (bytes.empty()) fail(Errc::UndecodableImage, "empty byte sequence");
  ImageSize size = type == MediaType::Png ? probe_png(bytes) : probe_jpeg(bytes);
  if (size.width == 0 || size.height == 0) fail(Errc::UndecodableImage, "image has zero width or height");
  return size;
}

Bytes encode_png(const Raster& raster, const ImageMetadata& metadata) {
  require(raster.channels == 1 || raster.channels == 3, "PNG encoder supports 1 or 3 channels");
  require(raster.width > 0 && raster.height > 0, "PNG dimensions must be positive");
  require(raster.pixels.size() == raster.pixel_count() * raster.channels, "raster buffer size mismatch");

  Bytes out(kPngSignature, kPngSignature + 8);

  Bytes ihdr;
  append_be32(ihdr, raster.width);
  append_be32(ihdr, raster.height);
  ihdr.push_back(8);                                          // bit depth
  ihdr.push_back(raster.channels == 1 ? 0 : 2);               // gray / truecolour
  ihdr.insert(ihdr.end(), {0, 0, 0});                         // deflate, adaptive filter, no interlace
  append_chunk(out, "IHDR", ihdr);

  for (const auto& [key, value] : metadata) {
    Bytes itxt(key.begin(), key.end());
    itxt.insert(itxt.end(), {0, 0, 0, 0, 0});  // NUL, uncompressed, method, empty language, empty translation
    itxt.insert(itxt.end(), value.begin(), value.end());
    append_chunk(out, "iTXt", itxt);
  }

  const std::size_t row_bytes = static_cast<std::size_t>(raster.width) * raster.channels;
  Bytes filtered;
  filtered.reserve((row_bytes + 1) * raster.height);
  for (std::uint32_t y = 0; y < raster.height; ++y) {
    filtered.push_back(0);
    auto row = raster.pixels.begin() + static_cast<std::ptrdiff_t>(y * row_bytes);
    filtered.insert(filtered.end(), row, row + static_cast<std::ptrdiff_t>(row_bytes));
  }
  uLongf packed_len = compressBound(static_cast<uLong>(filtered.size()));
  Bytes packed(packed_len);
  if (compress2(packed.data(), &packed_len, filtered.data(), static_cast<uLong>(filtered.size()), 9) != Z_OK) {
    fail(Errc::StorageFailure, "zlib compression failed");
  }
  packed.resize(packed_len);
  append_chunk(out, "IDAT", packed);
  append_chunk(out, "IEND", {});
  return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::UndecodableImage, "PNG decode failed: " + msg);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster raster(image.width, image.height, color ? 3 : 1);
  if (!png_image_finish_read(&image, nullptr, raster.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::UndecodableImage, "PNG decode failed: " + msg);
  }
  return raster;
}

ImageMetadata read_png_metadata(std::span<const std::uint8_t> bytes) {
  if (!has_png_signature(bytes)) fail(Errc::UndecodableImage, "not a PNG stream");
  ImageMetadata out;
  std::size_t i = 8;
  while (i + 12 <= bytes.size()) {
    std::uint32_t len = read_be32(bytes.data() + i);
    if (i + 12 + len > bytes.size()) break;
    const std::uint8_t* type = bytes.data() + i + 4;
    const std::uint8_t* data = bytes.data() + i + 8;
    if (std::memcmp(type, "iTXt", 4) == 0) {
      const auto* end = data + len;
      const auto* key_end = std::find(data, end, std::uint8_t{0});
      // key NUL, compression flag, method, language NUL, translated keyword NUL
      if (key_end + 3 <= end && key_end[1] == 0) {
        const auto* lang_end = std::find(key_end + 3, end, std::uint8_t{0});
        const auto* trans_end = lang_end < end ? std::find(lang_end + 1, end, std::uint8_t{0}) : end;
        if (trans_end < end) {
          out.emplace(std::string(data, key_end), std::string(trans_end + 1, end));
        }
      }
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    i += 12 + len;
  }
  return out;
}

double pixel_overlap(const Raster& a, const Raster& b) {
  require(a.width == b.width && a.height == b.height && a.channels == b.channels,
          "pixel_overlap needs rasters of identical shape");
  const std::size_t n = a.pixel_count();
  if (n == 0) return 1.0;
  std::size_t same = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto* pa = a.pixels.data() + p * a.channels;
    const auto* pb = b.pixels.data() + p * b.channels;
    if (std::equal(pa, pa + a.channels, pb)) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(n);
}

}  // namespace dishforge
