#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "dishforge/types.hpp"

namespace dishforge {

/// Content-addressed image store laid out as
/// `<root>/blobs/<first 2 hex>/<blob_id>.<ext>`.
///
/// Writes go to a private temp file and are renamed into place, so racing
/// writers of the same bytes are idempotent and readers never observe a
/// partial blob.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Throws UndecodableImage (empty or non-`type` bytes) or StorageFailure.
  ImageRef put(std::span<const std::uint8_t> bytes, MediaType type);

  /// Sniffs the media type from the magic bytes.
  ImageRef put(std::span<const std::uint8_t> bytes);

  bool contains(const ImageRef& ref) const;
  bool contains(std::string_view blob_id) const;

  /// Throws MissingBlob if the blob is absent.
  Bytes get(const ImageRef& ref) const;
  Bytes get(std::string_view blob_id) const;

  /// Rebuilds the ImageRef of a stored blob, or nullopt.
  std::optional<ImageRef> lookup(std::string_view blob_id) const;

  std::filesystem::path path_for(std::string_view blob_id, MediaType type) const;

 private:
  std::filesystem::path root_;
};

}  // namespace dishforge
