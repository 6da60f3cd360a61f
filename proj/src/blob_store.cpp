#include "dishforge/blob_store.hpp"

#include <atomic>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "dishforge/error.hpp"

namespace dishforge {
namespace fs = std::filesystem;

namespace {

std::atomic<std::uint64_t> g_temp_counter{0};

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(Errc::MissingBlob, "cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "blobs", ec);
  if (ec) fail(Errc::StorageFailure, "cannot create blob root " + root_.string() + ": " + ec.message());
}

fs::path BlobStore::path_for(std::string_view blob_id, MediaType type) const {
  std::string name(blob_id);
  name += '.';
  name += media_type_extension(type);
  return root_ / "blobs" / std::string(blob_id.substr(0, 2)) / name;
}

ImageRef BlobStore::put(std::span<const std::uint8_t> bytes, MediaType type) {
  ImageSize size = probe_image(bytes, type);
  ImageRef ref{sha256_hex(bytes), size.width, size.height, type};

  fs::path dest = path_for(ref.blob_id, type);
  if (fs::exists(dest)) return ref;

  std::error_code ec;
  fs::create_directories(dest.parent_path(), ec);
  if (ec) fail(Errc::StorageFailure, "cannot create " + dest.parent_path().string() + ": " + ec.message());

  std::ostringstream tmp_name;
  tmp_name << ".tmp-" << ref.blob_id << '-' << ::getpid() << '-' << std::this_thread::get_id() << '-'
           << g_temp_counter.fetch_add(1);
  fs::path tmp = dest.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      fail(Errc::StorageFailure, "cannot write " + tmp.string());
    }
  }
  fs::rename(tmp, dest, ec);
  if (ec) {
    fs::remove(tmp, ec);
    if (!fs::exists(dest)) fail(Errc::StorageFailure, "cannot move blob into place: " + dest.string());
  }
  return ref;
}

ImageRef BlobStore::put(std::span<const std::uint8_t> bytes) {
  auto type = sniff_media_type(bytes);
  if (!type) fail(Errc::UndecodableImage, "unrecognised image container");
  return put(bytes, *type);
}

bool BlobStore::contains(const ImageRef& ref) const { return fs::exists(path_for(ref.blob_id, ref.media_type)); }

bool BlobStore::contains(std::string_view blob_id) const { return lookup(blob_id).has_value(); }

Bytes BlobStore::get(const ImageRef& ref) const {
  fs::path p = path_for(ref.blob_id, ref.media_type);
  if (!fs::exists(p)) fail(Errc::MissingBlob, "blob " + ref.blob_id + " not in store");
  return read_file(p);
}

Bytes BlobStore::get(std::string_view blob_id) const {
  auto ref = lookup(blob_id);
  if (!ref) fail(Errc::MissingBlob, "blob " + std::string(blob_id) + " not in store");
  return get(*ref);
}

std::optional<ImageRef> BlobStore::lookup(std::string_view blob_id) const {
  if (!is_blob_id(blob_id)) return std::nullopt;
  for (auto type : {MediaType::Png, MediaType::Jpeg}) {
    fs::path p = path_for(blob_id, type);
    if (fs::exists(p)) {
      auto bytes = read_file(p);
      auto size = probe_image(bytes, type);
      return ImageRef{std::string(blob_id), size.width, size.height, type};
    }
  }
  return std::nullopt;
}

}  // namespace dishforge
