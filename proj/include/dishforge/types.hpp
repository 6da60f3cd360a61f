#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dishforge/image.hpp"

namespace dishforge {

using Json = nlohmann::json;

/// Version tag written into every manifest row.
inline constexpr std::string_view kSchemaVersion = "dishforge/1";

struct ImageRef {
  std::string blob_id;  // 64 lowercase hex chars, SHA-256 of the stored bytes
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  MediaType media_type = MediaType::Png;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

bool is_blob_id(std::string_view s) noexcept;

/// Pixel box, half-open on the right/bottom edge.
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool well_formed() const noexcept { return x0 < x1 && y0 < y1; }
  bool within(std::uint32_t width, std::uint32_t height) const noexcept {
    return x0 >= 0 && y0 >= 0 && x1 <= width && y1 <= height;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct TagSet {
  std::optional<std::string> aesthetic;
  std::optional<std::string> tableware;
  std::optional<std::string> background;
  std::optional<std::string> camera_angle;

  bool empty() const noexcept { return !aesthetic && !tableware && !background && !camera_angle; }
  /// Trims every field and drops the ones that end up empty.
  TagSet normalized() const;
  friend bool operator==(const TagSet&, const TagSet&) = default;
};

enum class RecordStatus { Raw, Filtered, Corrected, Tagged, Recaptioned, Discarded };

std::string_view status_name(RecordStatus s) noexcept;
RecordStatus status_from_name(std::string_view name);

/// Position in the curation pipeline; Discarded has no rank.
std::optional<int> status_rank(RecordStatus s) noexcept;
bool status_at_least(RecordStatus s, RecordStatus floor) noexcept;

enum class Quality { Standard, UltraHigh };

/// One dish name-image pair moving through curation.
struct DishRecord {
  std::string record_id;
  std::string name_raw;
  std::optional<std::string> name_final;
  ImageRef image;
  RecordStatus status = RecordStatus::Raw;
  std::string discard_reason;  // non-empty iff status == Discarded
  std::optional<TagSet> tags;
  std::optional<std::string> recaption;
  std::optional<std::string> preference_group;
  Json extra = Json::object();  // unknown row fields, preserved verbatim

  Quality quality() const noexcept { return quality_; }

  /// Throws SchemaViolation when a status invariant is broken.
  void validate() const;

  void discard(std::string reason) {
    status = RecordStatus::Discarded;
    discard_reason = std::move(reason);
  }

  friend bool operator==(const DishRecord&, const DishRecord&) = default;

 private:
  Quality quality_ = Quality::Standard;

  friend void from_json(const Json& j, DishRecord& r);
  friend std::size_t import_quality_annotations(std::vector<DishRecord>& records, const std::string& path);
};

/// Applies a manual annotation file (rows {record_id, quality}) to `records`;
/// this is the only way a record becomes UltraHigh. Returns the number of
/// records updated. Unknown ids are ignored.
std::size_t import_quality_annotations(std::vector<DishRecord>& records, const std::string& path);

class EmbeddingVector {
 public:
  /// Throws ZeroVector for an all-zero input, InvalidArgument for an empty or
  /// non-finite one.
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dims() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  double norm() const noexcept { return norm_; }

  friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) { return a.values_ == b.values_; }

 private:
  std::vector<double> values_;
  double norm_ = 0;
};

struct PreferencePair {
  std::string prompt;
  ImageRef image_win;
  ImageRef image_lose;
  std::string annotator_id;

  /// Throws InvalidArgument if win and lose are the same blob.
  PreferencePair(std::string prompt, ImageRef win, ImageRef lose, std::string annotator);

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

void to_json(Json& j, const ImageRef& r);
void from_json(const Json& j, ImageRef& r);
void to_json(Json& j, const BBox& b);
void from_json(const Json& j, BBox& b);
void to_json(Json& j, const TagSet& t);
void from_json(const Json& j, TagSet& t);
void to_json(Json& j, const DishRecord& r);
void from_json(const Json& j, DishRecord& r);
void to_json(Json& j, const EmbeddingVector& v);
EmbeddingVector embedding_from_json(const Json& j);
void to_json(Json& j, const PreferencePair& p);
PreferencePair preference_from_json(const Json& j);

inline const std::string& sort_key(const DishRecord& r) { return r.record_id; }

}  // namespace dishforge

namespace nlohmann {
template <>
struct adl_serializer<dishforge::PreferencePair> {
  static dishforge::PreferencePair from_json(const json& j) { return dishforge::preference_from_json(j); }
  static void to_json(json& j, const dishforge::PreferencePair& p) { dishforge::to_json(j, p); }
};
template <>
struct adl_serializer<dishforge::EmbeddingVector> {
  static dishforge::EmbeddingVector from_json(const json& j) { return dishforge::embedding_from_json(j); }
  static void to_json(json& j, const dishforge::EmbeddingVector& v) { dishforge::to_json(j, v); }
};
}  // namespace nlohmann
