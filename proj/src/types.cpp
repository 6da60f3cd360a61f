#include "dishforge/types.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "dishforge/error.hpp"
#include "dishforge/text.hpp"

namespace dishforge {
namespace {

constexpr std::array<std::string_view, 6> kStatusNames{"Raw", "Filtered", "Corrected", "Tagged", "Recaptioned",
                                                       "Discarded"};

constexpr std::array<std::string_view, 11> kDishRecordKeys{
    "schema_version", "record_id", "name_raw", "name_final", "image",           "status",
    "discard_reason", "tags",      "recaption", "quality",  "preference_group"};

bool is_known_key(const std::string& key) {
  for (auto k : kDishRecordKeys) {
    if (k == key) return true;
  }
  return false;
}

void put_optional(Json& j, const char* key, const std::optional<std::string>& v) {
  if (v) j[key] = *v;
}

std::optional<std::string> get_optional(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

bool is_blob_id(std::string_view s) noexcept {
  if (s.size() != 64) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

TagSet TagSet::normalized() const {
  auto clean = [](const std::optional<std::string>& v) -> std::optional<std::string> {
    if (!v) return std::nullopt;
    auto t = text::trim(*v);
    if (t.empty()) return std::nullopt;
    return t;
  };
  return TagSet{clean(aesthetic), clean(tableware), clean(background), clean(camera_angle)};
}

std::string_view status_name(RecordStatus s) noexcept { return kStatusNames[static_cast<std::size_t>(s)]; }

RecordStatus status_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == name) return static_cast<RecordStatus>(i);
  }
  fail(Errc::SchemaViolation, "unknown record status '" + std::string(name) + "'");
}

std::optional<int> status_rank(RecordStatus s) noexcept {
  if (s == RecordStatus::Discarded) return std::nullopt;
  return static_cast<int>(s);
}

bool status_at_least(RecordStatus s, RecordStatus floor) noexcept {
  auto a = status_rank(s);
  auto b = status_rank(floor);
  return a && b && *a >= *b;
}

void DishRecord::validate() const {
  if (record_id.empty()) fail(Errc::SchemaViolation, "record_id must be non-empty");
  if (!image.blob_id.empty() && !is_blob_id(image.blob_id)) {
    fail(Errc::SchemaViolation, record_id + ": blob_id is not a 64-char hex digest");
  }
  if (status == RecordStatus::Discarded) {
    if (discard_reason.empty()) fail(Errc::SchemaViolation, record_id + ": Discarded without a reason");
  } else if (!discard_reason.empty()) {
    fail(Errc::SchemaViolation, record_id + ": discard_reason set on a live record");
  }
  if (status_at_least(status, RecordStatus::Corrected) && (!name_final || name_final->empty())) {
    fail(Errc::SchemaViolation, record_id + ": status " + std::string(status_name(status)) + " requires name_final");
  }
  if (tags && tags->normalized() != *tags) fail(Errc::SchemaViolation, record_id + ": tag fields must be trimmed, non-empty");
}

std::size_t import_quality_annotations(std::vector<DishRecord>& records, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "cannot open " + path);
  std::map<std::string, Quality> wanted;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = Json::parse(line);
      auto q = j.at("quality").get<std::string>();
      if (q != "UltraHigh" && q != "Standard") throw Error(Errc::SchemaViolation, "bad quality '" + q + "'");
      wanted[j.at("record_id").get<std::string>()] = q == "UltraHigh" ? Quality::UltraHigh : Quality::Standard;
    } catch (const std::exception& e) {
      throw Error::parse_error(line_no, e.what());
    }
  }
  std::size_t updated = 0;
  for (auto& r : records) {
    auto it = wanted.find(r.record_id);
    if (it != wanted.end()) {
      r.quality_ = it->second;
      ++updated;
    }
  }
  return updated;
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) fail(Errc::InvalidArgument, "embedding must have at least one dimension");
  double sq = 0;
  for (double v : values_) {
    if (!std::isfinite(v)) fail(Errc::InvalidArgument, "embedding has a non-finite entry");
    sq += v * v;
  }
  norm_ = std::sqrt(sq);
  if (!(norm_ > 0)) fail(Errc::ZeroVector, "embedding has zero norm");
}

PreferencePair::PreferencePair(std::string p, ImageRef win, ImageRef lose, std::string annotator)
    : prompt(std::move(p)), image_win(std::move(win)), image_lose(std::move(lose)), annotator_id(std::move(annotator)) {
  if (image_win.blob_id == image_lose.blob_id) fail(Errc::InvalidArgument, "preference pair needs two distinct images");
}

void to_json(Json& j, const ImageRef& r) {
  j = Json{{"blob_id", r.blob_id},
           {"width", r.width},
           {"height", r.height},
           {"media_type", std::string(media_type_name(r.media_type))}};
}

void from_json(const Json& j, ImageRef& r) {
  r.blob_id = j.at("blob_id").get<std::string>();
  r.width = j.at("width").get<std::uint32_t>();
  r.height = j.at("height").get<std::uint32_t>();
  r.media_type = media_type_from_name(j.at("media_type").get<std::string>());
  if (!is_blob_id(r.blob_id)) fail(Errc::SchemaViolation, "blob_id is not a 64-char hex digest");
  if (r.width == 0 || r.height == 0) fail(Errc::SchemaViolation, "image dimensions must be positive");
}

void to_json(Json& j, const BBox& b) { j = Json::array({b.x0, b.y0, b.x1, b.y1}); }

void from_json(const Json& j, BBox& b) {
  if (!j.is_array() || j.size() != 4) fail(Errc::MalformedResponse, "bbox must be [x0,y0,x1,y1]");
  b = BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(Json& j, const TagSet& t) {
  j = Json::object();
  put_optional(j, "aesthetic", t.aesthetic);
  put_optional(j, "tableware", t.tableware);
  put_optional(j, "background", t.background);
  put_optional(j, "camera_angle", t.camera_angle);
}

void from_json(const Json& j, TagSet& t) {
  t.aesthetic = get_optional(j, "aesthetic");
  t.tableware = get_optional(j, "tableware");
  t.background = get_optional(j, "background");
  t.camera_angle = get_optional(j, "camera_angle");
}

void to_json(Json& j, const DishRecord& r) {
  r.validate();
  j = Json::object();
  for (const auto& [key, value] : r.extra.items()) {
    if (!is_known_key(key)) j[key] = value;
  }
  j["record_id"] = r.record_id;
  j["name_raw"] = r.name_raw;
  put_optional(j, "name_final", r.name_final);
  j["image"] = r.image;
  j["status"] = std::string(status_name(r.status));
  if (!r.discard_reason.empty()) j["discard_reason"] = r.discard_reason;
  if (r.tags) j["tags"] = *r.tags;
  put_optional(j, "recaption", r.recaption);
  j["quality"] = r.quality() == Quality::UltraHigh ? "UltraHigh" : "Standard";
  put_optional(j, "preference_group", r.preference_group);
}

void from_json(const Json& j, DishRecord& r) {
  if (!j.is_object()) fail(Errc::SchemaViolation, "row is not an object");
  r = DishRecord{};
  r.record_id = j.at("record_id").get<std::string>();
  r.name_raw = text::nfc(j.at("name_raw").get<std::string>());
  if (auto v = get_optional(j, "name_final")) r.name_final = text::nfc(*v);
  r.image = j.at("image").get<ImageRef>();
  r.status = status_from_name(j.at("status").get<std::string>());
  r.discard_reason = get_optional(j, "discard_reason").value_or("");
  if (auto it = j.find("tags"); it != j.end() && !it->is_null()) r.tags = it->get<TagSet>();
  r.recaption = get_optional(j, "recaption");
  auto q = get_optional(j, "quality").value_or("Standard");
  if (q == "UltraHigh") r.quality_ = Quality::UltraHigh;
  else if (q != "Standard") fail(Errc::SchemaViolation, "unknown quality '" + q + "'");
  r.preference_group = get_optional(j, "preference_group");
  for (const auto& [key, value] : j.items()) {
    if (!is_known_key(key)) r.extra[key] = value;
  }
  r.validate();
}

void to_json(Json& j, const EmbeddingVector& v) { j = v.values(); }

EmbeddingVector embedding_from_json(const Json& j) { return EmbeddingVector(j.get<std::vector<double>>()); }

void to_json(Json& j, const PreferencePair& p) {
  j = Json{{"prompt", p.prompt},
           {"image_win", p.image_win},
           {"image_lose", p.image_lose},
           {"annotator_id", p.annotator_id}};
}

PreferencePair preference_from_json(const Json& j) {
  return PreferencePair(j.at("prompt").get<std::string>(), j.at("image_win").get<ImageRef>(),
                        j.at("image_lose").get<ImageRef>(), j.at("annotator_id").get<std::string>());
}

}  // namespace dishforge
