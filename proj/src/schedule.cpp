#include "dishforge/schedule.hpp"

#include <algorithm>

#include "dishforge/curation.hpp"

namespace dishforge::schedule {

StageSpec StageSpec::for_stage(int stage) {
  switch (stage) {
    case 1: return StageSpec{1, 512, false, false, false};
    case 2: return StageSpec{2, 512, true, false, false};
    case 3: return StageSpec{3, 1024, true, false, false};
    case 4: return StageSpec{4, 1024, true, true, false};
    case 5: return StageSpec{5, 1024, false, false, true};
    default: fail(Errc::InvalidArgument, "training stage must be 1..5, got " + std::to_string(stage));
  }
}

void to_json(Json& j, const TrainSample& s) {
  j = Json{{"record_id", s.record_id}, {"text", s.text}, {"resolution", s.resolution}, {"image", s.image}, {"stage", s.stage}};
}

void from_json(const Json& j, TrainSample& s) {
  s.record_id = j.at("record_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.resolution = j.at("resolution").get<std::uint32_t>();
  s.image = j.at("image").get<ImageRef>();
  s.stage = j.at("stage").get<int>();
}

std::string assemble_sample_text(const DishRecord& record, const StageSpec& spec) {
  if (!status_at_least(record.status, RecordStatus::Tagged) || !record.tags || !record.name_final) {
    fail(Errc::InvalidState, record.record_id + ": sample text needs a Tagged record");
  }
  std::string out = *record.name_final + ", " + curation::render_tags(*record.tags);
  if (spec.include_recaption) {
    if (!record.recaption || record.recaption->empty()) fail(Errc::MissingRecaption, record.record_id + ": no recaption");
    out += ", " + *record.recaption;
  }
  return out;
}

bool eligible(const DishRecord& record, const StageSpec& spec) {
  if (spec.is_preference_stage) return false;
  if (spec.include_recaption) {
    if (record.status != RecordStatus::Recaptioned || !record.recaption) return false;
  } else if (!status_at_least(record.status, RecordStatus::Tagged)) {
    return false;
  }
  if (spec.require_ultra_quality && record.quality() != Quality::UltraHigh) return false;
  return true;
}

std::vector<TrainSample> build_stage_manifest(int stage, std::span<const DishRecord> records) {
  const StageSpec spec = StageSpec::for_stage(stage);
  if (spec.is_preference_stage) fail(Errc::InvalidArgument, "stage 5 is built from preference pairs");
  std::vector<TrainSample> out;
  for (const auto& r : records) {
    if (!eligible(r, spec)) continue;
    out.push_back(TrainSample{r.record_id, assemble_sample_text(r, spec), spec.resolution, r.image, spec.stage});
  }
  if (out.empty()) fail(Errc::EmptyStage, "stage " + std::to_string(stage) + " has no eligible records");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.record_id < b.record_id; });
  return out;
}

void to_json(Json& j, const PreferenceRow& r) {
  to_json(j, r.pair);
  j["resolution"] = r.resolution;
  j["stage"] = 5;
}

PreferenceRow preference_row_from_json(const Json& j) {
  return PreferenceRow{preference_from_json(j), j.value("resolution", 1024u)};
}

std::vector<PreferenceRow> build_preference_manifest(std::span<const PreferencePair> pairs) {
  if (pairs.empty()) fail(Errc::EmptyStage, "no preference pairs");
  const auto resolution = StageSpec::for_stage(5).resolution;
  std::vector<PreferenceRow> rows;
  for (const auto& p : pairs) rows.push_back(PreferenceRow{p, resolution});
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
  return rows;
}

}  // namespace dishforge::schedule
