#include "dishforge/providers/provider.hpp"

#include <cmath>

#include "dishforge/error.hpp"

namespace dishforge::providers {

void ProviderEndpoint::validate() const {
  if (timeout.count() <= 0) fail(Errc::ConfigInvalid, "endpoint '" + name + "': timeout must be positive");
  if (max_retries < 0) fail(Errc::ConfigInvalid, "endpoint '" + name + "': max_retries must be >= 0");
}

std::string_view job_state_name(JobState s) noexcept {
  switch (s) {
    case JobState::Pending: return "Pending";
    case JobState::Running: return "Running";
    case JobState::Done: return "Done";
    case JobState::Failed: return "Failed";
  }
  return "Pending";
}

JobState job_state_from_name(std::string_view name) {
  for (auto s : {JobState::Pending, JobState::Running, JobState::Done, JobState::Failed}) {
    if (job_state_name(s) == name) return s;
  }
  fail(Errc::MalformedResponse, "unknown job state '" + std::string(name) + "'");
}

void check_prompt(std::string_view prompt, const char* what) {
  if (prompt.empty()) fail(Errc::InvalidArgument, std::string(what) + " must be non-empty");
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) fail(Errc::InvalidRho, "replacement fraction must lie in [0,1], got " + std::to_string(rho));
}

void check_pair_prompts(std::string_view source_prompt, std::string_view target_prompt) {
  check_prompt(source_prompt, "source prompt");
  check_prompt(target_prompt, "target prompt");
  if (source_prompt == target_prompt) fail(Errc::InvalidArgument, "source and target prompts must differ");
}

void check_box_in_image(const BBox& box, const ImageRef& image) {
  if (!box.well_formed()) fail(Errc::InvalidArgument, "box must satisfy x0 < x1 and y0 < y1");
  if (!box.within(image.width, image.height)) fail(Errc::InvalidArgument, "box exceeds image bounds");
}

void check_filter_report(const FilterReport& report) {
  if (report.dish_bbox && !report.dish_bbox->well_formed()) {
    fail(Errc::MalformedResponse, "dish bbox must satisfy x0 < x1 and y0 < y1");
  }
}

void to_json(Json& j, const FilterReport& r) {
  j = Json{{"has_text", r.has_text}, {"has_watermark", r.has_watermark}, {"has_hands", r.has_hands}};
  if (r.dish_bbox) j["bbox"] = *r.dish_bbox;
}

void from_json(const Json& j, FilterReport& r) {
  r.has_text = j.at("has_text").get<bool>();
  r.has_watermark = j.at("has_watermark").get<bool>();
  r.has_hands = j.at("has_hands").get<bool>();
  r.dish_bbox.reset();
  if (auto it = j.find("bbox"); it != j.end() && !it->is_null()) r.dish_bbox = it->get<BBox>();
}

void to_json(Json& j, const FinetuneJob& job) {
  std::vector<std::string> ids;
  for (const auto& img : job.training_images) ids.push_back(img.blob_id);
  j = Json{{"job_id", job.job_id},
           {"base", job.base_checkpoint},
           {"blob_ids", ids},
           {"state", std::string(job_state_name(job.state))}};
  if (job.state == JobState::Done) j["checkpoint"] = job.checkpoint_id;
  if (job.state == JobState::Failed) j["message"] = job.message;
}

void from_json(const Json& j, FinetuneJob& job) {
  job.job_id = j.at("job_id").get<std::string>();
  job.base_checkpoint = j.value("base", "");
  job.state = job_state_from_name(j.at("state").get<std::string>());
  job.checkpoint_id = j.value("checkpoint", "");
  job.message = j.value("message", "");
  if (job.state == JobState::Done && job.checkpoint_id.empty()) {
    fail(Errc::MalformedResponse, "Done job without a checkpoint id");
  }
}

}  // namespace dishforge::providers
