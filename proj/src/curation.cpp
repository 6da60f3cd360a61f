#include "dishforge/curation.hpp"

#include <spdlog/spdlog.h>

#include "dishforge/error.hpp"
#include "dishforge/eval.hpp"
#include "dishforge/text.hpp"

namespace dishforge::curation {
namespace {

constexpr std::string_view kServedIn = "served in ";
constexpr std::string_view kPlacedOn = "placed on ";

enum class YesNo { Yes, No, Unclear };

YesNo parse_yes_no(std::string_view reply) {
  auto t = text::lower_ascii(text::trim(reply));
  std::size_t end = 0;
  while (end < t.size() && t[end] >= 'a' && t[end] <= 'z') ++end;
  const std::string_view word(t.data(), end);
  if (word == "yes" || t.starts_with("是")) return YesNo::Yes;
  if (word == "no" || t.starts_with("否") || t.starts_with("不是")) return YesNo::No;
  return YesNo::Unclear;
}

std::string first_line(std::string_view s) {
  auto t = text::trim(s);
  return text::trim(t.substr(0, t.find('\n')));
}

}  // namespace

DishRecord filter_record(const DishRecord& record, const providers::FilterReport& report) {
  if (record.status != RecordStatus::Raw) {
    fail(Errc::InvalidState, record.record_id + ": filter needs a Raw record, got " + std::string(status_name(record.status)));
  }
  DishRecord out = record;
  std::string_view failed;
  if (report.has_text) failed = reason::kText;
  else if (report.has_watermark) failed = reason::kWatermark;
  else if (report.has_hands) failed = reason::kHands;
  else if (!report.dish_bbox) failed = reason::kMissingBbox;
  else if (!report.dish_bbox->well_formed() || !report.dish_bbox->within(record.image.width, record.image.height)) {
    failed = reason::kIncompleteDish;
  }
  if (failed.empty()) out.status = RecordStatus::Filtered;
  else out.discard(std::string(failed));
  return out;
}

NameDecision decide_name(bool is_dish, double sim_raw, double sim_corrected, double threshold,
                         std::string_view raw_name, std::string_view corrected_name) {
  NameDecision d;
  d.threshold_used = threshold;
  if (!is_dish) {
    d.verdict = Verdict::Discard;
    d.discard_reason = reason::kNotADish;
    return d;
  }
  d.sim_raw = sim_raw;
  d.sim_corrected = sim_corrected;
  if (sim_raw < threshold && sim_corrected < threshold) {
    d.verdict = Verdict::Discard;
    d.discard_reason = reason::kBelowThreshold;
  } else if (sim_corrected > sim_raw) {
    d.verdict = Verdict::KeepCorrected;
    d.name = corrected_name;
  } else {
    d.verdict = Verdict::KeepRaw;
    d.name = raw_name;
  }
  return d;
}

NameDecision correct_name(const DishRecord& record, providers::ChatProvider& chat, providers::EmbedProvider& embed,
                          double threshold, const Templates& templates) {
  if (record.status != RecordStatus::Filtered) {
    fail(Errc::InvalidState, record.record_id + ": name correction needs a Filtered record");
  }
  try {
    const std::string raw = text::canonical_name(record.name_raw);
    if (raw.empty()) fail(Errc::InvalidArgument, "empty dish name");

    auto validity = parse_yes_no(chat.chat(text::format_template(templates.is_dish, {{"name", raw}})));
    if (validity == YesNo::Unclear) fail(Errc::MalformedResponse, "validity answer is neither yes nor no");
    if (validity == YesNo::No) return decide_name(false, 0, 0, threshold, raw, raw);

    std::string corrected =
        text::canonical_name(first_line(chat.chat(text::format_template(templates.correct_name, {{"name", raw}}))));
    if (corrected.empty()) fail(Errc::MalformedResponse, "empty corrected name");

    const auto image_vec = embed.embed_image(record.image);
    const double sim_raw = eval::cosine(embed.embed_text(raw), image_vec);
    const double sim_corrected = corrected == raw ? sim_raw : eval::cosine(embed.embed_text(corrected), image_vec);
    return decide_name(true, sim_raw, sim_corrected, threshold, raw, corrected);
  } catch (const Error& e) {
    throw Error(Errc::CorrectionFailed, record.record_id, e);
  }
}

DishRecord apply_name_decision(const DishRecord& record, const NameDecision& decision) {
  DishRecord out = record;
  if (decision.verdict == Verdict::Discard) {
    out.discard(decision.discard_reason);
  } else {
    out.name_final = decision.name;
    out.status = RecordStatus::Corrected;
  }
  return out;
}

std::optional<TagSet> parse_tag_response(std::string_view reply) {
  auto open = reply.find('{');
  auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  Json j = Json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };
  TagSet tags = TagSet{get("aesthetic"), get("tableware"), get("background"), get("camera_angle")}.normalized();
  if (tags.empty()) return std::nullopt;
  return tags;
}

DishRecord tag_record(const DishRecord& record, providers::VisionProvider& vision, const Templates& templates) {
  if (record.status != RecordStatus::Corrected) {
    fail(Errc::InvalidState, record.record_id + ": tagging needs a Corrected record");
  }
  const std::string name = record.name_final.value_or(record.name_raw);
  try {
    auto tags = parse_tag_response(vision.caption_image(record.image, text::format_template(templates.tags, {{"name", name}})));
    if (!tags) {
      spdlog::warn("{}: unparseable tag reply, retrying with repair prompt", record.record_id);
      tags = parse_tag_response(
          vision.caption_image(record.image, text::format_template(templates.tags_repair, {{"name", name}})));
    }
    if (!tags) fail(Errc::MalformedResponse, "tag reply unparseable after repair");
    DishRecord out = record;
    out.tags = *tags;
    out.status = RecordStatus::Tagged;
    return out;
  } catch (const Error& e) {
    throw Error(Errc::TaggingFailed, record.record_id, e);
  }
}

std::string render_tags(const TagSet& tags) {
  TagSet t = tags.normalized();
  if (t.empty()) fail(Errc::EmptyTagSet, "no tag field present");
  std::vector<std::string> parts;
  if (t.tableware) parts.push_back(std::string(kServedIn) + *t.tableware);
  if (t.background) parts.push_back(std::string(kPlacedOn) + *t.background);
  if (t.aesthetic) parts.push_back(*t.aesthetic);
  if (t.camera_angle) parts.push_back(*t.camera_angle);
  return text::join(parts, ", ");
}

TagSet parse_rendered_tags(std::string_view rendered) {
  TagSet t;
  std::vector<std::string> unlabeled;
  for (auto& part : text::split(rendered, ", ")) {
    if (part.starts_with(kServedIn)) t.tableware = part.substr(kServedIn.size());
    else if (part.starts_with(kPlacedOn)) t.background = part.substr(kPlacedOn.size());
    else unlabeled.push_back(part);
  }
  if (unlabeled.size() == 1 && unlabeled[0].ends_with("angle")) {
    t.camera_angle = unlabeled[0];
  } else {
    if (!unlabeled.empty()) t.aesthetic = unlabeled[0];
    if (unlabeled.size() > 1) t.camera_angle = text::join({unlabeled.begin() + 1, unlabeled.end()}, ", ");
  }
  return t.normalized();
}

DishRecord curate_record(const DishRecord& record, const providers::ProviderSet& providers, double threshold,
                         const Templates& templates) {
  DishRecord r = filter_record(record, providers.vision->inspect_image(record.image));
  if (r.status == RecordStatus::Discarded) return r;
  r = apply_name_decision(r, correct_name(r, *providers.chat, *providers.embed, threshold, templates));
  if (r.status == RecordStatus::Discarded) return r;
  return tag_record(r, *providers.vision, templates);
}

}  // namespace dishforge::curation
