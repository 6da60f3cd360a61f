#pragma once

#include <optional>
#include <string>

#include "dishforge/providers/provider.hpp"
#include "dishforge/types.hpp"

namespace dishforge::curation {

inline constexpr double kDefaultThreshold = 0.35;

/// Machine-readable discard reasons written to `DishRecord::discard_reason`.
namespace reason {
inline constexpr std::string_view kText = "Text";
inline constexpr std::string_view kWatermark = "Watermark";
inline constexpr std::string_view kHands = "Hands";
inline constexpr std::string_view kMissingBbox = "NoDishDetected";
inline constexpr std::string_view kIncompleteDish = "IncompleteDish";
inline constexpr std::string_view kNotADish = "NotADish";
inline constexpr std::string_view kBelowThreshold = "BelowThreshold";
}  // namespace reason

/// Prompt templates; `{name}` is substituted. The leading `VERB:` line is the
/// directive the mock provider keys on; real models read the instruction.
struct Templates {
  std::string is_dish =
      "IS_DISH: {name}\n"
      "Does the text above name a real, specific dish (not a shop slogan, discount, "
      "or unrelated phrase)? Answer only yes or no.";
  std::string correct_name =
      "CORRECT_NAME: {name}\n"
      "Rewrite the dish name above into its standard, concise form, dropping "
      "marketing words and descriptions. Reply with the name only.";
  std::string tags =
      "TAGS: {name}\n"
      "Describe this dish photo as a JSON object with string keys aesthetic, "
      "tableware, background and camera_angle. Omit a key if it does not apply.";
  std::string tags_repair =
      "TAGS_REPAIR: {name}\n"
      "Your previous answer was not valid JSON. Reply with only a JSON object with "
      "keys aesthetic, tableware, background and camera_angle.";
};

/// Applies the image checks to a Raw record. The first failing check, in the
/// order text, watermark, hands, missing bbox, bbox out of bounds, becomes
/// the discard reason. Throws InvalidState unless the record is Raw.
DishRecord filter_record(const DishRecord& record, const providers::FilterReport& report);

enum class Verdict { KeepRaw, KeepCorrected, Discard };

struct NameDecision {
  Verdict verdict = Verdict::KeepRaw;
  std::string name;            // final name for Keep*; empty for Discard
  std::string discard_reason;  // NotADish or BelowThreshold
  std::optional<double> sim_raw;        // absent when the validity check failed
  std::optional<double> sim_corrected;  // absent when the validity check failed
  double threshold_used = kDefaultThreshold;
};

/// Pure decision rule: invalid names are discarded; if both similarities are
/// below `threshold` the pair is discarded; otherwise the strictly better
/// candidate wins and ties keep the raw name.
NameDecision decide_name(bool is_dish, double sim_raw, double sim_corrected, double threshold,
                         std::string_view raw_name, std::string_view corrected_name);

/// Two-step name correction on a Filtered record: ask the LLM whether the
/// name is a dish and for a standardised form, then score both candidates
/// with dish similarity against the image. Provider failures surface as
/// CorrectionFailed(record_id, cause).
NameDecision correct_name(const DishRecord& record, providers::ChatProvider& chat, providers::EmbedProvider& embed,
                          double threshold = kDefaultThreshold, const Templates& templates = {});

/// Corrected (with name_final) or Discarded, per the decision.
DishRecord apply_name_decision(const DishRecord& record, const NameDecision& decision);

/// Extracts a TagSet from a provider reply containing a JSON object.
/// Returns nullopt if no object parses or no tag field is present.
std::optional<TagSet> parse_tag_response(std::string_view reply);

/// Tags a Corrected record. A malformed reply is retried once with the
/// repair prompt, then raises TaggingFailed.
DishRecord tag_record(const DishRecord& record, providers::VisionProvider& vision, const Templates& templates = {});

/// "served in <tableware>, placed on <background>, <aesthetic>, <camera_angle>",
/// absent fields omitted. Throws EmptyTagSet.
std::string render_tags(const TagSet& tags);

/// Inverse of render_tags for strings it produced.
TagSet parse_rendered_tags(std::string_view rendered);

/// Raw -> Filtered -> Corrected -> Tagged, stopping early on discard.
DishRecord curate_record(const DishRecord& record, const providers::ProviderSet& providers,
                         double threshold = kDefaultThreshold, const Templates& templates = {});

}  // namespace dishforge::curation
