#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dishforge/providers/provider.hpp"
#include "dishforge/types.hpp"

namespace dishforge::captioning {

/// Appended exactly once to every enhanced prompt.
inline constexpr std::string_view kQualitySuffix = ", high aesthetic quality, high definition";

struct Templates {
  std::string describe =
      "DESCRIBE: {name}\n"
      "Write a comprehensive generic description of this dish: main ingredients, "
      "cooking method, colour, texture and typical presentation.";
  std::string recaption_context =
      "RECAPTION: {name}\n"
      "Background on the dish: {description}\n"
      "Using this as a prior, write a fine-grained caption of the photo: visible "
      "ingredients, textures, cooking state and plating.";
  std::string rewrite =
      "REWRITE: {user_text}\n"
      "CAPTION: {caption}\n"
      "Rewrite the caption so that it agrees with the user's request above while "
      "keeping its visual detail. Reply with the caption only.";
};

struct CaptionEntry {
  std::string entry_id;
  std::string dish_name;
  std::string caption;
  EmbeddingVector embedding;
};

/// Immutable-after-build set of captions indexed by canonical dish name.
class CaptionLibrary {
 public:
  explicit CaptionLibrary(std::size_t dims);

  /// Throws InvalidArgument (duplicate id, empty caption or name) or
  /// DimensionMismatch.
  void add(CaptionEntry entry);

  std::size_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<CaptionEntry>& entries() const noexcept { return entries_; }

  /// Entry positions for a dish (exact match after NFC + trim); empty if unknown.
  std::span<const std::size_t> entries_for(std::string_view dish_name) const;

  /// Distinct canonical dish names.
  std::vector<std::string> dish_names() const;

  /// Header row {kind, schema_version, dims, count}, then one row per entry
  /// sorted by entry_id. Embeddings are written in shortest round-trip form.
  void save(const std::filesystem::path& path) const;
  static CaptionLibrary load(const std::filesystem::path& path);

 private:
  std::size_t dims_;
  std::vector<CaptionEntry> entries_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> index_;
  std::set<std::string, std::less<>> ids_;
};

/// Generic description from the dish name alone; the image is never consulted.
std::string describe_dish(std::string_view dish_name, providers::ChatProvider& chat, const Templates& templates = {});

/// Tagged -> Recaptioned: caption_image(image, context built from
/// describe_dish(name_final)). Provider failures raise RecaptionFailed.
DishRecord recaption_record(const DishRecord& record, providers::ChatProvider& chat,
                            providers::VisionProvider& vision, const Templates& templates = {});

enum class QualityFilter { Any, UltraHigh };

/// One entry per Recaptioned record passing `filter`, embedded from its
/// recaption. Throws EmptyLibrary if nothing passes.
CaptionLibrary build_library(std::span<const DishRecord> records, providers::EmbedProvider& embed,
                             QualityFilter filter = QualityFilter::Any);

/// Highest-cosine entry for the dish; ties go to the lowest entry_id.
/// Throws NoEntryForDish.
const CaptionEntry& retrieve_caption(const CaptionLibrary& library, std::string_view dish_name,
                                     const EmbeddingVector& query);

/// As above with the query embedded from the full user text.
const CaptionEntry& retrieve_caption(const CaptionLibrary& library, std::string_view dish_name,
                                     std::string_view user_text, providers::EmbedProvider& embed);

/// Removes every occurrence of the quality suffix, then appends it once.
std::string with_quality_suffix(std::string_view text);

/// Retrieve, LLM-rewrite against the user's text, then append the quality
/// suffix. Falls back to the user's text plus suffix for unknown dishes.
std::string enhance_prompt(const CaptionLibrary& library, std::string_view user_text, std::string_view dish_name,
                           providers::ChatProvider& chat, providers::EmbedProvider& embed,
                           const Templates& templates = {});

}  // namespace dishforge::captioning
