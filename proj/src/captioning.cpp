#include "dishforge/captioning.hpp"

#include <algorithm>
#include <set>

#include "dishforge/error.hpp"
#include "dishforge/eval.hpp"
#include "dishforge/manifest.hpp"
#include "dishforge/text.hpp"

namespace dishforge::captioning {

CaptionLibrary::CaptionLibrary(std::size_t dims) : dims_(dims) {
  require(dims > 0, "caption library dims must be positive");
}

void CaptionLibrary::add(CaptionEntry entry) {
  if (entry.entry_id.empty()) fail(Errc::InvalidArgument, "caption entry needs an id");
  if (text::trim(entry.caption).empty()) fail(Errc::InvalidArgument, entry.entry_id + ": empty caption");
  if (entry.embedding.dims() != dims_) {
    fail(Errc::DimensionMismatch, entry.entry_id + ": embedding has " + std::to_string(entry.embedding.dims()) +
                                      " dims, library has " + std::to_string(dims_));
  }
  entry.dish_name = text::canonical_name(entry.dish_name);
  if (entry.dish_name.empty()) fail(Errc::InvalidArgument, entry.entry_id + ": empty dish name");
  if (!ids_.insert(entry.entry_id).second) fail(Errc::InvalidArgument, "duplicate caption entry id " + entry.entry_id);
  index_[entry.dish_name].push_back(entries_.size());
  entries_.push_back(std::move(entry));
}

std::span<const std::size_t> CaptionLibrary::entries_for(std::string_view dish_name) const {
  auto it = index_.find(text::canonical_name(dish_name));
  if (it == index_.end()) return {};
  return it->second;
}

std::vector<std::string> CaptionLibrary::dish_names() const {
  std::vector<std::string> out;
  for (const auto& [name, ids] : index_) out.push_back(name);
  return out;
}

void CaptionLibrary::save(const std::filesystem::path& path) const {
  std::vector<const CaptionEntry*> sorted;
  for (const auto& e : entries_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->entry_id < b->entry_id; });

  std::vector<std::string> lines;
  lines.push_back(manifest_detail::serialize_row(
      Json{{"kind", "caption_library"}, {"dims", dims_}, {"count", entries_.size()}}));
  for (const auto* e : sorted) {
    lines.push_back(manifest_detail::serialize_row(Json{{"entry_id", e->entry_id},
                                                        {"dish_name", e->dish_name},
                                                        {"caption", e->caption},
                                                        {"embedding", e->embedding}}));
  }
  manifest_detail::write_lines(path, lines);
}

CaptionLibrary CaptionLibrary::load(const std::filesystem::path& path) {
  auto rows = manifest_detail::read_objects(path);
  if (rows.empty()) throw Error::parse_error(1, "caption library has no header row");
  const auto& [header_line, header] = rows.front();
  std::size_t dims = 0;
  std::size_t count = 0;
  try {
    if (header.at("kind").get<std::string>() != "caption_library") throw Error(Errc::SchemaViolation, "not a caption library");
    dims = header.at("dims").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const std::exception& e) {
    throw Error::parse_error(header_line, e.what());
  }
  CaptionLibrary lib(dims);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& [line, j] = rows[i];
    try {
      lib.add(CaptionEntry{j.at("entry_id").get<std::string>(), j.at("dish_name").get<std::string>(),
                           j.at("caption").get<std::string>(), j.at("embedding").get<EmbeddingVector>()});
    } catch (const std::exception& e) {
      throw Error::parse_error(line, e.what());
    }
  }
  if (lib.size() != count) {
    throw Error::parse_error(header_line, "header declares " + std::to_string(count) + " entries, file has " +
                                              std::to_string(lib.size()));
  }
  return lib;
}

std::string describe_dish(std::string_view dish_name, providers::ChatProvider& chat, const Templates& templates) {
  auto name = text::canonical_name(dish_name);
  if (name.empty()) fail(Errc::InvalidArgument, "dish name must be non-empty");
  auto reply = text::trim(chat.chat(text::format_template(templates.describe, {{"name", name}})));
  if (reply.empty()) fail(Errc::MalformedResponse, "empty dish description");
  return reply;
}

DishRecord recaption_record(const DishRecord& record, providers::ChatProvider& chat,
                            providers::VisionProvider& vision, const Templates& templates) {
  if (record.status != RecordStatus::Tagged) {
    fail(Errc::InvalidState, record.record_id + ": recaption needs a Tagged record, got " +
                                 std::string(status_name(record.status)));
  }
  try {
    const std::string name = record.name_final.value_or(record.name_raw);
    const std::string description = describe_dish(name, chat, templates);
    const std::string context =
        text::format_template(templates.recaption_context, {{"name", name}, {"description", description}});
    auto caption = text::trim(vision.caption_image(record.image, context));
    if (caption.empty()) fail(Errc::MalformedResponse, "empty recaption");
    DishRecord out = record;
    out.recaption = caption;
    out.status = RecordStatus::Recaptioned;
    return out;
  } catch (const Error& e) {
    throw Error(Errc::RecaptionFailed, record.record_id, e);
  }
}

CaptionLibrary build_library(std::span<const DishRecord> records, providers::EmbedProvider& embed,
                             QualityFilter filter) {
  CaptionLibrary lib(embed.dims());
  for (const auto& r : records) {
    if (r.status != RecordStatus::Recaptioned || !r.recaption) continue;
    if (filter == QualityFilter::UltraHigh && r.quality() != Quality::UltraHigh) continue;
    lib.add(CaptionEntry{r.record_id, r.name_final.value_or(r.name_raw), *r.recaption, embed.embed_text(*r.recaption)});
  }
  if (lib.empty()) fail(Errc::EmptyLibrary, "no record passed the library filter");
  return lib;
}

const CaptionEntry& retrieve_caption(const CaptionLibrary& library, std::string_view dish_name,
                                     const EmbeddingVector& query) {
  auto ids = library.entries_for(dish_name);
  if (ids.empty()) fail(Errc::NoEntryForDish, "no caption for dish '" + std::string(dish_name) + "'");
  const auto& entries = library.entries();
  const CaptionEntry* best = nullptr;
  double best_sim = 0;
  for (std::size_t id : ids) {
    const auto& e = entries[id];
    double sim = eval::cosine(query, e.embedding);
    if (!best || sim > best_sim || (sim == best_sim && e.entry_id < best->entry_id)) {
      best = &e;
      best_sim = sim;
    }
  }
  return *best;
}

const CaptionEntry& retrieve_caption(const CaptionLibrary& library, std::string_view dish_name,
                                     std::string_view user_text, providers::EmbedProvider& embed) {
  if (library.empty()) fail(Errc::EmptyLibrary, "caption library is empty");
  if (library.entries_for(dish_name).empty()) {
    fail(Errc::NoEntryForDish, "no caption for dish '" + std::string(dish_name) + "'");
  }
  return retrieve_caption(library, dish_name, embed.embed_text(user_text));
}

std::string with_quality_suffix(std::string_view input) {
  std::string body = text::replace_all(std::string(input), kQualitySuffix, "");
  body = text::trim(body);
  while (!body.empty() && body.back() == ',') body = text::trim(body.substr(0, body.size() - 1));
  return body + std::string(kQualitySuffix);
}

std::string enhance_prompt(const CaptionLibrary& library, std::string_view user_text, std::string_view dish_name,
                           providers::ChatProvider& chat, providers::EmbedProvider& embed,
                           const Templates& templates) {
  const std::string request = text::trim(text::replace_all(std::string(user_text), kQualitySuffix, ""));
  if (request.empty()) fail(Errc::InvalidArgument, "user text must be non-empty");
  if (library.entries_for(dish_name).empty()) return with_quality_suffix(request);
  const auto& entry = retrieve_caption(library, dish_name, request, embed);
  auto rewritten = text::trim(
      chat.chat(text::format_template(templates.rewrite, {{"user_text", request}, {"caption", entry.caption}})));
  if (rewritten.empty()) fail(Errc::MalformedResponse, "empty rewritten caption");
  return with_quality_suffix(rewritten);
}

}  // namespace dishforge::captioning
