#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dishforge/providers/provider.hpp"
#include "dishforge/types.hpp"

namespace dishforge::editset {

enum class EditType { Add, Remove, Replace, Custom };
enum class EditMethod { CEP2P, Inpaint, InpaintReversed };
enum class ReviewStatus { Pending, Approved, Rejected, Skipped };

std::string_view edit_type_name(EditType t) noexcept;
EditType edit_type_from_name(std::string_view name);
std::string_view edit_method_name(EditMethod m) noexcept;
EditMethod edit_method_from_name(std::string_view name);
std::string_view review_status_name(ReviewStatus s) noexcept;
ReviewStatus review_status_from_name(std::string_view name);

/// Leading verb of an instruction: add / remove / replace, else Custom.
EditType edit_type_for_instruction(std::string_view instruction);

inline constexpr std::string_view kDegenerateFlag = "degenerate";

struct EditPair {
  std::string pair_id;
  ImageRef source;
  ImageRef target;
  std::string instruction;
  EditType edit_type = EditType::Custom;
  EditMethod method = EditMethod::CEP2P;
  std::optional<double> rho;
  ReviewStatus review = ReviewStatus::Pending;
  std::optional<std::string> checkpoint;  // CEP2P only
  std::optional<std::string> origin;      // record id for inpaint pairs
  std::vector<std::string> flags;
  std::optional<std::string> reviewer;
  std::optional<std::string> reviewed_at;

  /// SchemaViolation unless source != target (or Rejected) and rho is present
  /// exactly for CEP2P pairs.
  void validate() const;

  friend bool operator==(const EditPair&, const EditPair&) = default;
};

inline const std::string& sort_key(const EditPair& p) { return p.pair_id; }
void to_json(Json& j, const EditPair& p);
void from_json(const Json& j, EditPair& p);

inline constexpr double kDefaultSourceFraction = 0.25;
inline constexpr std::string_view kDefaultBaseCheckpoint = "omni-dish-base";

struct ConceptPlan {
  std::string concept_name;
  std::vector<std::string> target_prompts;
  std::vector<std::string> source_prompts;
  std::size_t n_target = 0;
  std::size_t n_source = 0;
  std::string base_checkpoint{kDefaultBaseCheckpoint};

  /// InvalidArgument unless n_target >= 1 and each list is non-empty when
  /// its count is positive.
  void validate() const;
};

void to_json(Json& j, const ConceptPlan& p);
void from_json(const Json& j, ConceptPlan& p);

/// The object of a concept phrase: "add steam" -> "steam".
std::string concept_object(std::string_view concept_name);

/// Prompts mentioning the concept object (ASCII case-insensitive) become
/// target prompts, the rest source prompts. n_source = round(n_target *
/// source_fraction). Throws InvalidArgument for n_target = 0 or a fraction
/// outside [0, 1), NoPrompts when a list needed by a positive count is empty.
ConceptPlan plan_concept_enhancement(std::string_view concept_name, std::span<const std::string> prompts,
                                     std::size_t n_target, double source_fraction = kDefaultSourceFraction,
                                     std::string_view base_checkpoint = kDefaultBaseCheckpoint);

/// One generated training image of a concept fine-tune.
struct ProvenanceRow {
  std::string concept_name;
  std::string role;  // "target" or "source"
  std::string prompt;
  std::uint64_t seed = 0;
  std::string blob_id;
  std::string job_id;
  std::string checkpoint_id;
};

inline std::tuple<std::string, std::string, std::uint64_t> sort_key(const ProvenanceRow& r) {
  return {r.concept_name, r.role, r.seed};
}
void to_json(Json& j, const ProvenanceRow& r);
void from_json(const Json& j, ProvenanceRow& r);

struct ConceptRunOptions {
  std::uint64_t seed_base = 0;
  std::chrono::milliseconds poll_interval{0};
  int max_polls = 10000;
};

struct ConceptRun {
  std::string checkpoint_id;
  std::string job_id;
  std::vector<ProvenanceRow> provenance;
};

/// Generates n_target + n_source images with seeds seed_base, seed_base + 1,
/// ..., fine-tunes on all of them and polls to a terminal state. Throws
/// FinetuneFailed on a Failed job or when max_polls is exhausted.
ConceptRun run_concept_enhancement(const ConceptPlan& plan, providers::GenerationProvider& generation,
                                   providers::FinetuneProvider& finetune, const ConceptRunOptions& options = {});

inline const std::vector<double> kDefaultRhoGrid = {0.2, 0.4, 0.6, 0.8};

/// |rho_grid| * |seeds| Pending pairs tagged with their rho. Pairs whose two
/// images are the same blob are flagged degenerate and auto-Rejected.
/// Throws InvalidRho before any provider call, InvalidArgument for no seeds.
std::vector<EditPair> build_cep2p_pairs(std::string_view source_prompt, std::string_view target_prompt,
                                        std::string_view instruction, std::string_view checkpoint,
                                        std::span<const double> rho_grid, std::span<const std::uint64_t> seeds,
                                        providers::GenerationProvider& generation);

struct InpaintTemplates {
  std::string removable =
      "REMOVABLE: {name}\n"
      "List the ingredients or garnishes visible in this photo that could be removed "
      "without changing what the dish is. Reply with a JSON array of strings.";
  std::string remove = "remove the {element} from the dish";
  std::string add = "add {element} to the dish";
};

/// Parses a JSON string array out of a VLLM reply, dropping blanks and
/// duplicates. Throws MalformedResponse.
std::vector<std::string> parse_element_list(std::string_view reply);

/// Per removable element: a Remove pair (original -> inpainted) and its
/// field-swapped Add partner. Elements whose detection is empty, whose mask
/// is empty or whose inpaint leaves the image unchanged are skipped with a
/// warning. Throws InvalidState for records that are not curated.
std::vector<EditPair> build_inpaint_pairs(const DishRecord& record, providers::VisionProvider& vision,
                                          providers::EditToolsProvider& tools, const InpaintTemplates& templates = {});

/// Ids of CEP2P pairs whose checkpoint no provenance row produced.
std::vector<std::string> orphan_cep2p_pairs(std::span<const EditPair> pairs, std::span<const ProvenanceRow> provenance);

/// The InpaintReversed partner of an Inpaint pair.
EditPair reverse_pair(const EditPair& remove_pair, const InpaintTemplates& templates, std::string_view element);

}  // namespace dishforge::editset
