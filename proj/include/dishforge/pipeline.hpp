#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dishforge/blob_store.hpp"
#include "dishforge/config.hpp"
#include "dishforge/providers/provider.hpp"

namespace dishforge::pipeline {

/// Canonical stage order; a run executes an ordered subset.
inline const std::vector<std::string> kStages = {"curate", "recaption", "library", "schedule", "editset", "eval"};

/// File names under the workspace manifest directory.
namespace files {
inline constexpr std::string_view kCurated = "curated.jsonl";
inline constexpr std::string_view kRecaptioned = "recaptioned.jsonl";
inline constexpr std::string_view kLibrary = "library.jsonl";
inline constexpr std::string_view kStagePrefix = "stage";  // stage1.jsonl .. stage5.jsonl
inline constexpr std::string_view kConceptPlan = "concept_plan.jsonl";
inline constexpr std::string_view kProvenance = "concept_provenance.jsonl";
inline constexpr std::string_view kCandidates = "edit_candidates.jsonl";
inline constexpr std::string_view kEditQueue = "edit_queue.jsonl";
inline constexpr std::string_view kPreferenceQueue = "preference_queue.jsonl";
inline constexpr std::string_view kEvalReport = "eval_report.json";
}  // namespace files

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  std::string input_hash;
  std::map<std::string, std::size_t> counts;
};

struct RunReport {
  std::vector<StageOutcome> stages;

  bool all_skipped() const;
  std::size_t ran() const;
  Json to_json() const;
};

/// Exclusive claim on a workspace, held for the lifetime of the object. A
/// lock left by a process that no longer exists is taken over.
class WorkspaceLock {
 public:
  /// Throws WorkspaceLocked if another live process holds the workspace.
  explicit WorkspaceLock(const std::filesystem::path& workspace);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Mocks when `config.mock`, else one HTTP gateway per role.
providers::ProviderSet make_providers(const PipelineConfig& config, std::shared_ptr<BlobStore> blobs);

/// Throws ConfigInvalid unless `stages` is a non-empty, duplicate-free subset
/// of kStages in canonical order.
void check_stage_list(const std::vector<std::string>& stages);

/// `n` Raw records over mock-generated photos: dish names carry marketing
/// prefixes, bracketed portions or coupon text so every curation branch is
/// exercised, and prompts mention removable garnishes. Deterministic in
/// (n, seed).
std::vector<DishRecord> synthesize_corpus(std::shared_ptr<BlobStore> blobs, std::size_t n, std::uint64_t seed);

/// Runs the requested stages in order. A stage is skipped when its marker
/// records the same SHA-256 over (stage inputs, config section) and all its
/// outputs still exist. Any failure inside a stage is rethrown as
/// StageFailed(stage, cause). `providers` overrides make_providers.
RunReport run_pipeline(const PipelineConfig& config, const std::vector<std::string>& stages = kStages,
                       std::optional<providers::ProviderSet> providers = std::nullopt);

}  // namespace dishforge::pipeline
