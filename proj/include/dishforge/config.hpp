#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dishforge/providers/provider.hpp"
#include "dishforge/types.hpp"

namespace dishforge {

inline constexpr std::string_view kConfigEnvVar = "DISHFORGE_CONFIG";

/// Every provider role a pipeline may need.
inline constexpr std::string_view kProviderRoles[] = {"chat", "vision", "embed", "tools", "generation", "finetune"};

/// Settings for a pipeline run, loaded from an INI file. Unknown keys are
/// rejected so typos surface as ConfigInvalid instead of silent defaults.
///
///   [pipeline]   workspace, input, seed, mock
///   [providers]  chat|vision|embed|tools|generation|finetune = URL,
///                timeout_ms, max_retries, concurrency, embed_dims
///   [curation]   threshold
///   [captioning] library_quality = any|ultra, quality_annotations
///   [schedule]   dish_ratio, batch_size
///   [editset]    concept, prompts (| separated), n_target, source_fraction,
///                source_prompt, target_prompt, instruction, rho_grid, seeds,
///                preference_prompts
///   [eval]       samples, human_scores
///   [review]     bind, port, lease_minutes, ui_dir
struct PipelineConfig {
  std::filesystem::path workspace = "dishforge-ws";
  std::filesystem::path input;  // raw record manifest
  std::uint64_t seed = 0;
  bool mock = false;

  std::map<std::string, std::string> endpoints;  // role -> base URL
  int timeout_ms = 30000;
  int max_retries = 2;
  int concurrency = 8;
  std::size_t embed_dims = 64;

  double threshold = 0.35;

  std::string library_quality = "any";
  std::filesystem::path quality_annotations;

  double dish_ratio = 0.5;
  std::size_t batch_size = 64;

  std::string concept_name = "add steam";
  std::vector<std::string> concept_prompts = {"a bowl of noodles with rising steam", "steaming dumplings in a basket",
                                              "hot soup with visible steam", "a bowl of noodles", "dumplings in a basket"};
  std::size_t n_target = 4;
  double source_fraction = 0.25;
  std::string source_prompt = "a bowl of beef noodle soup";
  std::string target_prompt = "a bowl of beef noodle soup with rising steam";
  std::string instruction = "add steam to the dish";
  std::vector<double> rho_grid = {0.2, 0.4, 0.6, 0.8};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t preference_prompts = 4;

  std::size_t eval_samples = 16;
  std::filesystem::path human_scores;

  std::string bind_address = "127.0.0.1";
  int port = 8080;
  int lease_minutes = 10;
  std::filesystem::path ui_dir;

  /// ConfigInvalid on any out-of-range value or a non-mock config lacking an
  /// endpoint for some role.
  void validate() const;

  /// The settings one pipeline stage depends on, as canonical JSON.
  Json section(std::string_view stage) const;

  providers::ProviderEndpoint endpoint_for(std::string_view role) const;

  std::filesystem::path blob_root() const { return workspace / "blobs"; }
  std::filesystem::path manifest_dir() const { return workspace / "manifests"; }
};

/// Parses an INI file; relative paths are resolved against its directory.
/// Throws ConfigInvalid (bad syntax, unknown key, bad value) or IoFailure.
PipelineConfig load_config(const std::filesystem::path& path);

/// `explicit_path` if given, else $DISHFORGE_CONFIG, else defaults.
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace dishforge
