#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dishforge/types.hpp"

namespace dishforge::providers {

struct ProviderEndpoint {
  std::string name;
  std::string base_url;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;

  /// Throws ConfigInvalid unless timeout > 0 and max_retries >= 0.
  void validate() const;
};

struct FilterReport {
  bool has_text = false;
  bool has_watermark = false;
  bool has_hands = false;
  std::optional<BBox> dish_bbox;

  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

enum class JobState { Pending, Running, Done, Failed };

std::string_view job_state_name(JobState s) noexcept;
JobState job_state_from_name(std::string_view name);

struct FinetuneJob {
  std::string job_id;
  std::string base_checkpoint;
  std::vector<ImageRef> training_images;
  JobState state = JobState::Pending;
  std::string checkpoint_id;  // set iff Done
  std::string message;        // set iff Failed
};

/// LLM text completion.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string chat(std::string_view prompt) = 0;
};

/// Vision-language model: quality inspection and image-grounded captioning.
class VisionProvider {
 public:
  virtual ~VisionProvider() = default;
  virtual FilterReport inspect_image(const ImageRef& image) = 0;
  virtual std::string caption_image(const ImageRef& image, std::string_view context) = 0;
};

/// Joint text/image encoder. Every vector returned has exactly dims() entries.
class EmbedProvider {
 public:
  virtual ~EmbedProvider() = default;
  virtual std::size_t dims() const = 0;
  virtual EmbeddingVector embed_text(std::string_view text) = 0;
  virtual EmbeddingVector embed_image(const ImageRef& image) = 0;
};

/// Open-vocabulary detection, box-prompted segmentation and inpainting.
class EditToolsProvider {
 public:
  virtual ~EditToolsProvider() = default;
  virtual std::vector<BBox> detect(const ImageRef& image, std::string_view query) = 0;
  virtual ImageRef segment(const ImageRef& image, const BBox& box) = 0;
  virtual ImageRef inpaint(const ImageRef& image, const ImageRef& mask) = 0;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual ImageRef generate(std::string_view prompt, std::uint64_t seed, std::string_view checkpoint_id) = 0;

  /// Prompt-to-prompt pair; `rho` is the fraction of denoising steps whose
  /// attention maps are swapped (0 = no edit, 1 = strongest edit).
  virtual std::pair<ImageRef, ImageRef> generate_pair(std::string_view source_prompt, std::string_view target_prompt,
                                                      double rho, std::uint64_t seed,
                                                      std::string_view checkpoint_id) = 0;
};

class FinetuneProvider {
 public:
  virtual ~FinetuneProvider() = default;
  virtual FinetuneJob submit_finetune(std::string_view base_checkpoint, const std::vector<ImageRef>& images) = 0;
  virtual FinetuneJob poll_finetune(std::string_view job_id) = 0;
};

/// One handle per provider role; roles may share an implementation.
struct ProviderSet {
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<VisionProvider> vision;
  std::shared_ptr<EmbedProvider> embed;
  std::shared_ptr<EditToolsProvider> tools;
  std::shared_ptr<GenerationProvider> generation;
  std::shared_ptr<FinetuneProvider> finetune;
};

// Shared argument checks; both the mock and the gateway enforce them before
// doing any work.
void check_prompt(std::string_view prompt, const char* what = "prompt");
void check_rho(double rho);
void check_pair_prompts(std::string_view source_prompt, std::string_view target_prompt);
void check_box_in_image(const BBox& box, const ImageRef& image);
/// MalformedResponse unless the optional bbox is well formed.
void check_filter_report(const FilterReport& report);

void to_json(Json& j, const FilterReport& r);
void from_json(const Json& j, FilterReport& r);
void to_json(Json& j, const FinetuneJob& job);
void from_json(const Json& j, FinetuneJob& job);

}  // namespace dishforge::providers
