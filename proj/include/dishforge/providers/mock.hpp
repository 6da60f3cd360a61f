#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "dishforge/blob_store.hpp"
#include "dishforge/providers/provider.hpp"

namespace dishforge::providers {

struct MockOptions {
  std::uint64_t seed = 0;         // global test seed mixed into every output
  std::size_t dims = 64;          // embedding width
  std::uint32_t image_size = 64;  // generated images are square RGB PNGs
  int polls_to_finish = 2;        // poll_finetune calls until a job is terminal
  bool fail_finetune = false;     // terminal state becomes Failed
};

/// Deterministic offline stand-in for every provider role. Each output is a
/// pure function of the inputs and `MockOptions::seed`.
///
/// Documented rules other modules and tests rely on:
///
/// chat() reads a directive from the first line, `VERB: payload`:
///   - `IS_DISH: name`      -> "no" if the name contains an ASCII digit or '%'
///                             (coupons, prices, order numbers), else "yes".
///   - `CORRECT_NAME: name` -> the name with bracketed segments and the
///                             marketing prefixes in kMarketingPrefixes removed.
///   - `DESCRIBE: name`     -> a generic description sentence built from the name.
///   - `REWRITE: user text` with a later `CAPTION: caption` line
///                          -> "<caption>, <user text>".
///   - anything else        -> "mock response <hash>".
///
/// caption_image() reads the same directive from `context`:
///   - `TAGS` / `TAGS_REPAIR` -> a JSON object with the four tag fields.
///   - `REMOVABLE`           -> a JSON array of kRemovableElements mentioned in
///                              the image's `prompt` metadata.
///   - otherwise             -> a descriptive caption, deterministic in
///                              (image, context).
///
/// inspect_image() keys off the first hex digit d of the blob id: d='d' sets
/// has_text, d='f' has_watermark, d='b' has_hands, d='7' omits the bbox,
/// d='9' returns a bbox past the right edge; otherwise the bbox is the
/// central 3/4 of the image. An even first digit therefore never reports a
/// watermark.
///
/// Images created by generate() carry their prompt in PNG metadata.
/// embed_image() of such an image equals embed_text(prompt); other images
/// embed from their blob id. embed_text() is a 64-dim feature-hashed bag of
/// token uni/bigrams (ASCII words, otherwise single code points) plus a
/// keyed per-text noise term and a shared drift vector, so texts sharing
/// most tokens score cosine > 0.6 while unrelated texts stay near 0.1.
///
/// detect(q) returns one box iff q occurs (ASCII case-insensitive) in the
/// image's prompt metadata. generate_pair() returns generate(source) and a
/// copy in which the first round(rho * N) pixels of a seeded permutation are
/// changed, so pixel overlap is 1 - k/N: identical at rho = 0 and
/// non-increasing in rho. Fine-tune jobs report Running on the first poll
/// and Done (or Failed when forced) on the second.
class MockProvider final : public ChatProvider,
                           public VisionProvider,
                           public EmbedProvider,
                           public EditToolsProvider,
                           public GenerationProvider,
                           public FinetuneProvider {
 public:
  MockProvider(std::shared_ptr<BlobStore> blobs, MockOptions options = {});

  std::string chat(std::string_view prompt) override;

  FilterReport inspect_image(const ImageRef& image) override;
  std::string caption_image(const ImageRef& image, std::string_view context) override;

  std::size_t dims() const override { return options_.dims; }
  EmbeddingVector embed_text(std::string_view text) override;
  EmbeddingVector embed_image(const ImageRef& image) override;

  std::vector<BBox> detect(const ImageRef& image, std::string_view query) override;
  ImageRef segment(const ImageRef& image, const BBox& box) override;
  ImageRef inpaint(const ImageRef& image, const ImageRef& mask) override;

  ImageRef generate(std::string_view prompt, std::uint64_t seed, std::string_view checkpoint_id) override;
  std::pair<ImageRef, ImageRef> generate_pair(std::string_view source_prompt, std::string_view target_prompt,
                                              double rho, std::uint64_t seed,
                                              std::string_view checkpoint_id) override;

  FinetuneJob submit_finetune(std::string_view base_checkpoint, const std::vector<ImageRef>& images) override;
  FinetuneJob poll_finetune(std::string_view job_id) override;

  const MockOptions& options() const noexcept { return options_; }
  std::shared_ptr<BlobStore> blobs() const { return blobs_; }

  /// Populates every role of a ProviderSet with one shared mock.
  static ProviderSet make_set(std::shared_ptr<BlobStore> blobs, MockOptions options = {});

 private:
  struct JobRecord {
    FinetuneJob job;
    int polls = 0;
  };

  Bytes load(const ImageRef& image) const;
  Raster render_prompt(std::string_view prompt, std::uint64_t seed, std::string_view checkpoint_id) const;

  std::shared_ptr<BlobStore> blobs_;
  MockOptions options_;
  std::vector<double> drift_;
  std::mutex jobs_mutex_;
  std::map<std::string, JobRecord, std::less<>> jobs_;
};

/// Marketing prefixes stripped by the mock's name correction.
inline constexpr std::string_view kMarketingPrefixes[] = {"正宗", "招牌", "特色", "秘制", "私房", "网红", "家常版"};

/// Ingredients the mock VLLM will propose for removal.
inline constexpr std::string_view kRemovableElements[] = {"coriander", "peppers", "chili", "scallion",
                                                         "sesame",    "peanuts", "香菜",  "辣椒"};

/// Splits the first line of a prompt into (VERB, payload) when it has the
/// form `VERB: payload` with VERB in [A-Z_]+.
std::optional<std::pair<std::string, std::string>> parse_directive(std::string_view prompt);

}  // namespace dishforge::providers
