#pragma once

#include <chrono>
#include <memory>
#include <semaphore>

#include "dishforge/blob_store.hpp"
#include "dishforge/providers/provider.hpp"

namespace dishforge::providers {

struct GatewayOptions {
  std::chrono::milliseconds backoff_base{250};
  double backoff_factor = 2.0;
  std::ptrdiff_t max_in_flight = 8;
  std::size_t embed_dims = 64;  // declared width the embed endpoint must return
};

/// JSON-over-HTTP client for one provider endpoint.
///
/// Each call issues at most 1 + max_retries requests. Transport failures,
/// timeouts and 5xx responses are retried after a full-jitter exponential
/// delay (uniform in [0, base * factor^attempt]); malformed 2xx bodies and
/// 4xx responses are not. An exhausted budget raises ProviderTimeout when the
/// last attempt timed out and ProviderUnavailable otherwise.
class HttpGateway final : public ChatProvider,
                          public VisionProvider,
                          public EmbedProvider,
                          public EditToolsProvider,
                          public GenerationProvider,
                          public FinetuneProvider {
 public:
  HttpGateway(ProviderEndpoint endpoint, std::shared_ptr<BlobStore> blobs, GatewayOptions options = {});

  std::string chat(std::string_view prompt) override;

  FilterReport inspect_image(const ImageRef& image) override;
  std::string caption_image(const ImageRef& image, std::string_view context) override;

  std::size_t dims() const override { return options_.embed_dims; }
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

  const ProviderEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  Json post(const std::string& path, const Json& body);
  Json get(const std::string& path);
  Json call(const std::string& method, const std::string& path, const Json* body);

  std::string blob_b64(const ImageRef& image) const;
  ImageRef store_b64(const Json& response, const char* field);
  EmbeddingVector parse_embedding(const Json& response) const;

  ProviderEndpoint endpoint_;
  std::shared_ptr<BlobStore> blobs_;
  GatewayOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace dishforge::providers
