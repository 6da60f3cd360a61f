#include "dishforge/providers/gateway.hpp"

#include <httplib.h>

#include <cmath>
#include <random>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "dishforge/error.hpp"
#include "dishforge/rng.hpp"

namespace dishforge::providers {
namespace {

struct SemaphoreGuard {
  std::counting_semaphore<>& sem;
  explicit SemaphoreGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
};

const Json& field(const Json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) fail(Errc::MalformedResponse, std::string("response lacks '") + name + "'");
  return *it;
}

std::string text_field(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
    fail(Errc::MalformedResponse, std::string("'") + name + "' must be a non-empty string");
  }
  return v.get<std::string>();
}

bool is_timeout(httplib::Error e) {
  return e == httplib::Error::ConnectionTimeout || e == httplib::Error::Read || e == httplib::Error::Write;
}

}  // namespace

HttpGateway::HttpGateway(ProviderEndpoint endpoint, std::shared_ptr<BlobStore> blobs, GatewayOptions options)
    : endpoint_(std::move(endpoint)), blobs_(std::move(blobs)), options_(options) {
  endpoint_.validate();
  require(blobs_ != nullptr, "gateway needs a blob store");
  require(options_.max_in_flight > 0, "max_in_flight must be positive");
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_.base_url, m, kUrl)) {
    fail(Errc::ConfigInvalid, "endpoint '" + endpoint_.name + "': bad base_url '" + endpoint_.base_url + "'");
  }
  scheme_host_port_ = m[1];
  path_prefix_ = m[2].matched ? std::string(m[2]) : std::string{};
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  in_flight_ = std::make_unique<std::counting_semaphore<>>(options_.max_in_flight);
}

Json HttpGateway::post(const std::string& path, const Json& body) { return call("POST", path, &body); }

Json HttpGateway::get(const std::string& path) { return call("GET", path, nullptr); }

Json HttpGateway::call(const std::string& method, const std::string& path, const Json* body) {
  SemaphoreGuard guard(*in_flight_);
  const std::string url_path = path_prefix_ + path;
  const std::string payload = body ? body->dump() : std::string{};
  thread_local DeterministicRng jitter(std::random_device{}());

  Errc last = Errc::ProviderUnavailable;
  std::string last_message;
  const int attempts = 1 + endpoint_.max_retries;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      double cap = static_cast<double>(options_.backoff_base.count()) * std::pow(options_.backoff_factor, attempt - 1);
      auto delay = std::chrono::microseconds(static_cast<std::int64_t>(jitter.unit() * cap * 1000.0));
      std::this_thread::sleep_for(delay);
    }

    httplib::Client client(scheme_host_port_);
    auto secs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                  static_cast<long>(secs.count() % 1000000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                            static_cast<long>(secs.count() % 1000000));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                             static_cast<long>(secs.count() % 1000000));

    auto res = method == "GET" ? client.Get(url_path) : client.Post(url_path, payload, "application/json");
    if (!res) {
      last = is_timeout(res.error()) ? Errc::ProviderTimeout : Errc::ProviderUnavailable;
      last_message = httplib::to_string(res.error());
      spdlog::debug("{} {}{} attempt {}: {}", method, endpoint_.name, path, attempt + 1, last_message);
      continue;
    }

    Json parsed = Json::parse(res->body, nullptr, false);
    if (res->status >= 500) {
      last = Errc::ProviderUnavailable;
      last_message = "HTTP " + std::to_string(res->status);
      if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("message")) {
        last_message += ": " + parsed["message"].dump();
      }
      spdlog::debug("{} {}{} attempt {}: {}", method, endpoint_.name, path, attempt + 1, last_message);
      continue;
    }
    if (res->status >= 400) {
      std::string code_name = "ProviderUnavailable";
      std::string message = "HTTP " + std::to_string(res->status);
      if (!parsed.is_discarded() && parsed.is_object()) {
        code_name = parsed.value("error_code", code_name);
        message = parsed.value("message", message);
      }
      auto code = errc_from_name(code_name).value_or(Errc::ProviderUnavailable);
      if (code_name == "UnknownCheckpoint") code = Errc::ProviderUnavailable;
      fail(code, endpoint_.name + ": " + code_name + ": " + message);
    }
    if (parsed.is_discarded() || !parsed.is_object()) {
      fail(Errc::MalformedResponse, endpoint_.name + path + ": response is not a JSON object");
    }
    return parsed;
  }
  fail(last, endpoint_.name + path + ": gave up after " + std::to_string(attempts) + " attempts (" + last_message + ")");
}

std::string HttpGateway::blob_b64(const ImageRef& image) const { return base64_encode(blobs_->get(image)); }

ImageRef HttpGateway::store_b64(const Json& response, const char* name) {
  const Json& v = field(response, name);
  if (!v.is_string()) fail(Errc::MalformedResponse, std::string("'") + name + "' must be base64 text");
  Bytes bytes;
  try {
    bytes = base64_decode(v.get<std::string>());
    return blobs_->put(bytes);
  } catch (const Error& e) {
    fail(Errc::MalformedResponse, std::string("'") + name + "': " + e.what());
  }
}

EmbeddingVector HttpGateway::parse_embedding(const Json& response) const {
  const Json& v = field(response, "values");
  if (!v.is_array()) fail(Errc::MalformedResponse, "'values' must be an array");
  if (v.size() != options_.embed_dims) {
    fail(Errc::DimensionMismatch, endpoint_.name + ": expected " + std::to_string(options_.embed_dims) +
                                      " values, got " + std::to_string(v.size()));
  }
  try {
    return EmbeddingVector(v.get<std::vector<double>>());
  } catch (const Error& e) {
    fail(Errc::MalformedResponse, e.what());
  } catch (const std::exception& e) {
    fail(Errc::MalformedResponse, e.what());
  }
}

std::string HttpGateway::chat(std::string_view prompt) {
  check_prompt(prompt);
  return text_field(post("/v1/chat", Json{{"prompt", prompt}}), "text");
}

FilterReport HttpGateway::inspect_image(const ImageRef& image) {
  Json res = post("/v1/inspect", Json{{"blob_b64", blob_b64(image)}});
  FilterReport report;
  try {
    report = res.get<FilterReport>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::MalformedResponse, e.what());
  }
  check_filter_report(report);
  return report;
}

std::string HttpGateway::caption_image(const ImageRef& image, std::string_view context) {
  return text_field(post("/v1/caption", Json{{"blob_b64", blob_b64(image)}, {"context", context}}), "text");
}

EmbeddingVector HttpGateway::embed_text(std::string_view input) {
  check_prompt(input, "embedding input");
  return parse_embedding(post("/v1/embed", Json{{"kind", "text"}, {"payload", input}}));
}

EmbeddingVector HttpGateway::embed_image(const ImageRef& image) {
  return parse_embedding(post("/v1/embed", Json{{"kind", "image"}, {"payload", blob_b64(image)}}));
}

std::vector<BBox> HttpGateway::detect(const ImageRef& image, std::string_view query) {
  check_prompt(query, "detection query");
  Json res = post("/v1/detect", Json{{"blob_b64", blob_b64(image)}, {"query", query}});
  const Json& boxes = field(res, "boxes");
  if (!boxes.is_array()) fail(Errc::MalformedResponse, "'boxes' must be an array");
  std::vector<BBox> out;
  for (const auto& b : boxes) {
    BBox box;
    try {
      box = b.get<BBox>();
    } catch (const std::exception& e) {
      fail(Errc::MalformedResponse, e.what());
    }
    if (!box.well_formed()) fail(Errc::MalformedResponse, "detected box must satisfy x0 < x1 and y0 < y1");
    out.push_back(box);
  }
  return out;
}

ImageRef HttpGateway::segment(const ImageRef& image, const BBox& box) {
  check_box_in_image(box, image);
  ImageRef mask = store_b64(post("/v1/segment", Json{{"blob_b64", blob_b64(image)}, {"box", box}}), "mask_b64");
  if (mask.width != image.width || mask.height != image.height) {
    fail(Errc::MalformedResponse, "mask dimensions differ from the image");
  }
  return mask;
}

ImageRef HttpGateway::inpaint(const ImageRef& image, const ImageRef& mask) {
  if (image.width != mask.width || image.height != mask.height) {
    fail(Errc::InvalidArgument, "mask dimensions must equal image dimensions");
  }
  ImageRef out = store_b64(post("/v1/inpaint", Json{{"blob_b64", blob_b64(image)}, {"mask_b64", blob_b64(mask)}}),
                           "image_b64");
  if (out.width != image.width || out.height != image.height) {
    fail(Errc::MalformedResponse, "inpainted image changed dimensions");
  }
  return out;
}

ImageRef HttpGateway::generate(std::string_view prompt, std::uint64_t seed, std::string_view checkpoint_id) {
  check_prompt(prompt);
  return store_b64(post("/v1/generate", Json{{"prompt", prompt}, {"seed", seed}, {"checkpoint", checkpoint_id}}),
                   "image_b64");
}

std::pair<ImageRef, ImageRef> HttpGateway::generate_pair(std::string_view source_prompt,
                                                         std::string_view target_prompt, double rho,
                                                         std::uint64_t seed, std::string_view checkpoint_id) {
  check_rho(rho);
  check_pair_prompts(source_prompt, target_prompt);
  Json res = post("/v1/generate_pair", Json{{"source_prompt", source_prompt},
                                            {"target_prompt", target_prompt},
                                            {"rho", rho},
                                            {"seed", seed},
                                            {"checkpoint", checkpoint_id}});
  return {store_b64(res, "source_b64"), store_b64(res, "target_b64")};
}

FinetuneJob HttpGateway::submit_finetune(std::string_view base_checkpoint, const std::vector<ImageRef>& images) {
  check_prompt(base_checkpoint, "base checkpoint");
  if (images.empty()) fail(Errc::InvalidArgument, "fine-tuning needs at least one training image");
  std::vector<std::string> ids;
  for (const auto& img : images) ids.push_back(img.blob_id);
  Json res = post("/v1/finetune", Json{{"base", base_checkpoint}, {"blob_ids", ids}});
  FinetuneJob job;
  job.job_id = text_field(res, "job_id");
  job.base_checkpoint = std::string(base_checkpoint);
  job.training_images = images;
  job.state = JobState::Pending;
  return job;
}

FinetuneJob HttpGateway::poll_finetune(std::string_view job_id) {
  check_prompt(job_id, "job id");
  Json res = get("/v1/finetune/" + std::string(job_id));
  try {
    return res.get<FinetuneJob>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::MalformedResponse, e.what());
  }
}

}  // namespace dishforge::providers
