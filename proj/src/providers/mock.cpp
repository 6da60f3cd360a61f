#include "dishforge/providers/mock.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <utility>

#include "dishforge/error.hpp"
#include "dishforge/hash.hpp"
#include "dishforge/rng.hpp"
#include "dishforge/text.hpp"

namespace dishforge::providers {
namespace {

constexpr double kNoiseWeight = 0.35;
constexpr double kDriftWeight = 0.3;

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t key) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(key);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

double to_signed_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0; }

void normalize(std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
}

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, std::uint64_t& h) {
  auto w = words[h % N];
  h = mix64(h);
  return w;
}

constexpr std::array<std::string_view, 4> kAesthetic{"high aesthetic quality", "medium aesthetic quality",
                                                     "professional food photography", "high definition detail"};
constexpr std::array<std::string_view, 5> kTableware{"a white ceramic bowl", "a black slate plate",
                                                     "a blue-and-white porcelain dish", "a bamboo steamer",
                                                     "a cast-iron pan"};
constexpr std::array<std::string_view, 4> kBackground{"a brown wooden tabletop", "a marble counter",
                                                      "a linen tablecloth", "a dark stone surface"};
constexpr std::array<std::string_view, 4> kCameraAngle{"30-degree shooting angle", "overhead shooting angle",
                                                       "45-degree shooting angle", "eye-level shooting angle"};
constexpr std::array<std::string_view, 8> kTexture{"glossy",  "crispy",   "tender",   "silky",
                                                   "charred", "fluffy",   "sticky",   "succulent"};
constexpr std::array<std::string_view, 8> kColour{"golden-brown", "deep red",  "amber",     "ivory",
                                                  "caramel",      "jade green", "mahogany", "pale yellow"};
constexpr std::array<std::string_view, 8> kGarnish{"scattered sesame seeds", "a sprig of coriander",
                                                   "sliced scallions",       "dried chili flakes",
                                                   "a drizzle of chili oil", "crushed peanuts",
                                                   "toasted garlic chips",   "no visible garnish"};
constexpr std::array<std::string_view, 8> kLighting{"soft window light",  "warm tungsten light", "diffuse daylight",
                                                    "low-key side light", "bright studio light", "candle-lit glow",
                                                    "backlit steam",      "even overcast light"};
constexpr std::array<std::string_view, 8> kComposition{"centred composition", "rule-of-thirds framing",
                                                       "tight close-up",      "shallow depth of field",
                                                       "wide table scene",    "symmetrical layout",
                                                       "diagonal arrangement", "minimalist framing"};
constexpr std::array<std::string_view, 8> kMethod{"braising", "stir-frying", "steaming", "deep-frying",
                                                  "roasting", "simmering",   "pan-searing", "blanching"};
constexpr std::array<std::string_view, 8> kIngredient{"pork belly", "glutinous rice", "soy sauce", "ginger",
                                                      "garlic",     "chili",          "peanuts",   "scallion"};

std::string strip_brackets(std::string_view s) {
  static constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
      {"(", ")"}, {"（", "）"}, {"[", "]"}, {"【", "】"}};
  std::string out(s);
  for (const auto& [open, close] : kPairs) {
    std::size_t b;
    while ((b = out.find(open)) != std::string::npos) {
      std::size_t e = out.find(close, b + open.size());
      if (e == std::string::npos) {
        out.erase(b);
        break;
      }
      out.erase(b, e + close.size() - b);
    }
  }
  return out;
}

std::string prompt_of(const Bytes& bytes) {
  if (sniff_media_type(bytes) != MediaType::Png) return {};
  auto meta = read_png_metadata(bytes);
  auto it = meta.find("prompt");
  return it == meta.end() ? std::string{} : it->second;
}

}  // namespace

std::optional<std::pair<std::string, std::string>> parse_directive(std::string_view prompt) {
  auto first_line = prompt.substr(0, prompt.find('\n'));
  auto colon = first_line.find(':');
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  auto verb = first_line.substr(0, colon);
  for (char c : verb) {
    if (!((c >= 'A' && c <= 'Z') || c == '_')) return std::nullopt;
  }
  return std::make_pair(std::string(verb), text::trim(first_line.substr(colon + 1)));
}

MockProvider::MockProvider(std::shared_ptr<BlobStore> blobs, MockOptions options)
    : blobs_(std::move(blobs)), options_(options), drift_(options.dims) {
  require(blobs_ != nullptr, "mock provider needs a blob store");
  require(options_.dims > 0, "mock embedding dims must be positive");
  require(options_.image_size >= 8, "mock image size must be at least 8");
  for (std::size_t i = 0; i < drift_.size(); ++i) drift_[i] = to_signed_unit(mix64(options_.seed * 0x51ed27 + i + 1));
  normalize(drift_);
}

ProviderSet MockProvider::make_set(std::shared_ptr<BlobStore> blobs, MockOptions options) {
  auto mock = std::make_shared<MockProvider>(std::move(blobs), options);
  return ProviderSet{mock, mock, mock, mock, mock, mock};
}

Bytes MockProvider::load(const ImageRef& image) const { return blobs_->get(image); }

std::string MockProvider::chat(std::string_view prompt) {
  check_prompt(prompt);
  const std::string seed = std::to_string(options_.seed);
  auto directive = parse_directive(prompt);
  if (directive) {
    const auto& [verb, payload] = *directive;
    if (verb == "IS_DISH") {
      bool looks_like_noise = std::any_of(payload.begin(), payload.end(),
                                          [](char c) { return (c >= '0' && c <= '9') || c == '%'; });
      return looks_like_noise ? "no" : "yes";
    }
    if (verb == "CORRECT_NAME") {
      std::string name = text::trim(strip_brackets(payload));
      bool changed = true;
      while (changed) {
        changed = false;
        for (auto prefix : kMarketingPrefixes) {
          if (name.size() > prefix.size() && name.starts_with(prefix)) {
            name = text::trim(name.substr(prefix.size()));
            changed = true;
          }
        }
      }
      return name.empty() ? text::trim(payload) : name;
    }
    if (verb == "DESCRIBE") {
      auto h = hash_u64({"describe", seed, payload});
      std::string out = payload + " is a classic dish typically made with ";
      out += pick(kIngredient, h);
      out += " and ";
      out += pick(kIngredient, h);
      out += ", prepared by ";
      out += pick(kMethod, h);
      out += ", with a ";
      out += pick(kTexture, h);
      out += " texture and ";
      out += pick(kColour, h);
      out += " colour.";
      return out;
    }
    if (verb == "REWRITE") {
      std::string caption;
      for (const auto& line : text::split(prompt, "\n")) {
        if (line.starts_with("CAPTION:")) caption = text::trim(line.substr(8));
      }
      if (caption.empty()) return payload;
      return caption + ", " + payload;
    }
  }
  auto digest = sha256_hex(std::string(prompt) + '\x1f' + seed);
  return "mock response " + digest.substr(0, 12);
}

FilterReport MockProvider::inspect_image(const ImageRef& image) {
  load(image);  // MissingBlob
  FilterReport r;
  char d = image.blob_id.empty() ? '0' : image.blob_id[0];
  r.has_text = d == 'd';
  r.has_watermark = d == 'f';
  r.has_hands = d == 'b';
  const double w = image.width;
  const double h = image.height;
  if (d == '7') return r;
  if (d == '9') {
    r.dish_bbox = BBox{w / 4, h / 8, w + w / 8, h * 7 / 8};
  } else {
    r.dish_bbox = BBox{w / 8, h / 8, w * 7 / 8, h * 7 / 8};
  }
  return r;
}

std::string MockProvider::caption_image(const ImageRef& image, std::string_view context) {
  const Bytes bytes = load(image);
  const std::string seed = std::to_string(options_.seed);
  const std::string prompt = prompt_of(bytes);
  auto directive = parse_directive(context);
  std::string verb = directive ? directive->first : std::string{};

  if (verb == "TAGS" || verb == "TAGS_REPAIR") {
    auto h = hash_u64({"tags", seed, image.blob_id});
    Json j{{"aesthetic", pick(kAesthetic, h)},
           {"tableware", pick(kTableware, h)},
           {"background", pick(kBackground, h)},
           {"camera_angle", pick(kCameraAngle, h)}};
    return j.dump();
  }
  if (verb == "REMOVABLE") {
    Json found = Json::array();
    auto lowered = text::lower_ascii(prompt);
    for (auto e : kRemovableElements) {
      if (lowered.find(e) != std::string::npos) found.push_back(e);
    }
    return found.dump();
  }

  auto h = hash_u64({"caption", seed, image.blob_id, context});
  std::string out = prompt.empty() ? std::string("a plated dish") : prompt;
  out += ", ";
  out += pick(kColour, h);
  out += " and ";
  out += pick(kTexture, h);
  out += " surface, ";
  out += pick(kGarnish, h);
  out += ", ";
  out += pick(kLighting, h);
  out += ", ";
  out += pick(kComposition, h);
  out += ", ";
  out += pick(kTexture, h);
  out += " ";
  out += pick(kIngredient, h);
  out += " visible";
  return out;
}

EmbeddingVector MockProvider::embed_text(std::string_view input) {
  check_prompt(input, "embedding input");
  const std::size_t d = options_.dims;
  const std::uint64_t key = options_.seed;

  std::vector<double> features(d, 0.0);
  // ASCII letter/digit runs are one token each; every other code point is
  // its own token, so CJK names tokenise per character.
  std::vector<std::string> units;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) units.push_back(std::exchange(word, {}));
  };
  for (auto& cp : text::code_points(text::lower_ascii(text::nfc(input)))) {
    const unsigned char c = static_cast<unsigned char>(cp[0]);
    if (cp.size() == 1 && std::isalnum(c)) {
      word += cp;
      continue;
    }
    flush();
    if (cp.size() > 1 || !(std::isspace(c) || std::ispunct(c))) units.push_back(std::move(cp));
  }
  flush();
  auto add = [&](std::string_view feature) {
    auto h = fnv1a64(feature, key);
    features[h % d] += (h >> 63) ? 1.0 : -1.0;
  };
  for (std::size_t i = 0; i < units.size(); ++i) {
    add(units[i]);
    if (i + 1 < units.size()) add(units[i] + '\x1e' + units[i + 1]);
  }
  normalize(features);

  std::vector<double> noise(d);
  auto base = fnv1a64(input, key ^ 0x6e6f697365ULL);
  for (std::size_t i = 0; i < d; ++i) noise[i] = to_signed_unit(mix64(base + i));
  normalize(noise);

  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = features[i] + kNoiseWeight * noise[i] + kDriftWeight * drift_[i];
  return EmbeddingVector(std::move(out));
}

EmbeddingVector MockProvider::embed_image(const ImageRef& image) {
  const Bytes bytes = load(image);
  const std::string prompt = prompt_of(bytes);
  if (!prompt.empty()) return embed_text(prompt);
  const std::size_t d = options_.dims;
  std::vector<double> noise(d);
  auto base = fnv1a64(image.blob_id, options_.seed ^ 0x696d616765ULL);
  for (std::size_t i = 0; i < d; ++i) noise[i] = to_signed_unit(mix64(base + i));
  normalize(noise);
  for (std::size_t i = 0; i < d; ++i) noise[i] += kDriftWeight * drift_[i];
  return EmbeddingVector(std::move(noise));
}

std::vector<BBox> MockProvider::detect(const ImageRef& image, std::string_view query) {
  check_prompt(query, "detection query");
  const Bytes bytes = load(image);
  auto prompt = text::lower_ascii(prompt_of(bytes));
  if (prompt.find(text::lower_ascii(query)) == std::string::npos) return {};
  auto h = hash_u64({"detect", std::to_string(options_.seed), image.blob_id, query});
  const std::uint32_t w = image.width;
  const std::uint32_t ht = image.height;
  const std::uint32_t bw = std::max<std::uint32_t>(1, w / 4);
  const std::uint32_t bh = std::max<std::uint32_t>(1, ht / 4);
  const double x0 = static_cast<double>(h % (w - bw + 1));
  const double y0 = static_cast<double>((h >> 20) % (ht - bh + 1));
  return {BBox{x0, y0, x0 + bw, y0 + bh}};
}

ImageRef MockProvider::segment(const ImageRef& image, const BBox& box) {
  load(image);
  check_box_in_image(box, image);
  Raster mask(image.width, image.height, 1);
  const auto x0 = static_cast<std::uint32_t>(std::floor(box.x0));
  const auto y0 = static_cast<std::uint32_t>(std::floor(box.y0));
  const auto x1 = static_cast<std::uint32_t>(std::ceil(box.x1));
  const auto y1 = static_cast<std::uint32_t>(std::ceil(box.y1));
  for (std::uint32_t y = y0; y < y1; ++y) {
    for (std::uint32_t x = x0; x < x1; ++x) *mask.at(x, y) = 255;
  }
  return blobs_->put(encode_png(mask, {{"kind", "mask"}, {"source", image.blob_id}}), MediaType::Png);
}

ImageRef MockProvider::inpaint(const ImageRef& image, const ImageRef& mask) {
  const Bytes image_bytes = load(image);
  const Bytes mask_bytes = load(mask);
  if (image.width != mask.width || image.height != mask.height) {
    fail(Errc::InvalidArgument, "mask dimensions must equal image dimensions");
  }
  Raster src = decode_png(image_bytes);
  Raster m = decode_png(mask_bytes);

  std::vector<bool> masked(src.pixel_count());
  std::size_t set = 0;
  for (std::size_t p = 0; p < masked.size(); ++p) {
    std::uint32_t sum = 0;
    for (std::uint32_t c = 0; c < m.channels; ++c) sum += m.pixels[p * m.channels + c];
    masked[p] = sum > 0;
    set += masked[p];
  }
  if (set == 0) fail(Errc::EmptyMask, "mask has no set pixels");

  std::vector<std::uint64_t> mean(src.channels, 0);
  std::size_t kept = 0;
  for (std::size_t p = 0; p < masked.size(); ++p) {
    if (masked[p]) continue;
    ++kept;
    for (std::uint32_t c = 0; c < src.channels; ++c) mean[c] += src.pixels[p * src.channels + c];
  }
  for (std::size_t p = 0; p < masked.size(); ++p) {
    if (!masked[p]) continue;
    for (std::uint32_t c = 0; c < src.channels; ++c) {
      auto fill = kept ? static_cast<std::uint8_t>(mean[c] / kept) : std::uint8_t{128};
      auto& px = src.pixels[p * src.channels + c];
      px = fill == px ? static_cast<std::uint8_t>(fill ^ 0x40) : fill;
    }
  }
  ImageMetadata meta{{"inpainted_from", image.blob_id}, {"mask", mask.blob_id}};
  if (auto prompt = prompt_of(image_bytes); !prompt.empty()) meta["prompt"] = prompt;
  return blobs_->put(encode_png(src, meta), MediaType::Png);
}

Raster MockProvider::render_prompt(std::string_view prompt, std::uint64_t seed, std::string_view checkpoint_id) const {
  DeterministicRng rng(hash_u64({"generate", std::to_string(options_.seed), prompt, std::to_string(seed), checkpoint_id}));
  const std::uint32_t n = options_.image_size;
  Raster r(n, n, 3);
  constexpr std::uint32_t kBlock = 4;
  for (std::uint32_t by = 0; by < n; by += kBlock) {
    for (std::uint32_t bx = 0; bx < n; bx += kBlock) {
      std::uint64_t colour = rng.next();
      for (std::uint32_t y = by; y < std::min(n, by + kBlock); ++y) {
        for (std::uint32_t x = bx; x < std::min(n, bx + kBlock); ++x) {
          auto* px = r.at(x, y);
          px[0] = static_cast<std::uint8_t>(colour);
          px[1] = static_cast<std::uint8_t>(colour >> 8);
          px[2] = static_cast<std::uint8_t>(colour >> 16);
        }
      }
    }
  }
  return r;
}

ImageRef MockProvider::generate(std::string_view prompt, std::uint64_t seed, std::string_view checkpoint_id) {
  check_prompt(prompt);
  check_prompt(checkpoint_id, "checkpoint id");
  Raster r = render_prompt(prompt, seed, checkpoint_id);
  ImageMetadata meta{{"prompt", std::string(prompt)},
                     {"seed", std::to_string(seed)},
                     {"checkpoint", std::string(checkpoint_id)}};
  return blobs_->put(encode_png(r, meta), MediaType::Png);
}

std::pair<ImageRef, ImageRef> MockProvider::generate_pair(std::string_view source_prompt,
                                                          std::string_view target_prompt, double rho,
                                                          std::uint64_t seed, std::string_view checkpoint_id) {
  check_rho(rho);
  check_pair_prompts(source_prompt, target_prompt);
  check_prompt(checkpoint_id, "checkpoint id");

  ImageRef source = generate(source_prompt, seed, checkpoint_id);
  Raster base = render_prompt(source_prompt, seed, checkpoint_id);
  const std::size_t n = base.pixel_count();
  const auto replaced = static_cast<std::size_t>(std::floor(rho * static_cast<double>(n) + 0.5));
  if (replaced == 0) return {source, source};

  Raster edit = render_prompt(target_prompt, seed, checkpoint_id);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  DeterministicRng rng(hash_u64({"pair-order", std::to_string(options_.seed), std::to_string(seed), source_prompt,
                                 target_prompt, checkpoint_id}));
  rng.shuffle(order);

  Raster target = base;
  for (std::size_t i = 0; i < replaced; ++i) {
    const std::size_t p = order[i] * 3;
    for (std::size_t c = 0; c < 3; ++c) target.pixels[p + c] = edit.pixels[p + c];
    if (std::equal(target.pixels.begin() + static_cast<std::ptrdiff_t>(p),
                   target.pixels.begin() + static_cast<std::ptrdiff_t>(p + 3),
                   base.pixels.begin() + static_cast<std::ptrdiff_t>(p))) {
      target.pixels[p] ^= 0x80;
    }
  }
  ImageMetadata meta{{"prompt", std::string(target_prompt)},
                     {"source_prompt", std::string(source_prompt)},
                     {"seed", std::to_string(seed)},
                     {"checkpoint", std::string(checkpoint_id)},
                     {"replaced_pixels", std::to_string(replaced)}};
  return {source, blobs_->put(encode_png(target, meta), MediaType::Png)};
}

FinetuneJob MockProvider::submit_finetune(std::string_view base_checkpoint, const std::vector<ImageRef>& images) {
  check_prompt(base_checkpoint, "base checkpoint");
  if (images.empty()) fail(Errc::InvalidArgument, "fine-tuning needs at least one training image");
  Sha256 h;
  h.update_field(std::to_string(options_.seed)).update_field(base_checkpoint);
  for (const auto& img : images) {
    load(img);
    h.update_field(img.blob_id);
  }
  const std::string digest = h.hex_digest();

  FinetuneJob job;
  job.job_id = "job-" + digest.substr(0, 16);
  job.base_checkpoint = std::string(base_checkpoint);
  job.training_images = images;
  job.state = JobState::Pending;

  std::lock_guard lock(jobs_mutex_);
  jobs_[job.job_id] = JobRecord{job, 0};
  return job;
}

FinetuneJob MockProvider::poll_finetune(std::string_view job_id) {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) fail(Errc::UnknownJob, "no fine-tune job '" + std::string(job_id) + "'");
  auto& rec = it->second;
  if (rec.job.state == JobState::Done || rec.job.state == JobState::Failed) return rec.job;
  ++rec.polls;
  if (rec.polls >= options_.polls_to_finish) {
    if (options_.fail_finetune) {
      rec.job.state = JobState::Failed;
      rec.job.message = "mock fine-tune forced to fail";
    } else {
      rec.job.state = JobState::Done;
      rec.job.checkpoint_id = "ckpt-" + sha256_hex("ckpt\x1f" + rec.job.job_id).substr(0, 16);
    }
  } else {
    rec.job.state = JobState::Running;
  }
  return rec.job;
}

}  // namespace dishforge::providers
