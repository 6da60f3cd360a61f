#include "dishforge/editset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <thread>

#include "dishforge/error.hpp"
#include "dishforge/hash.hpp"
#include "dishforge/text.hpp"

namespace dishforge::editset {
namespace {

constexpr std::array<std::string_view, 4> kEditTypes = {"Add", "Remove", "Replace", "Custom"};
constexpr std::array<std::string_view, 3> kMethods = {"CEP2P", "Inpaint", "InpaintReversed"};
constexpr std::array<std::string_view, 4> kReviewStatuses = {"Pending", "Approved", "Rejected", "Skipped"};

template <typename E, std::size_t N>
E enum_from(const std::array<std::string_view, N>& names, std::string_view name, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<E>(i);
  }
  fail(Errc::SchemaViolation, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

std::string short_hash(std::initializer_list<std::string_view> fields) {
  Sha256 h;
  for (auto f : fields) h.update_field(f);
  return h.hex_digest().substr(0, 20);
}

std::string rho_text(double rho) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", rho);
  return buf;
}

const BBox& largest_box(const std::vector<BBox>& boxes) {
  auto area = [](const BBox& b) { return (b.x1 - b.x0) * (b.y1 - b.y0); };
  const BBox* best = &boxes.front();
  for (const auto& b : boxes) {
    if (area(b) > area(*best)) best = &b;
  }
  return *best;
}

}  // namespace

std::string_view edit_type_name(EditType t) noexcept { return kEditTypes[static_cast<std::size_t>(t)]; }
EditType edit_type_from_name(std::string_view name) { return enum_from<EditType>(kEditTypes, name, "edit type"); }
std::string_view edit_method_name(EditMethod m) noexcept { return kMethods[static_cast<std::size_t>(m)]; }
EditMethod edit_method_from_name(std::string_view name) { return enum_from<EditMethod>(kMethods, name, "edit method"); }
std::string_view review_status_name(ReviewStatus s) noexcept { return kReviewStatuses[static_cast<std::size_t>(s)]; }
ReviewStatus review_status_from_name(std::string_view name) {
  return enum_from<ReviewStatus>(kReviewStatuses, name, "review status");
}

EditType edit_type_for_instruction(std::string_view instruction) {
  auto t = text::lower_ascii(text::trim(instruction));
  auto word = t.substr(0, t.find(' '));
  if (word == "add") return EditType::Add;
  if (word == "remove") return EditType::Remove;
  if (word == "replace") return EditType::Replace;
  return EditType::Custom;
}

void EditPair::validate() const {
  if (pair_id.empty()) fail(Errc::SchemaViolation, "edit pair needs an id");
  if (!is_blob_id(source.blob_id) || !is_blob_id(target.blob_id)) fail(Errc::SchemaViolation, pair_id + ": bad blob id");
  if (source.blob_id == target.blob_id && review != ReviewStatus::Rejected) {
    fail(Errc::SchemaViolation, pair_id + ": identical source and target must be Rejected");
  }
  if ((method == EditMethod::CEP2P) != rho.has_value()) {
    fail(Errc::SchemaViolation, pair_id + ": rho must be present exactly for CEP2P pairs");
  }
  if (text::trim(instruction).empty()) fail(Errc::SchemaViolation, pair_id + ": empty instruction");
}

void to_json(Json& j, const EditPair& p) {
  p.validate();
  j = Json{{"pair_id", p.pair_id},
           {"source", p.source},
           {"target", p.target},
           {"instruction", p.instruction},
           {"edit_type", edit_type_name(p.edit_type)},
           {"method", edit_method_name(p.method)},
           {"review", review_status_name(p.review)}};
  if (p.rho) j["rho"] = *p.rho;
  if (p.checkpoint) j["checkpoint"] = *p.checkpoint;
  if (p.origin) j["origin"] = *p.origin;
  if (!p.flags.empty()) j["flags"] = p.flags;
  if (p.reviewer) j["reviewer"] = *p.reviewer;
  if (p.reviewed_at) j["reviewed_at"] = *p.reviewed_at;
}

void from_json(const Json& j, EditPair& p) {
  p.pair_id = j.at("pair_id").get<std::string>();
  p.source = j.at("source").get<ImageRef>();
  p.target = j.at("target").get<ImageRef>();
  p.instruction = j.at("instruction").get<std::string>();
  p.edit_type = edit_type_from_name(j.at("edit_type").get<std::string>());
  p.method = edit_method_from_name(j.at("method").get<std::string>());
  p.review = review_status_from_name(j.at("review").get<std::string>());
  auto opt = [&j](const char* key) -> std::optional<std::string> {
    if (auto it = j.find(key); it != j.end()) return it->get<std::string>();
    return std::nullopt;
  };
  p.rho = j.contains("rho") ? std::optional<double>(j.at("rho").get<double>()) : std::nullopt;
  p.checkpoint = opt("checkpoint");
  p.origin = opt("origin");
  p.flags = j.value("flags", std::vector<std::string>{});
  p.reviewer = opt("reviewer");
  p.reviewed_at = opt("reviewed_at");
  p.validate();
}

void ConceptPlan::validate() const {
  if (text::trim(concept_name).empty()) fail(Errc::InvalidArgument, "concept must be non-empty");
  if (n_target < 1) fail(Errc::InvalidArgument, "n_target must be at least 1");
  if (target_prompts.empty()) fail(Errc::InvalidArgument, "plan has no target prompts");
  if (n_source > 0 && source_prompts.empty()) fail(Errc::InvalidArgument, "plan needs source prompts");
  if (base_checkpoint.empty()) fail(Errc::InvalidArgument, "plan needs a base checkpoint");
}

void to_json(Json& j, const ConceptPlan& p) {
  j = Json{{"concept", p.concept_name},     {"target_prompts", p.target_prompts}, {"source_prompts", p.source_prompts},
           {"n_target", p.n_target},        {"n_source", p.n_source},             {"base_checkpoint", p.base_checkpoint}};
}

void from_json(const Json& j, ConceptPlan& p) {
  p.concept_name = j.at("concept").get<std::string>();
  p.target_prompts = j.at("target_prompts").get<std::vector<std::string>>();
  p.source_prompts = j.at("source_prompts").get<std::vector<std::string>>();
  p.n_target = j.at("n_target").get<std::size_t>();
  p.n_source = j.at("n_source").get<std::size_t>();
  p.base_checkpoint = j.at("base_checkpoint").get<std::string>();
  p.validate();
}

std::string concept_object(std::string_view concept_name) {
  auto c = text::trim(concept_name);
  auto lowered = text::lower_ascii(c);
  for (std::string_view verb : {"add ", "remove ", "replace ", "make "}) {
    if (lowered.starts_with(verb)) return text::trim(c.substr(verb.size()));
  }
  return c;
}

ConceptPlan plan_concept_enhancement(std::string_view concept_name, std::span<const std::string> prompts,
                                     std::size_t n_target, double source_fraction, std::string_view base_checkpoint) {
  if (n_target < 1) fail(Errc::InvalidArgument, "n_target must be at least 1");
  if (!(source_fraction >= 0.0 && source_fraction < 1.0)) fail(Errc::InvalidArgument, "source_fraction must lie in [0, 1)");
  const std::string object = text::lower_ascii(concept_object(concept_name));
  if (object.empty()) fail(Errc::InvalidArgument, "concept must be non-empty");

  ConceptPlan plan;
  plan.concept_name = text::trim(concept_name);
  plan.base_checkpoint = base_checkpoint;
  plan.n_target = n_target;
  plan.n_source = static_cast<std::size_t>(std::floor(static_cast<double>(n_target) * source_fraction + 0.5 + 1e-9));
  for (const auto& raw : prompts) {
    auto p = text::trim(raw);
    if (p.empty()) continue;
    (text::lower_ascii(p).find(object) != std::string::npos ? plan.target_prompts : plan.source_prompts).push_back(p);
  }
  if (plan.target_prompts.empty()) fail(Errc::NoPrompts, "no prompt mentions '" + object + "'");
  if (plan.n_source > 0 && plan.source_prompts.empty()) fail(Errc::NoPrompts, "no source prompts for '" + object + "'");
  return plan;
}

void to_json(Json& j, const ProvenanceRow& r) {
  j = Json{{"concept", r.concept_name}, {"role", r.role},     {"prompt", r.prompt},
           {"seed", r.seed},            {"blob_id", r.blob_id}, {"job_id", r.job_id},
           {"checkpoint_id", r.checkpoint_id}};
}

void from_json(const Json& j, ProvenanceRow& r) {
  r.concept_name = j.at("concept").get<std::string>();
  r.role = j.at("role").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.blob_id = j.at("blob_id").get<std::string>();
  r.job_id = j.at("job_id").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
}

ConceptRun run_concept_enhancement(const ConceptPlan& plan, providers::GenerationProvider& generation,
                                   providers::FinetuneProvider& finetune, const ConceptRunOptions& options) {
  plan.validate();
  ConceptRun run;
  std::vector<ImageRef> images;
  std::uint64_t seed = options.seed_base;
  auto produce = [&](const std::vector<std::string>& prompts, std::size_t count, const char* role) {
    for (std::size_t i = 0; i < count; ++i, ++seed) {
      const auto& prompt = prompts[i % prompts.size()];
      ImageRef img = generation.generate(prompt, seed, plan.base_checkpoint);
      images.push_back(img);
      run.provenance.push_back(ProvenanceRow{plan.concept_name, role, prompt, seed, img.blob_id, {}, {}});
    }
  };
  produce(plan.target_prompts, plan.n_target, "target");
  produce(plan.source_prompts, plan.n_source, "source");

  providers::FinetuneJob job = finetune.submit_finetune(plan.base_checkpoint, images);
  run.job_id = job.job_id;
  int polls = 0;
  while (job.state == providers::JobState::Pending || job.state == providers::JobState::Running) {
    if (++polls > options.max_polls) {
      fail(Errc::FinetuneFailed, job.job_id + ": still running after " + std::to_string(options.max_polls) + " polls");
    }
    if (options.poll_interval.count() > 0) std::this_thread::sleep_for(options.poll_interval);
    job = finetune.poll_finetune(run.job_id);
  }
  if (job.state == providers::JobState::Failed) {
    fail(Errc::FinetuneFailed, job.job_id + ": " + (job.message.empty() ? std::string("job failed") : job.message));
  }
  if (job.checkpoint_id.empty()) fail(Errc::MalformedResponse, job.job_id + ": Done without a checkpoint");
  run.checkpoint_id = job.checkpoint_id;
  for (auto& row : run.provenance) {
    row.job_id = run.job_id;
    row.checkpoint_id = run.checkpoint_id;
  }
  spdlog::info("concept '{}': {} images, checkpoint {}", plan.concept_name, images.size(), run.checkpoint_id);
  return run;
}

std::vector<EditPair> build_cep2p_pairs(std::string_view source_prompt, std::string_view target_prompt,
                                        std::string_view instruction, std::string_view checkpoint,
                                        std::span<const double> rho_grid, std::span<const std::uint64_t> seeds,
                                        providers::GenerationProvider& generation) {
  for (double rho : rho_grid) providers::check_rho(rho);
  if (rho_grid.empty()) fail(Errc::InvalidArgument, "rho grid must be non-empty");
  if (seeds.empty()) fail(Errc::InvalidArgument, "seeds must be non-empty");
  if (text::trim(instruction).empty()) fail(Errc::InvalidArgument, "instruction must be non-empty");

  const EditType type = edit_type_for_instruction(instruction);
  std::vector<EditPair> out;
  out.reserve(rho_grid.size() * seeds.size());
  for (auto seed : seeds) {
    for (double rho : rho_grid) {
      auto [source, target] = generation.generate_pair(source_prompt, target_prompt, rho, seed, checkpoint);
      EditPair p;
      p.pair_id = "cep2p-" + short_hash({checkpoint, source_prompt, target_prompt, instruction, rho_text(rho),
                                         std::to_string(seed)});
      p.source = source;
      p.target = target;
      p.instruction = text::trim(instruction);
      p.edit_type = type;
      p.method = EditMethod::CEP2P;
      p.rho = rho;
      p.checkpoint = std::string(checkpoint);
      if (source.blob_id == target.blob_id) {
        p.review = ReviewStatus::Rejected;
        p.flags.emplace_back(kDegenerateFlag);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<std::string> parse_element_list(std::string_view reply) {
  auto open = reply.find('[');
  auto close = reply.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    fail(Errc::MalformedResponse, "no JSON array in element reply");
  }
  Json j = Json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_array()) fail(Errc::MalformedResponse, "element reply is not a JSON array");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& item : j) {
    if (!item.is_string()) fail(Errc::MalformedResponse, "element list holds a non-string");
    auto e = text::canonical_name(item.get<std::string>());
    if (!e.empty() && seen.insert(e).second) out.push_back(e);
  }
  return out;
}

EditPair reverse_pair(const EditPair& remove_pair, const InpaintTemplates& templates, std::string_view element) {
  EditPair add = remove_pair;
  std::swap(add.source, add.target);
  add.instruction = text::format_template(templates.add, {{"element", std::string(element)}});
  add.edit_type = EditType::Add;
  add.method = EditMethod::InpaintReversed;
  add.pair_id = "inp-" + short_hash({remove_pair.origin.value_or(""), element, "add"});
  return add;
}

std::vector<EditPair> build_inpaint_pairs(const DishRecord& record, providers::VisionProvider& vision,
                                          providers::EditToolsProvider& tools, const InpaintTemplates& templates) {
  if (record.status != RecordStatus::Tagged && record.status != RecordStatus::Recaptioned) {
    fail(Errc::InvalidState, record.record_id + ": inpaint pairs need a curated record");
  }
  const std::string name = record.name_final.value_or(record.name_raw);
  auto elements = parse_element_list(
      vision.caption_image(record.image, text::format_template(templates.removable, {{"name", name}})));

  std::vector<EditPair> out;
  for (const auto& element : elements) {
    auto boxes = tools.detect(record.image, element);
    if (boxes.empty()) {
      spdlog::warn("{}: '{}' not detected, skipping", record.record_id, element);
      continue;
    }
    ImageRef inpainted;
    try {
      ImageRef mask = tools.segment(record.image, largest_box(boxes));
      inpainted = tools.inpaint(record.image, mask);
    } catch (const Error& e) {
      if (e.code() != Errc::EmptyMask) throw;
      spdlog::warn("{}: empty mask for '{}', skipping", record.record_id, element);
      continue;
    }
    if (inpainted.blob_id == record.image.blob_id) {
      spdlog::warn("{}: inpainting '{}' left the image unchanged, skipping", record.record_id, element);
      continue;
    }
    EditPair remove;
    remove.pair_id = "inp-" + short_hash({record.record_id, element, "remove"});
    remove.source = record.image;
    remove.target = inpainted;
    remove.instruction = text::format_template(templates.remove, {{"element", element}});
    remove.edit_type = EditType::Remove;
    remove.method = EditMethod::Inpaint;
    remove.origin = record.record_id;
    EditPair add = reverse_pair(remove, templates, element);
    out.push_back(std::move(remove));
    out.push_back(std::move(add));
  }
  return out;
}

std::vector<std::string> orphan_cep2p_pairs(std::span<const EditPair> pairs, std::span<const ProvenanceRow> provenance) {
  std::set<std::string> produced;
  for (const auto& row : provenance) produced.insert(row.checkpoint_id);
  std::vector<std::string> out;
  for (const auto& p : pairs) {
    if (p.method == EditMethod::CEP2P && (!p.checkpoint || !produced.contains(*p.checkpoint))) out.push_back(p.pair_id);
  }
  return out;
}

}  // namespace dishforge::editset
