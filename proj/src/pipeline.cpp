#include "dishforge/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include "dishforge/captioning.hpp"
#include "dishforge/curation.hpp"
#include "dishforge/editset.hpp"
#include "dishforge/error.hpp"
#include "dishforge/eval.hpp"
#include "dishforge/hash.hpp"
#include "dishforge/manifest.hpp"
#include "dishforge/providers/gateway.hpp"
#include "dishforge/providers/mock.hpp"
#include "dishforge/review.hpp"
#include "dishforge/rng.hpp"
#include "dishforge/schedule.hpp"

namespace dishforge::pipeline {
namespace fs = std::filesystem;
namespace {

using Counts = std::map<std::string, std::size_t>;

// Applies fn to every item on up to `workers` threads; results keep input
// order and the lowest-index failure is rethrown.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, int workers, Fn fn) {
  using Out = decltype(fn(items.front()));
  std::vector<std::optional<Out>> results(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        results[i] = fn(items[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(n, items.size()); ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  std::vector<Out> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void require_input(const fs::path& path) {
  if (path.empty() || !fs::exists(path)) fail(Errc::IoFailure, "missing input " + path.string());
}

struct StageDef {
  std::vector<fs::path> inputs;           // must exist
  std::vector<fs::path> optional_inputs;  // hashed when present
  std::vector<fs::path> outputs;
  std::function<Counts()> run;
  // Extra hashed state that is not a whole file, e.g. the decided subset of
  // a queue whose leases and pending items churn without mattering.
  std::function<std::string()> derived = {};
};

std::string input_hash(const std::string& stage, const StageDef& def, const Json& section) {
  Sha256 h;
  h.update_field(stage);
  h.update_field(section.dump());
  for (const auto& p : def.inputs) {
    h.update_field(p.filename().string());
    const Bytes b = read_file(p);
    h.update_field(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
  }
  for (const auto& p : def.optional_inputs) {
    h.update_field(p.filename().string());
    if (!p.empty() && fs::exists(p)) {
      const Bytes b = read_file(p);
      h.update_field(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
    } else {
      h.update_field("<absent>");
    }
  }
  if (def.derived) h.update_field(def.derived());
  return h.hex_digest();
}

std::optional<std::string> marker_hash(const fs::path& marker) {
  if (!fs::exists(marker)) return std::nullopt;
  std::ifstream in(marker);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("input_hash")) return std::nullopt;
  return j["input_hash"].get<std::string>();
}

void write_single_json(const fs::path& path, const Json& j) { manifest_detail::write_lines(path, {j.dump(2)}); }

template <typename Queue, typename Item, typename IdOf>
std::size_t merge_into_queue(const fs::path& path, const std::vector<Item>& fresh, IdOf id_of) {
  Queue queue;
  if (fs::exists(path)) queue.load(path);
  std::vector<Item> added;
  for (const auto& item : fresh) {
    bool present = true;
    try {
      queue.get(id_of(item));
    } catch (const Error& e) {
      if (e.code() != Errc::UnknownPair) throw;
      present = false;
    }
    if (!present) added.push_back(item);
  }
  queue.enqueue(added);
  queue.save(path);
  return added.size();
}

class Runner {
 public:
  Runner(const PipelineConfig& config, std::shared_ptr<BlobStore> blobs, providers::ProviderSet providers)
      : c_(config), blobs_(std::move(blobs)), p_(std::move(providers)) {}

  fs::path manifest(std::string_view name) const { return c_.manifest_dir() / std::string(name); }
  fs::path stage_file(int stage) const {
    return manifest(std::string(files::kStagePrefix) + std::to_string(stage) + ".jsonl");
  }

  StageDef define(const std::string& stage) {
    if (stage == "curate") {
      return {{c_.input}, {c_.quality_annotations}, {manifest(files::kCurated)}, [this] { return curate(); }};
    }
    if (stage == "recaption") {
      return {{manifest(files::kCurated)}, {}, {manifest(files::kRecaptioned)}, [this] { return recaption(); }};
    }
    if (stage == "library") {
      return {{manifest(files::kRecaptioned)}, {}, {manifest(files::kLibrary)}, [this] { return library(); }};
    }
    if (stage == "schedule") {
      std::vector<fs::path> outs;
      for (int s = 1; s <= 5; ++s) outs.push_back(stage_file(s));
      return {{manifest(files::kRecaptioned)}, {}, outs, [this] { return schedule(); },
              [this] { return Json(decided_preferences()).dump(); }};
    }
    if (stage == "editset") {
      return {{manifest(files::kRecaptioned)},
              {},
              {manifest(files::kConceptPlan), manifest(files::kProvenance), manifest(files::kCandidates),
               manifest(files::kEditQueue), manifest(files::kPreferenceQueue)},
              [this] { return editset(); }};
    }
    if (stage == "eval") {
      return {{manifest(files::kRecaptioned), manifest(files::kLibrary)},
              {c_.human_scores},
              {manifest(files::kEvalReport)},
              [this] { return evaluate(); }};
    }
    fail(Errc::ConfigInvalid, "unknown stage " + stage);
  }

 private:
  std::vector<DishRecord> records(std::string_view name) const {
    return read_manifest<DishRecord>(manifest(name));
  }

  Counts curate() {
    auto input = read_manifest<DishRecord>(c_.input);
    if (!c_.quality_annotations.empty()) import_quality_annotations(input, c_.quality_annotations.string());
    auto out = parallel_map(input, c_.concurrency, [this](const DishRecord& r) {
      return r.status == RecordStatus::Raw ? curation::curate_record(r, p_, c_.threshold) : r;
    });
    Counts counts{{"records", out.size()}, {"tagged", 0}, {"discarded", 0}};
    for (const auto& r : out) {
      if (r.status == RecordStatus::Discarded) ++counts["discarded"];
      else if (status_at_least(r.status, RecordStatus::Tagged)) ++counts["tagged"];
    }
    write_manifest(manifest(files::kCurated), out);
    return counts;
  }

  Counts recaption() {
    auto out = parallel_map(records(files::kCurated), c_.concurrency, [this](const DishRecord& r) {
      return r.status == RecordStatus::Tagged ? captioning::recaption_record(r, *p_.chat, *p_.vision) : r;
    });
    std::size_t n = std::count_if(out.begin(), out.end(), [](const auto& r) { return r.status == RecordStatus::Recaptioned; });
    write_manifest(manifest(files::kRecaptioned), out);
    return {{"recaptioned", n}};
  }

  Counts library() {
    auto recs = records(files::kRecaptioned);
    auto filter = c_.library_quality == "ultra" ? captioning::QualityFilter::UltraHigh : captioning::QualityFilter::Any;
    auto lib = captioning::build_library(recs, *p_.embed, filter);
    lib.save(manifest(files::kLibrary));
    return {{"entries", lib.size()}, {"dishes", lib.dish_names().size()}};
  }

  Counts schedule() {
    auto recs = records(files::kRecaptioned);
    Counts counts;
    for (int s = 1; s <= 4; ++s) {
      std::vector<schedule::TrainSample> rows;
      try {
        rows = schedule::build_stage_manifest(s, recs);
      } catch (const Error& e) {
        if (e.code() != Errc::EmptyStage) throw;
        spdlog::warn("schedule: stage {} has no eligible records", s);
      }
      counts["stage" + std::to_string(s)] = write_manifest(stage_file(s), rows);
    }
    std::vector<schedule::PreferenceRow> prefs;
    auto decided = decided_preferences();
    if (!decided.empty()) prefs = schedule::build_preference_manifest(decided);
    counts["stage5"] = write_manifest(stage_file(5), prefs);
    return counts;
  }

  // Decided pairs from the preference queue, empty until annotators act.
  std::vector<PreferencePair> decided_preferences() const {
    if (!fs::exists(manifest(files::kPreferenceQueue))) return {};
    review::PreferenceQueue queue;
    queue.load(manifest(files::kPreferenceQueue));
    return queue.decided_pairs();
  }

  Counts editset() {
    auto recs = records(files::kRecaptioned);
    auto plan = editset::plan_concept_enhancement(c_.concept_name, c_.concept_prompts, c_.n_target, c_.source_fraction);
    Json plan_row;
    to_json(plan_row, plan);
    write_json_rows(manifest(files::kConceptPlan), {plan_row}, "concept");

    auto run = editset::run_concept_enhancement(plan, *p_.generation, *p_.finetune, {.seed_base = c_.seed});
    write_manifest(manifest(files::kProvenance), run.provenance);

    auto pairs = editset::build_cep2p_pairs(c_.source_prompt, c_.target_prompt, c_.instruction, run.checkpoint_id,
                                            c_.rho_grid, c_.seeds, *p_.generation);
    const std::size_t n_cep2p = pairs.size();
    std::vector<DishRecord> curated;
    std::copy_if(recs.begin(), recs.end(), std::back_inserter(curated), [](const auto& r) {
      return r.status == RecordStatus::Tagged || r.status == RecordStatus::Recaptioned;
    });
    for (auto& batch : parallel_map(curated, c_.concurrency, [this](const DishRecord& r) {
           return editset::build_inpaint_pairs(r, *p_.vision, *p_.tools);
         })) {
      pairs.insert(pairs.end(), batch.begin(), batch.end());
    }
    write_manifest(manifest(files::kCandidates), pairs);
    const std::size_t queued = merge_into_queue<review::ReviewQueue>(manifest(files::kEditQueue), pairs,
                                                                     [](const auto& p) { return p.pair_id; });

    std::vector<std::string> prompts;
    for (const auto& r : curated) {
      if (prompts.size() >= c_.preference_prompts) break;
      if (r.recaption) prompts.push_back(*r.name_final + ", " + *r.recaption);
    }
    auto items = review::build_preference_items(prompts, *p_.generation, run.checkpoint_id, c_.seed + 1'000'000);
    const std::size_t pref_queued = merge_into_queue<review::PreferenceQueue>(
        manifest(files::kPreferenceQueue), items, [](const auto& i) { return i.item_id; });

    std::size_t degenerate = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) {
      return std::find(p.flags.begin(), p.flags.end(), editset::kDegenerateFlag) != p.flags.end();
    });
    return {{"cep2p", n_cep2p},     {"inpaint", pairs.size() - n_cep2p}, {"degenerate", degenerate},
            {"queued", queued},     {"preference_items", pref_queued},   {"concept_images", run.provenance.size()}};
  }

  Counts evaluate() {
    auto recs = records(files::kRecaptioned);
    std::vector<DishRecord> sample;
    std::copy_if(recs.begin(), recs.end(), std::back_inserter(sample),
                 [](const auto& r) { return r.status == RecordStatus::Recaptioned; });
    std::sort(sample.begin(), sample.end(), [](const auto& a, const auto& b) { return a.record_id < b.record_id; });
    if (sample.size() > c_.eval_samples) sample.resize(c_.eval_samples);
    if (sample.size() < 2) fail(Errc::InsufficientSamples, "eval needs at least two recaptioned records");
    const auto lib = captioning::CaptionLibrary::load(manifest(files::kLibrary));

    std::vector<EmbeddingVector> real;
    std::vector<EmbeddingVector> generated;
    std::vector<double> dishsim;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const auto& r = sample[i];
      const std::string name = r.name_final.value_or(r.name_raw);
      const auto prompt = captioning::enhance_prompt(lib, name, name, *p_.chat, *p_.embed);
      const auto image = p_.generation->generate(prompt, c_.seed + i, editset::kDefaultBaseCheckpoint);
      real.push_back(p_.embed->embed_image(r.image));
      generated.push_back(p_.embed->embed_image(image));
      dishsim.push_back(eval::dish_similarity(name, image, *p_.embed));
    }
    Json report{{"samples", sample.size()},
                {"fid", eval::fid(real, generated)},
                {"dish_similarity", eval::mean(dishsim)},
                {"human", Json::array()}};
    if (!c_.human_scores.empty() && fs::exists(c_.human_scores)) {
      std::vector<eval::HumanScoreSheet> sheets;
      for (const auto& row : read_json_rows(c_.human_scores)) sheets.push_back(eval::score_sheet_from_json(row));
      for (const auto& s : eval::aggregate_scores(sheets)) {
        report["human"].push_back(Json{{"dimension", eval::dimension_name(s.dimension)}, {"mean", s.mean}, {"count", s.count}});
      }
    }
    write_single_json(manifest(files::kEvalReport), report);
    return {{"samples", sample.size()}};
  }

  const PipelineConfig& c_;
  std::shared_ptr<BlobStore> blobs_;
  providers::ProviderSet p_;
};

}  // namespace

bool RunReport::all_skipped() const {
  return std::all_of(stages.begin(), stages.end(), [](const auto& s) { return s.skipped; });
}

std::size_t RunReport::ran() const {
  return std::count_if(stages.begin(), stages.end(), [](const auto& s) { return !s.skipped; });
}

Json RunReport::to_json() const {
  Json j = Json::array();
  for (const auto& s : stages) {
    j.push_back(Json{{"stage", s.stage}, {"skipped", s.skipped}, {"input_hash", s.input_hash}, {"counts", s.counts}});
  }
  return j;
}

WorkspaceLock::WorkspaceLock(const fs::path& workspace) : path_(workspace / ".dishforge.lock") {
  fs::create_directories(workspace);
  for (int attempt = 0; attempt < 2; ++attempt) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid());
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    std::ifstream in(path_);
    long holder = 0;
    in >> holder;
    if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM)) {
      fail(Errc::WorkspaceLocked, workspace.string() + " is locked by pid " + std::to_string(holder));
    }
    spdlog::warn("removing stale lock {} (pid {})", path_.string(), holder);
    fs::remove(path_);
  }
  fail(Errc::WorkspaceLocked, "cannot lock " + workspace.string());
}

WorkspaceLock::~WorkspaceLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

providers::ProviderSet make_providers(const PipelineConfig& config, std::shared_ptr<BlobStore> blobs) {
  if (config.mock) {
    return providers::MockProvider::make_set(std::move(blobs), providers::MockOptions{.seed = config.seed, .dims = config.embed_dims});
  }
  providers::GatewayOptions opts;
  opts.max_in_flight = config.concurrency;
  opts.embed_dims = config.embed_dims;
  auto gw = [&](std::string_view role) {
    return std::make_shared<providers::HttpGateway>(config.endpoint_for(role), blobs, opts);
  };
  return providers::ProviderSet{gw("chat"), gw("vision"), gw("embed"), gw("tools"), gw("generation"), gw("finetune")};
}

void check_stage_list(const std::vector<std::string>& stages) {
  if (stages.empty()) fail(Errc::ConfigInvalid, "no stages requested");
  std::size_t last = 0;
  bool first = true;
  for (const auto& s : stages) {
    auto it = std::find(kStages.begin(), kStages.end(), s);
    if (it == kStages.end()) fail(Errc::ConfigInvalid, "unknown stage '" + s + "'");
    const auto pos = static_cast<std::size_t>(it - kStages.begin());
    if (!first && pos <= last) fail(Errc::ConfigInvalid, "stages must be distinct and in pipeline order");
    last = pos;
    first = false;
  }
}

std::vector<DishRecord> synthesize_corpus(std::shared_ptr<BlobStore> blobs, std::size_t n, std::uint64_t seed) {
  static constexpr std::string_view kDishes[] = {"宫保鸡丁", "麻婆豆腐", "红烧肉",   "鱼香肉丝", "回锅肉",
                                                 "酸菜鱼",   "水煮牛肉", "小笼包",   "担担面",   "糖醋排骨",
                                                 "清蒸鲈鱼", "干煸四季豆", "西红柿炒鸡蛋", "京酱肉丝", "辣子鸡"};
  static constexpr std::string_view kGarnish[] = {"coriander", "peppers", "scallion", "sesame", "peanuts", "chili"};
  providers::MockProvider mock(std::move(blobs), providers::MockOptions{.seed = seed});
  DeterministicRng rng(hash_u64({"corpus", std::to_string(seed)}));
  std::vector<DishRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string dish(kDishes[rng.below(std::size(kDishes))]);
    std::string prompt = dish;
    if (rng.below(4) != 0) prompt += " with " + std::string(kGarnish[rng.below(std::size(kGarnish))]);
    DishRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "rec-%05zu", i);
    r.record_id = id;
    switch (rng.below(6)) {
      case 0: r.name_raw = std::string(providers::kMarketingPrefixes[rng.below(std::size(providers::kMarketingPrefixes))]) + dish; break;
      case 1: r.name_raw = dish + "（大份）"; break;
      case 2: r.name_raw = dish + " 满30减5"; break;
      default: r.name_raw = dish; break;
    }
    r.image = mock.generate(prompt, rng.next() % 1'000'000, "photo");
    out.push_back(std::move(r));
  }
  return out;
}

RunReport run_pipeline(const PipelineConfig& config, const std::vector<std::string>& stages,
                       std::optional<providers::ProviderSet> providers) {
  config.validate();
  check_stage_list(stages);
  WorkspaceLock lock(config.workspace);
  fs::create_directories(config.manifest_dir());
  fs::create_directories(config.workspace / "markers");
  auto blobs = std::make_shared<BlobStore>(config.blob_root());
  Runner runner(config, blobs, providers ? std::move(*providers) : make_providers(config, blobs));

  RunReport report;
  for (const auto& stage : stages) {
    StageOutcome outcome;
    outcome.stage = stage;
    try {
      StageDef def = runner.define(stage);
      for (const auto& in : def.inputs) require_input(in);
      outcome.input_hash = input_hash(stage, def, config.section(stage));
      const fs::path marker = config.workspace / "markers" / (stage + ".json");
      const bool outputs_present =
          std::all_of(def.outputs.begin(), def.outputs.end(), [](const auto& p) { return fs::exists(p); });
      if (outputs_present && marker_hash(marker) == outcome.input_hash) {
        outcome.skipped = true;
        spdlog::info("{}: unchanged, skipped", stage);
      } else {
        fs::remove(marker);
        outcome.counts = def.run();
        write_single_json(marker, Json{{"stage", stage}, {"input_hash", outcome.input_hash}});
        spdlog::info("{}: done", stage);
      }
    } catch (const Error& e) {
      throw Error(Errc::StageFailed, stage, e);
    } catch (const std::exception& e) {
      throw Error(Errc::StageFailed, stage, Error(Errc::IoFailure, e.what()));
    }
    report.stages.push_back(std::move(outcome));
  }
  return report;
}

}  // namespace dishforge::pipeline
