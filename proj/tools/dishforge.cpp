// dishforge command-line entry point.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <pthread.h>
#include <spdlog/sinks/stdout_color_sinks.h>

#include <csignal>
#include <fstream>
#include <iostream>

#include "dishforge/blob_store.hpp"
#include "dishforge/captioning.hpp"
#include "dishforge/config.hpp"
#include "dishforge/curation.hpp"
#include "dishforge/editset.hpp"
#include "dishforge/error.hpp"
#include "dishforge/eval.hpp"
#include "dishforge/manifest.hpp"
#include "dishforge/pipeline.hpp"
#include "dishforge/providers/mock.hpp"
#include "dishforge/providers/wire_server.hpp"
#include "dishforge/review.hpp"
#include "dishforge/review_server.hpp"
#include "dishforge/schedule.hpp"
#include "dishforge/text.hpp"

namespace fs = std::filesystem;
using namespace dishforge;

namespace {

struct Globals {
  std::optional<fs::path> config_path;
  std::optional<fs::path> workspace;
  std::optional<std::uint64_t> seed;
  bool mock = false;
  std::string log_level = "info";
};

// Resolved lazily so subcommands that never touch a provider work without
// endpoints configured.
class Context {
 public:
  explicit Context(const Globals& g) : g_(g) {}

  PipelineConfig& config() {
    if (!config_) {
      config_ = resolve_config(g_.config_path);
      if (g_.workspace) config_->workspace = *g_.workspace;
      if (g_.seed) config_->seed = *g_.seed;
      if (g_.mock) config_->mock = true;
    }
    return *config_;
  }

  std::shared_ptr<BlobStore> blobs() {
    if (!blobs_) blobs_ = std::make_shared<BlobStore>(config().blob_root());
    return blobs_;
  }

  providers::ProviderSet& providers() {
    if (!providers_) {
      config().validate();
      providers_ = pipeline::make_providers(config(), blobs());
    }
    return *providers_;
  }

  fs::path manifest(std::string_view name) { return config().manifest_dir() / std::string(name); }

 private:
  const Globals& g_;
  std::optional<PipelineConfig> config_;
  std::shared_ptr<BlobStore> blobs_;
  std::optional<providers::ProviderSet> providers_;
};

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<std::string> split_list(const std::string& raw, std::string_view sep) {
  std::vector<std::string> out;
  for (auto& part : text::split(raw, sep)) {
    if (auto t = text::trim(part); !t.empty()) out.push_back(t);
  }
  return out;
}

sigset_t shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// Must run before any server thread starts so every thread inherits the mask.
void block_shutdown_signals() {
  sigset_t set = shutdown_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

void wait_for_shutdown() {
  sigset_t set = shutdown_signals();
  int sig = 0;
  sigwait(&set, &sig);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dishforge: dish image data pipeline toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI config file (default: $DISHFORGE_CONFIG)");
  app.add_option("--workspace", g.workspace, "workspace directory (blobs, manifests, markers)");
  app.add_option("--seed", g.seed, "global seed for mock providers and sampling");
  app.add_flag("--mock", g.mock, "use deterministic mock providers for every role");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error")->capture_default_str();
  Context ctx(g);
  std::function<void()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic Raw corpus over mock-generated photos");
  std::size_t synth_n = 50;
  fs::path synth_out;
  synth->add_option("-n,--count", synth_n, "number of records")->capture_default_str();
  synth->add_option("--out", synth_out, "output manifest")->required();
  synth->callback([&] {
    action = [&] {
      auto rows = pipeline::synthesize_corpus(ctx.blobs(), synth_n, ctx.config().seed);
      std::cout << write_manifest(synth_out, rows) << " records -> " << synth_out << "\n";
    };
  });

  // ingest
  auto* ingest = app.add_subcommand("ingest", "import {record_id, name, image_path} rows into the blob store");
  fs::path ingest_in, ingest_out;
  ingest->add_option("--in", ingest_in, "input rows")->required();
  ingest->add_option("--out", ingest_out, "Raw record manifest")->required();
  ingest->callback([&] {
    action = [&] {
      std::vector<DishRecord> rows;
      for (const auto& j : read_json_rows(ingest_in)) {
        fs::path image = j.at("image_path").get<std::string>();
        if (image.is_relative()) image = ingest_in.parent_path() / image;
        std::ifstream in(image, std::ios::binary);
        if (!in) fail(Errc::IoFailure, "cannot read " + image.string());
        Bytes bytes((std::istreambuf_iterator<char>(in)), {});
        DishRecord r;
        r.record_id = j.at("record_id").get<std::string>();
        r.name_raw = text::canonical_name(j.at("name").get<std::string>());
        r.image = ctx.blobs()->put(bytes);
        rows.push_back(std::move(r));
      }
      std::cout << write_manifest(ingest_out, rows) << " records -> " << ingest_out << "\n";
    };
  });

  // annotate
  auto* annotate = app.add_subcommand("annotate", "apply manual quality annotations");
  fs::path ann_in, ann_quality, ann_out;
  annotate->add_option("--in", ann_in, "record manifest")->required();
  annotate->add_option("--quality", ann_quality, "rows {record_id, quality: Standard|UltraHigh}")->required();
  annotate->add_option("--out", ann_out, "output manifest")->required();
  annotate->callback([&] {
    action = [&] {
      auto rows = read_manifest<DishRecord>(ann_in);
      auto n = import_quality_annotations(rows, ann_quality.string());
      write_manifest(ann_out, rows);
      std::cout << n << " records annotated\n";
    };
  });

  // curate
  auto* curate = app.add_subcommand("curate", "filter, name-correct and tag Raw records");
  fs::path cur_in, cur_out;
  std::optional<double> cur_tau;
  curate->add_option("--in", cur_in, "Raw record manifest")->required();
  curate->add_option("--out", cur_out, "curated manifest")->required();
  curate->add_option("--threshold", cur_tau, "similarity threshold (default from config, 0.35)");
  curate->callback([&] {
    action = [&] {
      const double tau = cur_tau.value_or(ctx.config().threshold);
      auto rows = read_manifest<DishRecord>(cur_in);
      for (auto& r : rows) {
        if (r.status == RecordStatus::Raw) r = curation::curate_record(r, ctx.providers(), tau);
      }
      std::cout << write_manifest(cur_out, rows) << " records -> " << cur_out << "\n";
    };
  });

  // recaption
  auto* recap = app.add_subcommand("recaption", "two-stage recaption of Tagged records");
  fs::path rec_in, rec_out;
  recap->add_option("--in", rec_in, "curated manifest")->required();
  recap->add_option("--out", rec_out, "recaptioned manifest")->required();
  recap->callback([&] {
    action = [&] {
      auto rows = read_manifest<DishRecord>(rec_in);
      auto& p = ctx.providers();
      for (auto& r : rows) {
        if (r.status == RecordStatus::Tagged) r = captioning::recaption_record(r, *p.chat, *p.vision);
      }
      std::cout << write_manifest(rec_out, rows) << " records -> " << rec_out << "\n";
    };
  });

  // library
  auto* library = app.add_subcommand("library", "caption library");
  library->require_subcommand(1);
  auto* lib_build = library->add_subcommand("build", "embed recaptions into a caption library");
  fs::path lib_in, lib_out;
  bool lib_ultra = false;
  lib_build->add_option("--in", lib_in, "recaptioned manifest")->required();
  lib_build->add_option("--out", lib_out, "library file")->required();
  lib_build->add_flag("--ultra", lib_ultra, "UltraHigh records only");
  lib_build->callback([&] {
    action = [&] {
      auto rows = read_manifest<DishRecord>(lib_in);
      auto lib = captioning::build_library(rows, *ctx.providers().embed,
                                           lib_ultra ? captioning::QualityFilter::UltraHigh : captioning::QualityFilter::Any);
      lib.save(lib_out);
      std::cout << lib.size() << " entries -> " << lib_out << "\n";
    };
  });

  // prompt
  auto* prompt = app.add_subcommand("prompt", "enhance a user prompt against the caption library");
  fs::path pr_lib;
  std::string pr_dish, pr_text;
  prompt->add_option("--library", pr_lib, "library file")->required();
  prompt->add_option("--dish", pr_dish, "dish name")->required();
  prompt->add_option("--text", pr_text, "user text (defaults to the dish name)");
  prompt->callback([&] {
    action = [&] {
      auto lib = captioning::CaptionLibrary::load(pr_lib);
      auto& p = ctx.providers();
      std::cout << captioning::enhance_prompt(lib, pr_text.empty() ? pr_dish : pr_text, pr_dish, *p.chat, *p.embed) << "\n";
    };
  });

  // schedule
  auto* sched = app.add_subcommand("schedule", "build coarse-to-fine stage manifests");
  fs::path sch_in, sch_out_dir, sch_prefs;
  std::vector<int> sch_stages = {1, 2, 3, 4};
  sched->add_option("--in", sch_in, "recaptioned manifest")->required();
  sched->add_option("--out-dir", sch_out_dir, "directory for stageN.jsonl")->required();
  sched->add_option("--stage", sch_stages, "stages to build (1-4)")->capture_default_str();
  sched->add_option("--preferences", sch_prefs, "preference queue; writes stage5.jsonl from decided items");
  sched->callback([&] {
    action = [&] {
      auto rows = read_manifest<DishRecord>(sch_in);
      fs::create_directories(sch_out_dir);
      for (int s : sch_stages) {
        auto samples = schedule::build_stage_manifest(s, rows);
        auto path = sch_out_dir / ("stage" + std::to_string(s) + ".jsonl");
        std::cout << "stage " << s << ": " << write_manifest(path, samples) << " samples -> " << path << "\n";
      }
      if (!sch_prefs.empty()) {
        review::PreferenceQueue q;
        q.load(sch_prefs);
        auto decided = q.decided_pairs();
        auto path = sch_out_dir / "stage5.jsonl";
        std::cout << "stage 5: " << write_manifest(path, schedule::build_preference_manifest(decided)) << " pairs -> "
                  << path << "\n";
      }
    };
  });

  // mixture
  auto* mixture = app.add_subcommand("mixture", "sample one multi-task training batch");
  fs::path mix_dish, mix_general, mix_out;
  std::optional<double> mix_ratio;
  std::size_t mix_k = 64;
  mixture->add_option("--dish", mix_dish, "dish-task rows")->required();
  mixture->add_option("--general", mix_general, "general-task rows")->required();
  mixture->add_option("--ratio", mix_ratio, "dish fraction in (0, 1] (default from config, 0.5)");
  mixture->add_option("-k,--batch", mix_k, "batch size")->capture_default_str();
  mixture->add_option("--out", mix_out, "batch rows in sampled order")->required();
  mixture->callback([&] {
    action = [&] {
      auto dish = read_json_rows(mix_dish);
      auto general = read_json_rows(mix_general);
      schedule::MixtureSpec spec{mix_ratio.value_or(ctx.config().dish_ratio), ctx.config().seed};
      auto batch = schedule::sample_mixture<Json>(dish, general, spec, mix_k);
      std::vector<std::string> lines;
      for (auto& row : batch) lines.push_back(manifest_detail::serialize_row(row));
      manifest_detail::write_lines(mix_out, lines);
      std::cout << schedule::dish_count(mix_k, spec.dish_ratio) << " dish + "
                << mix_k - schedule::dish_count(mix_k, spec.dish_ratio) << " general -> " << mix_out << "\n";
    };
  });

  // editset
  auto* edits = app.add_subcommand("editset", "editing-pair construction and export");
  edits->require_subcommand(1);
  fs::path es_queue;
  auto enqueue = [&](const std::vector<editset::EditPair>& pairs) {
    review::ReviewQueue q;
    if (fs::exists(es_queue)) q.load(es_queue);
    std::vector<editset::EditPair> fresh;
    for (const auto& p : pairs) {
      try {
        q.get(p.pair_id);
      } catch (const Error& e) {
        if (e.code() != Errc::UnknownPair) throw;
        fresh.push_back(p);
      }
    }
    q.enqueue(fresh);
    q.save(es_queue);
    std::cout << fresh.size() << " pairs queued -> " << es_queue << "\n";
  };

  auto* cep2p = edits->add_subcommand("cep2p", "concept-enhanced prompt-to-prompt sweep");
  std::optional<std::string> ce_concept, ce_prompts, ce_src, ce_tgt, ce_instr, ce_rho, ce_seeds;
  std::optional<std::size_t> ce_n;
  std::optional<double> ce_fraction;
  fs::path ce_prov;
  cep2p->add_option("--concept", ce_concept, "concept, e.g. \"add steam\"");
  cep2p->add_option("--prompts", ce_prompts, "|-separated concept prompts");
  cep2p->add_option("--n-target", ce_n, "target-prompt images");
  cep2p->add_option("--source-fraction", ce_fraction, "source images per target image");
  cep2p->add_option("--source-prompt", ce_src, "P2P source prompt");
  cep2p->add_option("--target-prompt", ce_tgt, "P2P target prompt");
  cep2p->add_option("--instruction", ce_instr, "edit instruction");
  cep2p->add_option("--rho-grid", ce_rho, "comma-separated replacement fractions");
  cep2p->add_option("--seeds", ce_seeds, "comma-separated seeds");
  cep2p->add_option("--provenance", ce_prov, "provenance manifest (default: workspace)");
  cep2p->add_option("--queue", es_queue, "review queue file (default: workspace)");
  cep2p->callback([&] {
    action = [&] {
      auto& c = ctx.config();
      if (ce_concept) c.concept_name = *ce_concept;
      if (ce_prompts) c.concept_prompts = split_list(*ce_prompts, "|");
      if (ce_n) c.n_target = *ce_n;
      if (ce_fraction) c.source_fraction = *ce_fraction;
      if (ce_src) c.source_prompt = *ce_src;
      if (ce_tgt) c.target_prompt = *ce_tgt;
      if (ce_instr) c.instruction = *ce_instr;
      if (ce_rho) {
        c.rho_grid.clear();
        for (auto& r : split_list(*ce_rho, ",")) c.rho_grid.push_back(std::stod(r));
      }
      if (ce_seeds) {
        c.seeds.clear();
        for (auto& s : split_list(*ce_seeds, ",")) c.seeds.push_back(std::stoull(s));
      }
      auto& p = ctx.providers();
      auto plan = editset::plan_concept_enhancement(c.concept_name, c.concept_prompts, c.n_target, c.source_fraction);
      auto run = editset::run_concept_enhancement(plan, *p.generation, *p.finetune, {.seed_base = c.seed});
      if (ce_prov.empty()) ce_prov = ctx.manifest(pipeline::files::kProvenance);
      if (es_queue.empty()) es_queue = ctx.manifest(pipeline::files::kEditQueue);
      fs::create_directories(ce_prov.parent_path());
      fs::create_directories(es_queue.parent_path());
      write_manifest(ce_prov, run.provenance);
      std::cout << "checkpoint " << run.checkpoint_id << " from " << run.provenance.size() << " images\n";
      enqueue(editset::build_cep2p_pairs(c.source_prompt, c.target_prompt, c.instruction, run.checkpoint_id, c.rho_grid,
                                         c.seeds, *p.generation));
    };
  });

  auto* inpaint = edits->add_subcommand("inpaint", "bidirectional remove/add pairs from curated records");
  fs::path in_records;
  inpaint->add_option("--in", in_records, "curated manifest")->required();
  inpaint->add_option("--queue", es_queue, "review queue file (default: workspace)");
  inpaint->callback([&] {
    action = [&] {
      auto& p = ctx.providers();
      std::vector<editset::EditPair> pairs;
      for (const auto& r : read_manifest<DishRecord>(in_records)) {
        if (r.status != RecordStatus::Tagged && r.status != RecordStatus::Recaptioned) continue;
        auto batch = editset::build_inpaint_pairs(r, *p.vision, *p.tools);
        pairs.insert(pairs.end(), batch.begin(), batch.end());
      }
      if (es_queue.empty()) es_queue = ctx.manifest(pipeline::files::kEditQueue);
      fs::create_directories(es_queue.parent_path());
      enqueue(pairs);
    };
  });

  auto* exp = edits->add_subcommand("export", "write Approved pairs as the editing dataset");
  fs::path ex_out;
  exp->add_option("--queue", es_queue, "review queue file (default: workspace)");
  exp->add_option("--out", ex_out, "output manifest")->required();
  exp->callback([&] {
    action = [&] {
      if (es_queue.empty()) es_queue = ctx.manifest(pipeline::files::kEditQueue);
      review::ReviewQueue q;
      q.load(es_queue);
      std::cout << q.export_approved(ex_out) << " approved pairs -> " << ex_out << "\n";
    };
  });

  // review serve
  auto* review_cmd = app.add_subcommand("review", "human review server");
  review_cmd->require_subcommand(1);
  auto* serve = review_cmd->add_subcommand("serve", "serve the review API and UI");
  std::optional<fs::path> rv_queue, rv_prefs, rv_ui;
  std::optional<std::string> rv_bind;
  std::optional<int> rv_port;
  serve->add_option("--queue", rv_queue, "review queue file (default: workspace)");
  serve->add_option("--preferences", rv_prefs, "preference queue file (default: workspace)");
  serve->add_option("--ui-dir", rv_ui, "static UI assets");
  serve->add_option("--bind", rv_bind, "bind address");
  serve->add_option("--port", rv_port, "port");
  serve->callback([&] {
    action = [&] {
      auto& c = ctx.config();
      review::ReviewServerOptions opts;
      opts.queue_path = rv_queue.value_or(ctx.manifest(pipeline::files::kEditQueue));
      opts.preference_path = rv_prefs.value_or(ctx.manifest(pipeline::files::kPreferenceQueue));
      opts.ui_dir = rv_ui.value_or(c.ui_dir);
      opts.lease = std::chrono::minutes(c.lease_minutes);
      review::ReviewServer server(opts, ctx.blobs());
      const std::string host = rv_bind.value_or(c.bind_address);
      block_shutdown_signals();
      const int port = server.start(host, rv_port.value_or(c.port));
      spdlog::info("review server on http://{}:{}", host, port);
      wait_for_shutdown();
      server.stop();
      spdlog::info("queues saved");
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluation metrics");
  ev->require_subcommand(1);
  auto* ev_fid = ev->add_subcommand("fid", "Frechet distance between two embedding manifests");
  fs::path fid_a, fid_b;
  ev_fid->add_option("--a", fid_a, "rows with an `embedding` array")->required();
  ev_fid->add_option("--b", fid_b, "rows with an `embedding` array")->required();
  ev_fid->callback([&] {
    action = [&] {
      auto load = [](const fs::path& p) {
        std::vector<EmbeddingVector> out;
        for (const auto& j : read_json_rows(p)) out.push_back(j.at("embedding").get<EmbeddingVector>());
        return out;
      };
      print_json(Json{{"fid", eval::fid(load(fid_a), load(fid_b))}});
    };
  });
  auto* ev_sim = ev->add_subcommand("dishsim", "mean dish-name/image similarity over records");
  fs::path sim_in;
  ev_sim->add_option("--in", sim_in, "record manifest")->required();
  ev_sim->callback([&] {
    action = [&] {
      std::vector<double> sims;
      for (const auto& r : read_manifest<DishRecord>(sim_in)) {
        if (r.status == RecordStatus::Discarded) continue;
        sims.push_back(eval::dish_similarity(r.name_final.value_or(r.name_raw), r.image, *ctx.providers().embed));
      }
      print_json(Json{{"dish_similarity", eval::mean(sims)}, {"count", sims.size()}});
    };
  });
  auto* ev_human = ev->add_subcommand("human", "aggregate 1/2/3 human scores per dimension");
  fs::path hum_in;
  ev_human->add_option("--in", hum_in, "rows {dimension, scores: [...]}")->required();
  ev_human->callback([&] {
    action = [&] {
      std::vector<eval::HumanScoreSheet> sheets;
      for (const auto& j : read_json_rows(hum_in)) sheets.push_back(eval::score_sheet_from_json(j));
      Json out = Json::array();
      for (const auto& s : eval::aggregate_scores(sheets)) {
        out.push_back(Json{{"dimension", eval::dimension_name(s.dimension)}, {"mean", s.mean}, {"count", s.count}});
      }
      print_json(out);
    };
  });

  // run
  auto* run = app.add_subcommand("run", "run pipeline stages with resumable markers");
  std::string run_stages;
  std::optional<fs::path> run_input;
  run->add_option("--stages", run_stages, "comma-separated subset of curate,recaption,library,schedule,editset,eval");
  run->add_option("--input", run_input, "Raw record manifest (overrides [pipeline] input)");
  run->callback([&] {
    action = [&] {
      auto& c = ctx.config();
      if (run_input) c.input = *run_input;
      auto stages = run_stages.empty() ? pipeline::kStages : split_list(run_stages, ",");
      auto report = pipeline::run_pipeline(c, stages);
      print_json(report.to_json());
    };
  });

  // providers serve-mock
  auto* prov = app.add_subcommand("providers", "provider utilities");
  prov->require_subcommand(1);
  auto* serve_mock = prov->add_subcommand("serve-mock", "serve the mock providers over the wire protocol");
  std::string sm_host = "127.0.0.1";
  int sm_port = 8091;
  serve_mock->add_option("--bind", sm_host, "bind address")->capture_default_str();
  serve_mock->add_option("--port", sm_port, "port")->capture_default_str();
  serve_mock->callback([&] {
    action = [&] {
      auto blobs = ctx.blobs();
      providers::ProviderServer server(
          providers::MockProvider::make_set(blobs, providers::MockOptions{.seed = ctx.config().seed}), blobs);
      block_shutdown_signals();
      const int port = server.start(sm_host, sm_port);
      spdlog::info("mock providers on http://{}:{}", sm_host, port);
      wait_for_shutdown();
      server.stop();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("dishforge"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
