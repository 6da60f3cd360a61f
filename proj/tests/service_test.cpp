#include <gtest/gtest.h>
#include <httplib.h>

#include <cstdlib>
#include <set>
#include <thread>

#include "dishforge/config.hpp"
#include "dishforge/editset.hpp"
#include "dishforge/image.hpp"
#include "dishforge/manifest.hpp"
#include "dishforge/pipeline.hpp"
#include "dishforge/review.hpp"
#include "dishforge/review_server.hpp"
#include "support.hpp"

using namespace dishforge;
using dishforge::testkit::error_of;
using dishforge::testkit::TempDir;
namespace fs = std::filesystem;

namespace {

PipelineConfig mock_config(const TempDir& dir, std::size_t n_records, std::uint64_t seed = 1) {
  PipelineConfig c;
  c.workspace = dir / "ws";
  c.mock = true;
  c.seed = seed;
  c.concurrency = 2;
  c.eval_samples = 6;
  c.input = dir / "raw.jsonl";
  auto blobs = std::make_shared<BlobStore>(c.blob_root());
  write_manifest(c.input, pipeline::synthesize_corpus(blobs, n_records, seed));
  return c;
}

std::map<std::string, std::string> manifests(const PipelineConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(c.manifest_dir())) out[e.path().filename().string()] = testkit::slurp(e.path());
  return out;
}

}  // namespace

TEST(Config, LoadsIniWithRelativePaths) {
  TempDir dir;
  testkit::spit(dir / "df.ini", R"([pipeline]
workspace = ws
input = data/raw.jsonl
seed = 7
mock = true

[curation]
threshold = 0.5

[editset]
prompts = steamed buns with steam | plain rice
rho_grid = 0.1, 0.3
seeds = 4,5

[review]
port = 9000
)");
  auto c = load_config(dir / "df.ini");
  EXPECT_EQ(c.workspace, dir / "ws");
  EXPECT_EQ(c.input, dir / "data/raw.jsonl");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_TRUE(c.mock);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);
  EXPECT_EQ(c.concept_prompts, (std::vector<std::string>{"steamed buns with steam", "plain rice"}));
  EXPECT_EQ(c.rho_grid, (std::vector<double>{0.1, 0.3}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.port, 9000);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  TempDir dir;
  testkit::spit(dir / "a.ini", "[curation]\ntreshold = 0.4\n");
  EXPECT_EQ(error_of([&] { load_config(dir / "a.ini"); }), Errc::ConfigInvalid);
  testkit::spit(dir / "b.ini", "[pipeline]\nmock = true\n[editset]\nrho_grid = 0.2, 1.4\n");
  EXPECT_EQ(error_of([&] { load_config(dir / "b.ini"); }), Errc::ConfigInvalid);
  testkit::spit(dir / "c.ini", "[pipeline]\nmock = false\n[providers]\nchat = http://127.0.0.1:1\n");
  EXPECT_EQ(error_of([&] { load_config(dir / "c.ini"); }), Errc::ConfigInvalid);
  testkit::spit(dir / "d.ini", "[nonsense]\nx = 1\n");
  EXPECT_EQ(error_of([&] { load_config(dir / "d.ini"); }), Errc::ConfigInvalid);
  EXPECT_EQ(error_of([&] { load_config(dir / "missing.ini"); }), Errc::IoFailure);
}

TEST(Config, EnvironmentVariableSelectsFile) {
  TempDir dir;
  testkit::spit(dir / "env.ini", "[pipeline]\nmock = true\nseed = 99\n");
  ::setenv(std::string(kConfigEnvVar).c_str(), (dir / "env.ini").c_str(), 1);
  EXPECT_EQ(resolve_config(std::nullopt).seed, 99u);
  ::unsetenv(std::string(kConfigEnvVar).c_str());
  EXPECT_EQ(resolve_config(std::nullopt).seed, 0u);
}

TEST(Pipeline, StageListMustBeCanonicalOrder) {
  EXPECT_NO_THROW(pipeline::check_stage_list({"curate", "library"}));
  EXPECT_EQ(error_of([] { pipeline::check_stage_list({"library", "curate"}); }), Errc::ConfigInvalid);
  EXPECT_EQ(error_of([] { pipeline::check_stage_list({"curate", "curate"}); }), Errc::ConfigInvalid);
  EXPECT_EQ(error_of([] { pipeline::check_stage_list({}); }), Errc::ConfigInvalid);
  EXPECT_EQ(error_of([] { pipeline::check_stage_list({"bake"}); }), Errc::ConfigInvalid);
}

TEST(Pipeline, FullMockRunThenEverythingSkips) {
  TempDir dir;
  auto c = mock_config(dir, 24);
  auto first = pipeline::run_pipeline(c);
  EXPECT_EQ(first.ran(), pipeline::kStages.size());
  auto m = manifests(c);
  for (auto name : {"curated.jsonl", "recaptioned.jsonl", "library.jsonl", "stage1.jsonl", "stage5.jsonl",
                    "edit_queue.jsonl", "preference_queue.jsonl", "concept_provenance.jsonl", "eval_report.json"}) {
    EXPECT_TRUE(m.count(name)) << name;
  }
  auto curated = read_manifest<DishRecord>(c.manifest_dir() / "curated.jsonl");
  std::size_t kept = std::count_if(curated.begin(), curated.end(),
                                   [](const auto& r) { return r.status == RecordStatus::Tagged; });
  EXPECT_GE(kept, curated.size() / 3);
  EXPECT_LT(kept, curated.size());

  auto second = pipeline::run_pipeline(c);
  EXPECT_TRUE(second.all_skipped());
  EXPECT_EQ(manifests(c), m);
}

TEST(Pipeline, ConfigChangeInvalidatesOnlyDependents) {
  TempDir dir;
  auto c = mock_config(dir, 12);
  pipeline::run_pipeline(c);
  c.dish_ratio = 0.7;
  auto report = pipeline::run_pipeline(c);
  for (const auto& s : report.stages) EXPECT_EQ(s.skipped, s.stage != "schedule") << s.stage;
}

TEST(Pipeline, ResumedRunMatchesUninterrupted) {
  TempDir a, b;
  auto ca = mock_config(a, 16, 5);
  auto cb = mock_config(b, 16, 5);
  pipeline::run_pipeline(ca);
  pipeline::run_pipeline(cb, {"curate", "recaption"});
  pipeline::run_pipeline(cb, {"library", "schedule", "editset", "eval"});
  EXPECT_EQ(manifests(ca), manifests(cb));
}

TEST(Pipeline, CorruptIntermediateFailsTheConsumingStage) {
  TempDir dir;
  auto c = mock_config(dir, 8);
  pipeline::run_pipeline(c, {"curate"});
  auto curated = c.manifest_dir() / "curated.jsonl";
  testkit::spit(curated, testkit::slurp(curated) + "{not json\n");
  try {
    pipeline::run_pipeline(c, {"recaption"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StageFailed);
    EXPECT_EQ(e.context(), "recaption");
    EXPECT_EQ(e.cause(), Errc::ParseError);
  }
}

TEST(Pipeline, MissingInputAndLockedWorkspace) {
  TempDir dir;
  PipelineConfig c;
  c.mock = true;
  c.workspace = dir / "ws";
  c.input = dir / "nope.jsonl";
  try {
    pipeline::run_pipeline(c, {"curate"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.cause(), Errc::IoFailure);
  }
  pipeline::WorkspaceLock held(c.workspace);
  EXPECT_EQ(error_of([&] { pipeline::WorkspaceLock again(c.workspace); }), Errc::WorkspaceLocked);
}

TEST(Pipeline, StaleLockIsTakenOver) {
  TempDir dir;
  fs::create_directories(dir / "ws");
  testkit::spit(dir / "ws" / ".dishforge.lock", "999999999\n");
  EXPECT_NO_THROW(pipeline::WorkspaceLock lock(dir / "ws"));
}

namespace {

class ReviewServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    blobs = std::make_shared<BlobStore>(dir.path());
    auto png = [&](int i) { return blobs->put(encode_png(Raster(4, 4, 3), {{"i", std::to_string(i)}})); };
    std::vector<editset::EditPair> pairs;
    for (int i = 0; i < 4; ++i) {
      editset::EditPair p;
      p.pair_id = "pair-" + std::to_string(i);
      p.source = png(2 * i);
      p.target = png(2 * i + 1);
      p.instruction = "remove the chili from the dish";
      p.edit_type = editset::EditType::Remove;
      p.method = editset::EditMethod::Inpaint;
      p.origin = "rec-" + std::to_string(i);
      pairs.push_back(p);
    }
    review::ReviewQueue q;
    q.enqueue(pairs);
    q.save(dir / "queue.jsonl");
    review::PreferenceQueue pq;
    review::PreferenceItem item;
    item.item_id = "pref-1";
    item.prompt = "宫保鸡丁";
    item.image_a = png(100);
    item.image_b = png(101);
    pq.enqueue({item});
    pq.save(dir / "prefs.jsonl");
    server = std::make_unique<review::ReviewServer>(
        review::ReviewServerOptions{dir / "queue.jsonl", dir / "prefs.jsonl", {}, review::kDefaultLease, {}}, blobs);
    port = server->start();
  }

  httplib::Client client() { return httplib::Client("127.0.0.1", port); }
  Json post(const std::string& path, const Json& body, int* status = nullptr) {
    auto res = client().Post(path, body.dump(), "application/json");
    if (status) *status = res->status;
    return Json::parse(res->body);
  }
  Json get(const std::string& path, int* status = nullptr) {
    auto res = client().Get(path);
    if (status) *status = res->status;
    return Json::parse(res->body);
  }

  TempDir dir;
  std::shared_ptr<BlobStore> blobs;
  std::unique_ptr<review::ReviewServer> server;
  int port = 0;
};

}  // namespace

TEST_F(ReviewServerTest, FreshStatsArePendingOnly) {
  auto stats = get("/api/stats");
  EXPECT_EQ(stats["Pending"], 4);
  EXPECT_EQ(stats["Approved"], 0);
  EXPECT_EQ(stats["Rejected"], 0);
  EXPECT_EQ(stats["Skipped"], 0);
}

TEST_F(ReviewServerTest, VerdictFlowsToExport) {
  auto next = get("/api/pairs/next?reviewer=alice");
  const std::string id = next["pair"]["pair_id"];
  EXPECT_EQ(next["images"]["source"]["url"], "/api/blobs/" + next["pair"]["source"]["blob_id"].get<std::string>());
  int status = 0;
  post("/api/pairs/" + id + "/verdict", {{"verdict", "Approved"}, {"reviewer", "alice"}}, &status);
  EXPECT_EQ(status, 200);
  post("/api/pairs/" + id + "/verdict", {{"verdict", "Rejected"}, {"reviewer", "bob"}}, &status);
  EXPECT_EQ(status, 409);
  auto err = post("/api/pairs/nope/verdict", {{"verdict", "Approved"}, {"reviewer", "bob"}}, &status);
  EXPECT_EQ(status, 404);
  EXPECT_EQ(err["error_code"], "UnknownPair");
  post("/api/pairs/" + id + "/verdict", {{"verdict", "Perhaps"}, {"reviewer", "bob"}}, &status);
  EXPECT_EQ(status, 400);

  server->stop();
  review::ReviewQueue reloaded;
  reloaded.load(dir / "queue.jsonl");
  EXPECT_EQ(reloaded.export_approved(dir / "approved.jsonl"), 1u);
  auto rows = read_manifest<editset::EditPair>(dir / "approved.jsonl");
  EXPECT_EQ(rows.at(0).pair_id, id);
}

TEST_F(ReviewServerTest, ConcurrentNextRequestsGetDistinctPairs) {
  std::vector<std::string> ids(4);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] { ids[i] = get("/api/pairs/next?reviewer=r" + std::to_string(i))["pair"]["pair_id"]; });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 4u);
  int status = 0;
  auto err = get("/api/pairs/next?reviewer=late", &status);
  EXPECT_EQ(status, 404);
  EXPECT_EQ(err["error_code"], "NothingPending");
}

TEST_F(ReviewServerTest, BlobsImagesAndPreferences) {
  auto images = get("/api/pairs/pair-0/images");
  const std::string blob = images["source"]["blob_id"];
  auto res = client().Get("/api/blobs/" + blob);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(Bytes(res->body.begin(), res->body.end()), blobs->get(blob));
  int status = 0;
  get("/api/blobs/" + std::string(64, '0'), &status);
  EXPECT_EQ(status, 404);

  auto item = get("/api/preference/next?reviewer=ann");
  EXPECT_EQ(item["item"]["item_id"], "pref-1");
  post("/api/preference/pref-1/verdict", {{"choice", "A"}, {"reviewer", "ann"}}, &status);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(get("/api/preference/stats")["Decided"], 1);
  post("/api/preference/pref-1/verdict", {{"choice", "Z"}, {"reviewer", "ann"}}, &status);
  EXPECT_EQ(status, 400);
  get("/api/pairs/next", &status);
  EXPECT_EQ(status, 400);
}

TEST(ReviewServerStartup, MissingQueueAndBusyPort) {
  TempDir dir;
  auto blobs = std::make_shared<BlobStore>(dir.path());
  EXPECT_EQ(error_of([&] { review::ReviewServer s({dir / "none.jsonl", {}, {}, review::kDefaultLease, {}}, blobs); }),
            Errc::IoFailure);
  review::ReviewQueue q;
  q.save(dir / "q.jsonl");
  review::ReviewServer a({dir / "q.jsonl", {}, {}, review::kDefaultLease, {}}, blobs);
  int port = a.start();
  review::ReviewServer b({dir / "q.jsonl", {}, {}, review::kDefaultLease, {}}, blobs);
  EXPECT_EQ(error_of([&] { b.start("127.0.0.1", port); }), Errc::BindFailure);
}
