#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "dishforge/blob_store.hpp"
#include "dishforge/editset.hpp"
#include "dishforge/image.hpp"
#include "dishforge/manifest.hpp"
#include "dishforge/providers/mock.hpp"
#include "dishforge/review.hpp"
#include "support.hpp"

using namespace dishforge;
using namespace dishforge::editset;
using dishforge::review::PreferenceItem;
using dishforge::review::PreferenceQueue;
using dishforge::review::ReviewQueue;
using dishforge::testkit::error_of;
using dishforge::testkit::TempDir;

namespace {

class EditsetTest : public ::testing::Test {
 protected:
  TempDir dir;
  std::shared_ptr<BlobStore> blobs = std::make_shared<BlobStore>(dir.path());
  providers::MockProvider mock{blobs, providers::MockOptions{.seed = 2}};

  DishRecord curated(const std::string& id, const std::string& prompt) {
    DishRecord r;
    r.record_id = id;
    r.name_raw = r.name_final.emplace("宫保鸡丁");
    r.image = mock.generate(prompt, 7, "omni-dish-base");
    r.status = RecordStatus::Tagged;
    r.tags = TagSet{"bright", {}, {}, {}};
    return r;
  }
};

/// Counts generate calls on top of the mock.
class CountingGen : public providers::GenerationProvider {
 public:
  explicit CountingGen(providers::GenerationProvider& inner) : inner_(inner) {}
  ImageRef generate(std::string_view p, std::uint64_t s, std::string_view c) override {
    ++calls;
    return inner_.generate(p, s, c);
  }
  std::pair<ImageRef, ImageRef> generate_pair(std::string_view a, std::string_view b, double rho, std::uint64_t s,
                                              std::string_view c) override {
    ++calls;
    return inner_.generate_pair(a, b, rho, s, c);
  }
  int calls = 0;

 private:
  providers::GenerationProvider& inner_;
};

EditPair pending_pair(const std::string& id, char a, char b) {
  EditPair p;
  p.pair_id = id;
  p.source = testkit::fake_ref(a);
  p.target = testkit::fake_ref(b);
  p.instruction = "add steam";
  p.edit_type = EditType::Add;
  p.method = EditMethod::CEP2P;
  p.rho = 0.4;
  p.checkpoint = "ckpt";
  return p;
}

struct FakeClock {
  std::chrono::system_clock::time_point now{std::chrono::seconds(1'700'000'000)};
  review::Clock fn() {
    return [this] { return now; };
  }
};

}  // namespace

TEST(EditPairSchema, ValidationRules) {
  auto p = pending_pair("p1", '1', '2');
  EXPECT_NO_THROW(p.validate());
  Json j = p;
  EXPECT_EQ(j.get<EditPair>(), p);
  auto same = pending_pair("p2", '1', '1');
  EXPECT_EQ(error_of([&] { same.validate(); }), Errc::SchemaViolation);
  same.review = ReviewStatus::Rejected;
  EXPECT_NO_THROW(same.validate());
  auto no_rho = p;
  no_rho.rho.reset();
  EXPECT_EQ(error_of([&] { no_rho.validate(); }), Errc::SchemaViolation);
  auto inpaint_rho = p;
  inpaint_rho.method = EditMethod::Inpaint;
  EXPECT_EQ(error_of([&] { inpaint_rho.validate(); }), Errc::SchemaViolation);
  EXPECT_EQ(edit_type_for_instruction("Remove the chili"), EditType::Remove);
  EXPECT_EQ(edit_type_for_instruction("make it brighter"), EditType::Custom);
  EXPECT_EQ(error_of([] { review_status_from_name("Maybe"); }), Errc::SchemaViolation);
}

TEST(ConceptPlanning, CountsAndPartition) {
  std::vector<std::string> prompts{"noodles with steam", "a bowl of rice", "Steam rising from dumplings", "cold tofu"};
  auto plan = plan_concept_enhancement("add steam", prompts, 200, 0.25);
  EXPECT_EQ(plan.n_source, 50u);
  EXPECT_EQ(plan.target_prompts.size(), 2u);
  EXPECT_EQ(plan.source_prompts.size(), 2u);
  auto zero = plan_concept_enhancement("add steam", std::vector<std::string>{"steam buns"}, 4, 0.0);
  EXPECT_EQ(zero.n_source, 0u);
  EXPECT_TRUE(zero.source_prompts.empty());
  EXPECT_EQ(error_of([&] { plan_concept_enhancement("add steam", prompts, 0); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { plan_concept_enhancement("add steam", std::vector<std::string>{"rice"}, 3); }),
            Errc::NoPrompts);
  EXPECT_EQ(concept_object("add steam"), "steam");
}

TEST_F(EditsetTest, ConceptRunCallCountsAndReplay) {
  auto plan = plan_concept_enhancement("add steam", std::vector<std::string>{"buns with steam", "plain rice"}, 3, 0.34);
  ASSERT_EQ(plan.n_source, 1u);
  CountingGen gen(mock);
  auto run = run_concept_enhancement(plan, gen, mock, ConceptRunOptions{.seed_base = 100});
  EXPECT_EQ(gen.calls, 4);
  EXPECT_FALSE(run.checkpoint_id.empty());
  ASSERT_EQ(run.provenance.size(), 4u);
  for (const auto& p : run.provenance) EXPECT_EQ(p.checkpoint_id, run.checkpoint_id);

  auto again = run_concept_enhancement(plan, mock, mock, ConceptRunOptions{.seed_base = 100});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(again.provenance[i].blob_id, run.provenance[i].blob_id);

  providers::MockProvider failing(blobs, providers::MockOptions{.fail_finetune = true});
  EXPECT_EQ(error_of([&] { run_concept_enhancement(plan, failing, failing); }), Errc::FinetuneFailed);
}

TEST_F(EditsetTest, Cep2pGridAndMonotoneSimilarity) {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  CountingGen gen(mock);
  auto pairs = build_cep2p_pairs("rice", "rice with steam", "add steam", "ck", kDefaultRhoGrid, seeds, gen);
  EXPECT_EQ(pairs.size(), 20u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.review, ReviewStatus::Pending);
    EXPECT_EQ(p.edit_type, EditType::Add);
  }
  std::set<std::string> ids;
  for (const auto& p : pairs) ids.insert(p.pair_id);
  EXPECT_EQ(ids.size(), 20u);

  const std::vector<double> grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  auto sweep = build_cep2p_pairs("rice", "rice with steam", "add steam", "ck", grid, seeds, mock);
  for (auto seed : seeds) {
    double prev = 2;
    for (double rho : grid) {
      auto it = std::find_if(sweep.begin(), sweep.end(), [&](const EditPair& p) {
        return *p.rho == rho && p.source == mock.generate_pair("rice", "rice with steam", rho, seed, "ck").first;
      });
      ASSERT_NE(it, sweep.end());
      double sim = pixel_overlap(decode_png(blobs->get(it->source)), decode_png(blobs->get(it->target)));
      EXPECT_LE(sim, prev);
      prev = sim;
      if (rho == 0.0) {
        EXPECT_EQ(it->review, ReviewStatus::Rejected);
        EXPECT_NE(std::find(it->flags.begin(), it->flags.end(), kDegenerateFlag), it->flags.end());
      }
    }
  }
  gen.calls = 0;
  const std::vector<double> bad{0.2, 1.5};
  EXPECT_EQ(error_of([&] { build_cep2p_pairs("a", "b", "add x", "ck", bad, seeds, gen); }), Errc::InvalidRho);
  EXPECT_EQ(gen.calls, 0);
}

TEST_F(EditsetTest, InpaintPairsAreBidirectional) {
  auto r = curated("r1", "宫保鸡丁 with coriander");
  auto pairs = build_inpaint_pairs(r, mock, mock);
  ASSERT_EQ(pairs.size(), 2u);
  const auto& rm = pairs[0];
  const auto& add = pairs[1];
  EXPECT_EQ(rm.method, EditMethod::Inpaint);
  EXPECT_EQ(rm.edit_type, EditType::Remove);
  EXPECT_EQ(rm.instruction, "remove the coriander from the dish");
  EXPECT_EQ(add.method, EditMethod::InpaintReversed);
  EXPECT_EQ(add.edit_type, EditType::Add);
  EXPECT_EQ(add.instruction, "add coriander to the dish");
  EXPECT_EQ(add.source, rm.target);
  EXPECT_EQ(add.target, rm.source);
  EXPECT_EQ(rm.source, r.image);
  EXPECT_EQ(rm.origin, "r1");

  EXPECT_TRUE(build_inpaint_pairs(curated("r2", "plain white rice"), mock, mock).empty());
  auto raw = r;
  raw.status = RecordStatus::Filtered;
  EXPECT_EQ(error_of([&] { build_inpaint_pairs(raw, mock, mock); }), Errc::InvalidState);
}

TEST(ElementList, Parsing) {
  EXPECT_EQ(parse_element_list(R"(Sure: ["chili", " chili ", "", "sesame"])"),
            (std::vector<std::string>{"chili", "sesame"}));
  EXPECT_TRUE(parse_element_list("[]").empty());
  EXPECT_EQ(error_of([] { parse_element_list("chili and sesame"); }), Errc::MalformedResponse);
}

TEST(Provenance, OrphanCheckpointsAreReported) {
  auto p1 = pending_pair("p1", '1', '2');
  auto p2 = pending_pair("p2", '3', '4');
  p2.checkpoint = "other";
  std::vector<EditPair> pairs{p1, p2};
  std::vector<ProvenanceRow> prov{ProvenanceRow{"add steam", "target", "x", 0, std::string(64, 'a'), "j", "ckpt"}};
  EXPECT_EQ(orphan_cep2p_pairs(pairs, prov), (std::vector<std::string>{"p2"}));
}

TEST(ReviewGate, TransitionMatrix) {
  using RS = ReviewStatus;
  const std::vector<RS> all{RS::Pending, RS::Approved, RS::Rejected, RS::Skipped};
  auto allowed = [](RS from, RS to) {
    if (from == RS::Pending) return to != RS::Pending;
    if (from == RS::Skipped) return to == RS::Approved || to == RS::Rejected;
    return false;
  };
  for (RS from : all) {
    for (RS to : all) {
      ReviewQueue q;
      q.enqueue({pending_pair("p", '1', '2')});
      if (from != RS::Pending) q.verdict("p", from, "setup");
      auto code = error_of([&] { q.verdict("p", to, "alice"); });
      if (allowed(from, to)) {
        EXPECT_FALSE(code.has_value());
        EXPECT_EQ(q.get("p").review, to);
        EXPECT_EQ(q.get("p").reviewer, "alice");
      } else {
        ASSERT_TRUE(code.has_value());
        bool terminal = from == RS::Approved || from == RS::Rejected;
        EXPECT_EQ(*code, terminal ? Errc::AlreadyReviewed : Errc::InvalidState);
      }
    }
  }
  ReviewQueue q;
  EXPECT_EQ(error_of([&] { q.verdict("nope", RS::Approved, "a"); }), Errc::UnknownPair);
}

TEST(ReviewGate, ExportOnlyApproved) {
  TempDir dir;
  ReviewQueue q;
  q.enqueue({pending_pair("a", '1', '2'), pending_pair("b", '3', '4'), pending_pair("c", '5', '6')});
  EXPECT_EQ(q.export_approved(dir / "none.jsonl"), 0u);
  EXPECT_TRUE(testkit::slurp(dir / "none.jsonl").empty());
  q.verdict("b", ReviewStatus::Approved, "r");
  q.verdict("c", ReviewStatus::Rejected, "r");
  EXPECT_EQ(q.export_approved(dir / "x1.jsonl"), 1u);
  EXPECT_EQ(q.export_approved(dir / "x2.jsonl"), 1u);
  EXPECT_EQ(testkit::slurp(dir / "x1.jsonl"), testkit::slurp(dir / "x2.jsonl"));
  auto rows = read_manifest<EditPair>(dir / "x1.jsonl");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].pair_id, "b");
  EXPECT_EQ(q.stats().at("Approved"), 1u);
  EXPECT_EQ(q.stats().at("Pending"), 1u);
  EXPECT_EQ(error_of([&] { q.enqueue({pending_pair("a", '1', '2')}); }), Errc::InvalidArgument);
}

TEST(ReviewGate, LeasesKeepReviewersApartAndExpire) {
  FakeClock clock;
  ReviewQueue q(std::chrono::minutes(10), clock.fn());
  q.enqueue({pending_pair("a", '1', '2'), pending_pair("b", '3', '4')});
  auto first = q.next("alice");
  EXPECT_EQ(q.next("alice").pair_id, first.pair_id);
  auto second = q.next("bob");
  EXPECT_NE(first.pair_id, second.pair_id);
  EXPECT_EQ(error_of([&] { q.next("carol"); }), Errc::NothingPending);
  clock.now += std::chrono::minutes(11);
  EXPECT_NO_THROW(q.next("carol"));

  q.verdict("a", ReviewStatus::Skipped, "alice");
  q.verdict("b", ReviewStatus::Approved, "bob");
  EXPECT_EQ(error_of([&] { q.next("dave"); }), Errc::NothingPending);
  EXPECT_EQ(q.next("dave", true).pair_id, "a");
}

TEST(ReviewGate, ConcurrentNextHandsOutDistinctPairs) {
  ReviewQueue q;
  std::vector<EditPair> pairs;
  for (int i = 0; i < 8; ++i) pairs.push_back(pending_pair("p" + std::to_string(i), "0123456789"[i], 'f'));
  q.enqueue(pairs);
  std::vector<std::string> got(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { got[i] = q.next("rev" + std::to_string(i)).pair_id; });
  for (auto& t : threads) t.join();
  EXPECT_EQ(std::set<std::string>(got.begin(), got.end()).size(), 8u);
}

TEST(ReviewGate, SaveLoadKeepsStateAndLeases) {
  TempDir dir;
  FakeClock clock;
  ReviewQueue q(std::chrono::minutes(10), clock.fn());
  q.enqueue({pending_pair("a", '1', '2'), pending_pair("b", '3', '4')});
  auto held = q.next("alice");
  q.verdict("b", ReviewStatus::Rejected, "bob");
  q.save(dir / "q.jsonl");
  ReviewQueue back(std::chrono::minutes(10), clock.fn());
  back.load(dir / "q.jsonl");
  EXPECT_EQ(back.snapshot(), q.snapshot());
  EXPECT_EQ(error_of([&] { back.next("carol"); }), Errc::NothingPending);
  EXPECT_EQ(back.next("alice").pair_id, held.pair_id);
  EXPECT_EQ(review::format_timestamp(clock.now), "2023-11-14T22:13:20.000Z");
}

TEST_F(EditsetTest, PreferenceQueueLifecycle) {
  auto items = review::build_preference_items({"宫保鸡丁, glossy", "麻婆豆腐, red oil"}, mock, "omni-dish-base", 5);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_NE(items[0].image_a, items[0].image_b);
  PreferenceQueue q;
  q.enqueue(items);
  auto first = q.next("ann");
  auto decided = q.choose(first.item_id, PreferenceItem::Choice::B, "ann");
  EXPECT_EQ(decided.state, PreferenceItem::State::Decided);
  auto pair = decided.to_pair();
  ASSERT_TRUE(pair.has_value());
  EXPECT_EQ(pair->image_win, first.image_b);
  EXPECT_EQ(pair->image_lose, first.image_a);
  EXPECT_EQ(error_of([&] { q.choose(first.item_id, PreferenceItem::Choice::A, "ann"); }), Errc::AlreadyReviewed);
  auto second = q.next("ann");
  q.choose(second.item_id, std::nullopt, "ann");
  EXPECT_EQ(error_of([&] { q.choose(second.item_id, std::nullopt, "ann"); }), Errc::InvalidState);
  EXPECT_EQ(q.decided_pairs().size(), 1u);
  EXPECT_EQ(q.stats().at("Skipped"), 1u);
  EXPECT_EQ(error_of([&] { q.choose("pref-missing", std::nullopt, "ann"); }), Errc::UnknownPair);
}
