#include <gtest/gtest.h>

#include <deque>

#include "dishforge/blob_store.hpp"
#include "dishforge/curation.hpp"
#include "dishforge/providers/mock.hpp"
#include "support.hpp"

using namespace dishforge;
using namespace dishforge::curation;
using dishforge::testkit::error_of;
using dishforge::testkit::TempDir;

namespace {

DishRecord raw_record(const std::string& id, const std::string& name, const ImageRef& image) {
  DishRecord r;
  r.record_id = id;
  r.name_raw = name;
  r.image = image;
  return r;
}

/// Replies from a fixed script, one per call.
class ScriptedChat : public providers::ChatProvider {
 public:
  explicit ScriptedChat(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  std::string chat(std::string_view) override {
    if (replies_.empty()) fail(Errc::ProviderUnavailable, "script exhausted");
    auto r = replies_.front();
    replies_.pop_front();
    return r;
  }

 private:
  std::deque<std::string> replies_;
};

class ScriptedVision : public providers::VisionProvider {
 public:
  explicit ScriptedVision(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  providers::FilterReport inspect_image(const ImageRef&) override { return {}; }
  std::string caption_image(const ImageRef&, std::string_view) override {
    ++calls;
    auto r = replies_.front();
    replies_.pop_front();
    return r;
  }
  int calls = 0;

 private:
  std::deque<std::string> replies_;
};

}  // namespace

TEST(Filter, ReasonOrderAndBounds) {
  auto base = raw_record("r", "鱼香肉丝", testkit::fake_ref('1', 512, 512));
  providers::FilterReport ok{false, false, false, BBox{10, 10, 200, 200}};
  EXPECT_EQ(filter_record(base, ok).status, RecordStatus::Filtered);

  auto all_bad = providers::FilterReport{true, true, true, std::nullopt};
  EXPECT_EQ(filter_record(base, all_bad).discard_reason, reason::kText);
  all_bad.has_text = false;
  EXPECT_EQ(filter_record(base, all_bad).discard_reason, reason::kWatermark);
  all_bad.has_watermark = false;
  EXPECT_EQ(filter_record(base, all_bad).discard_reason, reason::kHands);
  all_bad.has_hands = false;
  EXPECT_EQ(filter_record(base, all_bad).discard_reason, reason::kMissingBbox);
  providers::FilterReport left{false, false, false, BBox{-5, 10, 300, 300}};
  EXPECT_EQ(filter_record(base, left).discard_reason, reason::kIncompleteDish);

  auto filtered = filter_record(base, ok);
  EXPECT_EQ(error_of([&] { filter_record(filtered, ok); }), Errc::InvalidState);
}

TEST(NameDecisionRule, Examples) {
  auto keep = decide_name(true, 0.62, 0.55, 0.35, "raw", "fixed");
  EXPECT_EQ(keep.verdict, Verdict::KeepRaw);
  EXPECT_EQ(keep.name, "raw");
  auto drop = decide_name(true, 0.21, 0.24, 0.35, "raw", "fixed");
  EXPECT_EQ(drop.verdict, Verdict::Discard);
  EXPECT_EQ(drop.discard_reason, reason::kBelowThreshold);
  auto better = decide_name(true, 0.30, 0.50, 0.35, "raw", "fixed");
  EXPECT_EQ(better.verdict, Verdict::KeepCorrected);
  EXPECT_EQ(better.name, "fixed");
  auto tie = decide_name(true, 0.5, 0.5, 0.35, "raw", "fixed");
  EXPECT_EQ(tie.verdict, Verdict::KeepRaw);
  auto not_dish = decide_name(false, 0.9, 0.9, 0.35, "raw", "fixed");
  EXPECT_EQ(not_dish.discard_reason, reason::kNotADish);
}

TEST(NameCorrection, DiscountStringIsNotADish) {
  TempDir dir;
  auto blobs = std::make_shared<BlobStore>(dir.path());
  providers::MockProvider mock(blobs);
  auto img = mock.generate("鱼香肉丝", 1, "omni-dish-base");
  auto r = raw_record("r1", "满29减5", img);
  r.status = RecordStatus::Filtered;
  auto d = correct_name(r, mock, mock);
  EXPECT_EQ(d.verdict, Verdict::Discard);
  EXPECT_EQ(d.discard_reason, reason::kNotADish);
  EXPECT_FALSE(d.sim_raw.has_value());
}

TEST(NameCorrection, MarketingPrefixIsStripped) {
  TempDir dir;
  auto blobs = std::make_shared<BlobStore>(dir.path());
  providers::MockProvider mock(blobs);
  auto img = mock.generate("宫保鸡丁", 1, "omni-dish-base");
  auto r = raw_record("r1", "招牌宫保鸡丁", img);
  r.status = RecordStatus::Filtered;
  auto d = correct_name(r, mock, mock);
  EXPECT_EQ(d.verdict, Verdict::KeepCorrected);
  EXPECT_EQ(d.name, "宫保鸡丁");
  EXPECT_GT(*d.sim_corrected, *d.sim_raw);
  auto applied = apply_name_decision(r, d);
  EXPECT_EQ(applied.status, RecordStatus::Corrected);
  EXPECT_EQ(applied.name_final, "宫保鸡丁");
}

TEST(NameCorrection, ProviderFailuresWrapTheCause) {
  TempDir dir;
  auto blobs = std::make_shared<BlobStore>(dir.path());
  providers::MockProvider mock(blobs);
  auto r = raw_record("r9", "宫保鸡丁", mock.generate("宫保鸡丁", 1, "b"));
  r.status = RecordStatus::Filtered;
  ScriptedChat unclear({"maybe"});
  try {
    correct_name(r, unclear, mock);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorrectionFailed);
    EXPECT_EQ(e.cause(), Errc::MalformedResponse);
    EXPECT_EQ(e.context(), "r9");
  }
  ScriptedChat dead({});
  try {
    correct_name(r, dead, mock);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.cause(), Errc::ProviderUnavailable);
  }
  auto raw = raw_record("r10", "x", r.image);
  EXPECT_EQ(error_of([&] { correct_name(raw, mock, mock); }), Errc::InvalidState);
}

TEST(Tagging, PaperExampleRendersExactly) {
  TagSet t{"high aesthetic quality", "a white ceramic bowl", "a brown wooden tabletop", "30-degree shooting angle"};
  EXPECT_EQ(render_tags(t),
            "served in a white ceramic bowl, placed on a brown wooden tabletop, high aesthetic quality, 30-degree "
            "shooting angle");
  EXPECT_EQ(parse_rendered_tags(render_tags(t)), t);
  EXPECT_EQ(render_tags(TagSet{"high aesthetic quality", {}, {}, {}}), "high aesthetic quality");
  EXPECT_EQ(error_of([] { render_tags(TagSet{}); }), Errc::EmptyTagSet);
  EXPECT_EQ(error_of([] { render_tags(TagSet{"  ", {}, {}, {}}); }), Errc::EmptyTagSet);
}

TEST(Tagging, RenderParseRoundTripOverFieldSubsets) {
  const TagSet full{"soft light", "a blue plate", "a marble counter", "top-down angle"};
  for (int mask = 1; mask < 16; ++mask) {
    TagSet t;
    if (mask & 1) t.aesthetic = full.aesthetic;
    if (mask & 2) t.tableware = full.tableware;
    if (mask & 4) t.background = full.background;
    if (mask & 8) t.camera_angle = full.camera_angle;
    EXPECT_EQ(parse_rendered_tags(render_tags(t)), t) << "mask " << mask;
  }
}

TEST(Tagging, RepairRetryThenFailure) {
  DishRecord r = raw_record("t1", "宫保鸡丁", testkit::fake_ref('1'));
  r.status = RecordStatus::Corrected;
  r.name_final = "宫保鸡丁";

  ScriptedVision three_fields({R"({"aesthetic":"bright","tableware":"a bowl","background":"wood"})"});
  auto tagged = tag_record(r, three_fields);
  EXPECT_EQ(tagged.status, RecordStatus::Tagged);
  EXPECT_FALSE(tagged.tags->camera_angle.has_value());

  ScriptedVision repaired({"sorry", R"(Here: {"camera_angle":"overhead"})"});
  EXPECT_EQ(tag_record(r, repaired).tags->camera_angle, "overhead");
  EXPECT_EQ(repaired.calls, 2);

  ScriptedVision broken({"nope", "still nope"});
  try {
    tag_record(r, broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TaggingFailed);
    EXPECT_EQ(e.cause(), Errc::MalformedResponse);
  }
  EXPECT_EQ(broken.calls, 2);
}

TEST(Curate, MockEndToEndReachesTagged) {
  TempDir dir;
  auto blobs = std::make_shared<BlobStore>(dir.path());
  auto set = providers::MockProvider::make_set(blobs);
  int tagged = 0, discarded = 0;
  for (int i = 0; i < 24; ++i) {
    auto img = set.generation->generate("红烧肉 with scallion", i, "omni-dish-base");
    auto r = curate_record(raw_record("c" + std::to_string(i), "红烧肉", img), set);
    if (r.status == RecordStatus::Tagged) {
      ++tagged;
      EXPECT_EQ(r.name_final, "红烧肉");
      EXPECT_NO_THROW(render_tags(*r.tags));
    } else {
      ++discarded;
      EXPECT_EQ(r.status, RecordStatus::Discarded);
    }
  }
  EXPECT_EQ(tagged + discarded, 24);
  EXPECT_GT(tagged, 0);
}
