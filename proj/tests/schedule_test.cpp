#include <gtest/gtest.h>

#include <map>

#include "dishforge/curation.hpp"
#include "dishforge/manifest.hpp"
#include "dishforge/schedule.hpp"
#include "support.hpp"

using namespace dishforge;
using namespace dishforge::schedule;
using dishforge::testkit::error_of;
using dishforge::testkit::TempDir;

namespace {

const TagSet kTags{"high aesthetic quality", "a white ceramic bowl", "a brown wooden tabletop",
                   "30-degree shooting angle"};

std::vector<DishRecord> mixed_records(const std::string& ultra_path) {
  std::vector<DishRecord> rs;
  for (int i = 0; i < 12; ++i) {
    DishRecord r;
    r.record_id = "r" + std::to_string(10 + i);
    r.name_raw = r.name_final.emplace("鱼香肉丝");
    r.image = testkit::fake_ref("0123456789ab"[i]);
    r.tags = kTags;
    if (i % 3 == 0) {
      r.status = RecordStatus::Tagged;
    } else {
      r.status = RecordStatus::Recaptioned;
      r.recaption = "RECAPTION_SENTINEL_" + std::to_string(i);
    }
    rs.push_back(r);
  }
  DishRecord gone;
  gone.record_id = "r99";
  gone.name_raw = "x";
  gone.image = testkit::fake_ref('f');
  gone.discard("NotADish");
  rs.push_back(gone);
  testkit::spit(ultra_path, R"({"record_id":"r11","quality":"UltraHigh"}
{"record_id":"r12","quality":"UltraHigh"}
{"record_id":"r12","quality":"UltraHigh"}
{"record_id":"r13","quality":"UltraHigh"}
)");
  import_quality_annotations(rs, ultra_path);
  return rs;
}

}  // namespace

TEST(StageTable, ResolutionsAndContents) {
  const std::map<int, std::uint32_t> res{{1, 512}, {2, 512}, {3, 1024}, {4, 1024}, {5, 1024}};
  for (auto [stage, r] : res) EXPECT_EQ(StageSpec::for_stage(stage).resolution, r) << stage;
  EXPECT_FALSE(StageSpec::for_stage(1).include_recaption);
  EXPECT_TRUE(StageSpec::for_stage(2).include_recaption);
  EXPECT_TRUE(StageSpec::for_stage(3).include_recaption);
  EXPECT_TRUE(StageSpec::for_stage(4).require_ultra_quality);
  EXPECT_TRUE(StageSpec::for_stage(5).is_preference_stage);
  EXPECT_EQ(error_of([] { StageSpec::for_stage(0); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([] { StageSpec::for_stage(6); }), Errc::InvalidArgument);
}

TEST(SampleText, NameTagsAndRecaption) {
  DishRecord r;
  r.record_id = "a";
  r.name_raw = r.name_final.emplace("宫保鸡丁");
  r.image = testkit::fake_ref('1');
  r.tags = kTags;
  r.status = RecordStatus::Tagged;
  EXPECT_EQ(assemble_sample_text(r, StageSpec::for_stage(1)),
            "宫保鸡丁, served in a white ceramic bowl, placed on a brown wooden tabletop, high aesthetic quality, "
            "30-degree shooting angle");
  EXPECT_EQ(error_of([&] { assemble_sample_text(r, StageSpec::for_stage(2)); }), Errc::MissingRecaption);
  r.status = RecordStatus::Recaptioned;
  r.recaption = "glossy diced chicken with peanuts";
  EXPECT_TRUE(assemble_sample_text(r, StageSpec::for_stage(3)).ends_with(", glossy diced chicken with peanuts"));
  EXPECT_EQ(assemble_sample_text(r, StageSpec::for_stage(1)).find("glossy"), std::string::npos);
  r.status = RecordStatus::Filtered;
  EXPECT_EQ(error_of([&] { assemble_sample_text(r, StageSpec::for_stage(1)); }), Errc::InvalidState);
}

TEST(StageManifest, EligibilityPerStage) {
  TempDir dir;
  auto rs = mixed_records((dir / "q.jsonl").string());
  auto s1 = build_stage_manifest(1, rs);
  EXPECT_EQ(s1.size(), 12u);
  for (const auto& s : s1) {
    EXPECT_EQ(s.text.find("RECAPTION_SENTINEL"), std::string::npos);
    EXPECT_EQ(s.resolution, 512u);
  }
  auto s2 = build_stage_manifest(2, rs);
  EXPECT_EQ(s2.size(), 8u);
  auto s3 = build_stage_manifest(3, rs);
  EXPECT_EQ(s3.size(), 8u);
  for (const auto& s : s3) EXPECT_EQ(s.resolution, 1024u);
  auto s4 = build_stage_manifest(4, rs);
  // r13 is annotated UltraHigh but only Tagged, so stage 4 skips it.
  std::vector<std::string> ids;
  for (const auto& s : s4) ids.push_back(s.record_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"r11", "r12"}));
  EXPECT_TRUE(std::is_sorted(s2.begin(), s2.end(), [](auto& a, auto& b) { return a.record_id < b.record_id; }));

  std::vector<DishRecord> plain(rs.begin(), rs.begin() + 1);
  EXPECT_EQ(error_of([&] { build_stage_manifest(4, plain); }), Errc::EmptyStage);
  EXPECT_EQ(error_of([&] { build_stage_manifest(5, rs); }), Errc::InvalidArgument);

  write_manifest(dir / "s2.jsonl", s2);
  auto back = read_manifest<TrainSample>(dir / "s2.jsonl");
  ASSERT_EQ(back.size(), s2.size());
  EXPECT_EQ(back[0].text, s2[0].text);
}

TEST(PreferenceManifest, RowsAreValidPairsAt1024) {
  TempDir dir;
  std::vector<PreferencePair> pairs{
      PreferencePair("b prompt", testkit::fake_ref('1'), testkit::fake_ref('2'), "ann1"),
      PreferencePair("a prompt", testkit::fake_ref('3'), testkit::fake_ref('4'), "ann2"),
  };
  auto rows = build_preference_manifest(pairs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].pair.prompt, "a prompt");
  for (auto& r : rows) EXPECT_EQ(r.resolution, 1024u);
  write_manifest(dir / "s5.jsonl", rows);
  auto back = read_manifest<PreferenceRow>(dir / "s5.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].pair, rows[1].pair);
  EXPECT_EQ(error_of([] { build_preference_manifest({}); }), Errc::EmptyStage);

  testkit::spit(dir / "bad.jsonl", R"({"prompt":"p","image_win":{"blob_id":")" + std::string(64, 'a') +
                                       R"(","width":1,"height":1,"media_type":"png"},"image_lose":{"blob_id":")" +
                                       std::string(64, 'a') +
                                       R"(","width":1,"height":1,"media_type":"png"},"annotator_id":"x"})" "\n");
  EXPECT_EQ(error_of([&] { read_manifest<PreferenceRow>(dir / "bad.jsonl"); }), Errc::ParseError);
}

TEST(Mixture, ExactCountsAndDeterminism) {
  std::vector<int> dish(100), general(100);
  for (int i = 0; i < 100; ++i) dish[i] = i, general[i] = 1000 + i;
  for (std::size_t k : {1u, 2u, 7u, 64u}) {
    for (double ratio : {0.1, 0.5, 0.9, 1.0}) {
      MixtureSpec spec{ratio, 42};
      auto batch = sample_mixture<int>(dish, general, spec, k);
      ASSERT_EQ(batch.size(), k);
      auto n = static_cast<std::size_t>(std::count_if(batch.begin(), batch.end(), [](int x) { return x < 1000; }));
      EXPECT_EQ(n, dish_count(k, ratio));
      EXPECT_EQ(batch, (sample_mixture<int>(dish, general, spec, k)));
    }
  }
  EXPECT_EQ(dish_count(5, 0.1), 1u);
  EXPECT_EQ(dish_count(15, 0.3), 5u);
  EXPECT_EQ(dish_count(3, 0.5), 2u);
}

TEST(Mixture, SmallPoolsAndErrors) {
  std::vector<int> dish{1, 2}, general{1000};
  auto batch = sample_mixture<int>(dish, general, MixtureSpec{0.5, 1}, 10);
  EXPECT_EQ(batch.size(), 10u);
  std::vector<int> none;
  EXPECT_EQ(error_of([&] { sample_mixture<int>(none, general, MixtureSpec{0.5, 1}, 4); }), Errc::EmptyPool);
  EXPECT_EQ(error_of([&] { sample_mixture<int>(dish, none, MixtureSpec{0.5, 1}, 4); }), Errc::EmptyPool);
  EXPECT_NO_THROW(sample_mixture<int>(dish, none, MixtureSpec{1.0, 1}, 4));
  EXPECT_EQ(error_of([&] { sample_mixture<int>(dish, general, MixtureSpec{0.0, 1}, 4); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { sample_mixture<int>(dish, general, MixtureSpec{1.2, 1}, 4); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { sample_mixture<int>(dish, general, MixtureSpec{0.5, 1}, 0); }), Errc::InvalidArgument);
}
