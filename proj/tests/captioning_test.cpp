#include <gtest/gtest.h>

#include <cmath>

#include "dishforge/blob_store.hpp"
#include "dishforge/captioning.hpp"
#include "dishforge/eval.hpp"
#include "dishforge/providers/mock.hpp"
#include "dishforge/rng.hpp"
#include "support.hpp"

using namespace dishforge;
using namespace dishforge::captioning;
using dishforge::testkit::error_of;
using dishforge::testkit::TempDir;

namespace {

EmbeddingVector at_cosine(double c) { return EmbeddingVector({c, std::sqrt(1 - c * c)}); }

class TimeoutVision : public providers::VisionProvider {
 public:
  providers::FilterReport inspect_image(const ImageRef&) override { return {}; }
  std::string caption_image(const ImageRef&, std::string_view) override {
    fail(Errc::ProviderTimeout, "caption timed out");
  }
};

class CaptioningTest : public ::testing::Test {
 protected:
  DishRecord tagged(const std::string& id, const std::string& name, std::uint64_t seed) {
    DishRecord r;
    r.record_id = id;
    r.name_raw = name;
    r.name_final = name;
    r.image = mock.generate(name, seed, "omni-dish-base");
    r.status = RecordStatus::Tagged;
    r.tags = TagSet{"bright", "a bowl", "a table", "top view"};
    return r;
  }

  TempDir dir;
  std::shared_ptr<BlobStore> blobs = std::make_shared<BlobStore>(dir.path());
  providers::MockProvider mock{blobs};
};

}  // namespace

TEST_F(CaptioningTest, DescribeIsDeterministicAndNameSensitive) {
  EXPECT_EQ(describe_dish("驴打滚", mock), describe_dish("驴打滚", mock));
  EXPECT_NE(describe_dish("驴打滚", mock), describe_dish("豌豆黄", mock));
  EXPECT_EQ(error_of([&] { describe_dish("  ", mock); }), Errc::InvalidArgument);
}

TEST_F(CaptioningTest, RecaptionStateAndFailures) {
  auto r = recaption_record(tagged("a", "驴打滚", 1), mock, mock);
  EXPECT_EQ(r.status, RecordStatus::Recaptioned);
  ASSERT_TRUE(r.recaption.has_value());
  EXPECT_FALSE(r.recaption->empty());

  auto raw = tagged("b", "驴打滚", 1);
  raw.status = RecordStatus::Raw;
  EXPECT_EQ(error_of([&] { recaption_record(raw, mock, mock); }), Errc::InvalidState);

  TimeoutVision slow;
  try {
    recaption_record(tagged("c", "驴打滚", 2), mock, slow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RecaptionFailed);
    EXPECT_EQ(e.cause(), Errc::ProviderTimeout);
  }
}

TEST_F(CaptioningTest, LibraryIndexesCaptionsByDish) {
  std::vector<DishRecord> records;
  for (int i = 0; i < 3; ++i) records.push_back(recaption_record(tagged("k" + std::to_string(i), "宫保鸡丁", i), mock, mock));
  records.push_back(recaption_record(tagged("m0", "麻婆豆腐", 9), mock, mock));
  records.push_back(tagged("t0", "麻婆豆腐", 10));  // not recaptioned, skipped
  auto lib = build_library(records, mock);
  EXPECT_EQ(lib.size(), 4u);
  EXPECT_EQ(lib.entries_for("宫保鸡丁").size(), 3u);
  EXPECT_EQ(lib.entries_for(" 宫保鸡丁 ").size(), 3u);
  EXPECT_EQ(lib.dish_names(), (std::vector<std::string>{"宫保鸡丁", "麻婆豆腐"}));
  EXPECT_EQ(error_of([&] { build_library(records, mock, QualityFilter::UltraHigh); }), Errc::EmptyLibrary);

  lib.save(dir / "lib.jsonl");
  auto back = CaptionLibrary::load(dir / "lib.jsonl");
  ASSERT_EQ(back.size(), lib.size());
  for (const auto& e : lib.entries()) {
    auto ids = back.entries_for(e.dish_name);
    auto it = std::find_if(ids.begin(), ids.end(), [&](std::size_t i) { return back.entries()[i].entry_id == e.entry_id; });
    ASSERT_NE(it, ids.end());
    const auto& b = back.entries()[*it];
    EXPECT_EQ(b.caption, e.caption);
    EXPECT_EQ(b.embedding, e.embedding);
  }
  back.save(dir / "lib2.jsonl");
  EXPECT_EQ(testkit::slurp(dir / "lib.jsonl"), testkit::slurp(dir / "lib2.jsonl"));
}

TEST(Library, AddRejectsBadEntries) {
  CaptionLibrary lib(2);
  lib.add({"e1", "鱼", "a fish", at_cosine(0.5)});
  EXPECT_EQ(error_of([&] { lib.add({"e1", "鱼", "dup", at_cosine(0.5)}); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { lib.add({"e2", "鱼", " ", at_cosine(0.5)}); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { lib.add({"e3", "鱼", "x", EmbeddingVector({1, 2, 3})}); }), Errc::DimensionMismatch);
}

TEST(Retrieval, PicksHighestCosineAndBreaksTiesById) {
  CaptionLibrary lib(2);
  lib.add({"e1", "鱼", "first", at_cosine(0.4)});
  lib.add({"e2", "鱼", "second", at_cosine(0.9)});
  lib.add({"e3", "鱼", "third", at_cosine(0.7)});
  EmbeddingVector q({1.0, 0.0});
  EXPECT_EQ(retrieve_caption(lib, "鱼", q).entry_id, "e2");
  EXPECT_EQ(error_of([&] { retrieve_caption(lib, "肉", q); }), Errc::NoEntryForDish);

  CaptionLibrary tied(2);
  tied.add({"z", "鱼", "late", at_cosine(0.8)});
  tied.add({"b", "鱼", "early", at_cosine(0.8)});
  EXPECT_EQ(retrieve_caption(tied, "鱼", q).entry_id, "b");
}

TEST(Retrieval, MatchesLinearScan) {
  DeterministicRng rng(5);
  auto random_vec = [&] {
    std::vector<double> v(8);
    for (auto& x : v) x = rng.unit() * 2 - 1;
    return EmbeddingVector(v);
  };
  CaptionLibrary lib(8);
  const std::vector<std::string> dishes{"a", "b", "c"};
  for (int i = 0; i < 300; ++i) lib.add({"e" + std::to_string(i), dishes[i % 3], "cap", random_vec()});
  for (int q = 0; q < 200; ++q) {
    auto query = random_vec();
    const auto& dish = dishes[q % 3];
    const CaptionEntry* best = nullptr;
    double best_sim = -2;
    for (const auto& e : lib.entries()) {
      if (e.dish_name != dish) continue;
      double s = eval::cosine(query, e.embedding);
      if (s > best_sim || (s == best_sim && e.entry_id < best->entry_id)) best = &e, best_sim = s;
    }
    EXPECT_EQ(retrieve_caption(lib, dish, query).entry_id, best->entry_id);
  }
}

TEST_F(CaptioningTest, EnhancePromptSuffixContract) {
  std::vector<DishRecord> records{recaption_record(tagged("k0", "宫保鸡丁", 0), mock, mock)};
  auto lib = build_library(records, mock);
  auto out = enhance_prompt(lib, "spicy, with extra peanuts", "宫保鸡丁", mock, mock);
  EXPECT_TRUE(out.ends_with(kQualitySuffix));
  EXPECT_NE(out.find(*records[0].recaption), std::string::npos);

  EXPECT_EQ(enhance_prompt(lib, "清蒸鲈鱼", "清蒸鲈鱼", mock, mock),
            "清蒸鲈鱼, high aesthetic quality, high definition");

  auto twice = enhance_prompt(lib, out, "宫保鸡丁", mock, mock);
  std::size_t count = 0;
  for (auto pos = twice.find(kQualitySuffix); pos != std::string::npos; pos = twice.find(kQualitySuffix, pos + 1)) ++count;
  EXPECT_EQ(count, 1u);
  EXPECT_EQ(with_quality_suffix(with_quality_suffix("x")), with_quality_suffix("x"));
}
