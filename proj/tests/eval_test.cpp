#include <gtest/gtest.h>

#include <cmath>

#include "dishforge/blob_store.hpp"
#include "dishforge/eval.hpp"
#include "dishforge/providers/mock.hpp"
#include "dishforge/rng.hpp"
#include "support.hpp"

using namespace dishforge;
using namespace dishforge::eval;
using dishforge::testkit::error_of;
using dishforge::testkit::TempDir;

namespace {

GaussianStats gaussian(std::vector<double> mean, std::vector<double> cov) {
  GaussianStats g;
  g.mean = std::move(mean);
  g.cov = std::move(cov);
  g.n = 100;
  return g;
}

/// Closed form for 2x2 covariances: Tr sqrt(S1 S2) = sqrt(tr(S1 S2) + 2 sqrt(det S1 det S2)),
/// since the two eigenvalues of S1 S2 are non-negative with product det S1 det S2.
double frechet_2x2(const GaussianStats& a, const GaussianStats& b) {
  const auto& s = a.cov;
  const auto& t = b.cov;
  double dm = 0;
  for (int i = 0; i < 2; ++i) dm += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  double tr_prod = s[0] * t[0] + s[1] * t[2] + s[2] * t[1] + s[3] * t[3];
  double det_s = s[0] * s[3] - s[1] * s[2];
  double det_t = t[0] * t[3] - t[1] * t[2];
  double tr_sqrt = std::sqrt(tr_prod + 2 * std::sqrt(det_s * det_t));
  return dm + s[0] + s[3] + t[0] + t[3] - 2 * tr_sqrt;
}

double normal(DeterministicRng& rng) {
  double u1 = 1.0 - rng.unit(), u2 = rng.unit();
  return std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
}

std::vector<EmbeddingVector> sample(DeterministicRng& rng, std::size_t n, const std::vector<double>& mu,
                                    const std::vector<double>& sd) {
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) v[k] = mu[k] + sd[k] * normal(rng);
    out.emplace_back(v);
  }
  return out;
}

}  // namespace

TEST(Cosine, HandComputedValues) {
  EmbeddingVector v({0.3, -1.2, 4.0});
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cosine(EmbeddingVector({1, 0}), EmbeddingVector({0, 1})), 0.0);
  EXPECT_NEAR(cosine(EmbeddingVector({1, 2, 2}), EmbeddingVector({2, 1, 2})), 8.0 / 9.0, 1e-15);
  EXPECT_NEAR(cosine(EmbeddingVector({2, 4, 4}), EmbeddingVector({2, 1, 2})), 8.0 / 9.0, 1e-15);
  EXPECT_EQ(error_of([] { cosine(EmbeddingVector({1, 2}), EmbeddingVector({1, 2, 3})); }), Errc::DimensionMismatch);
}

TEST(Gaussian, UnbiasedCovariance) {
  const std::vector<std::vector<double>> two{{0, 0}, {2, 2}};
  auto g = estimate_gaussian(std::span<const std::vector<double>>(two));
  EXPECT_NEAR(g.mean[0], 1.0, 1e-12);
  EXPECT_NEAR(g.mean[1], 1.0, 1e-12);
  for (double c : g.cov) EXPECT_NEAR(c, 2.0, 1e-12);
  std::vector<EmbeddingVector> one{EmbeddingVector({1, 1})};
  EXPECT_EQ(error_of([&] { estimate_gaussian(one); }), Errc::InsufficientSamples);
  std::vector<EmbeddingVector> same{EmbeddingVector({1, 2}), EmbeddingVector({1, 2}), EmbeddingVector({1, 2})};
  for (double c : estimate_gaussian(same).cov) EXPECT_EQ(c, 0.0);
  std::vector<EmbeddingVector> mixed{EmbeddingVector({1, 2}), EmbeddingVector({1, 2, 3})};
  EXPECT_EQ(error_of([&] { estimate_gaussian(mixed); }), Errc::DimensionMismatch);
}

TEST(Frechet, ClosedFormCases) {
  auto a = gaussian({0, 0}, {1, 0, 0, 1});
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-8);
  EXPECT_NEAR(frechet_distance(a, gaussian({3, 4}, {1, 0, 0, 1})), 25.0, 1e-9);
  EXPECT_NEAR(frechet_distance(a, gaussian({0, 0}, {4, 0, 0, 4})), 2.0, 1e-9);
}

TEST(Frechet, MatchesTwoByTwoOracle) {
  DeterministicRng rng(17);
  for (int t = 0; t < 200; ++t) {
    auto random_spd = [&] {
      double l00 = 0.2 + rng.unit() * 2, l10 = rng.unit() * 2 - 1, l11 = 0.2 + rng.unit() * 2;
      return std::vector<double>{l00 * l00, l00 * l10, l00 * l10, l10 * l10 + l11 * l11};
    };
    auto a = gaussian({rng.unit(), rng.unit()}, random_spd());
    auto b = gaussian({rng.unit() * 3, -rng.unit()}, random_spd());
    const double want = frechet_2x2(a, b);
    EXPECT_NEAR(frechet_distance(a, b), want, 1e-8 * std::max(1.0, want));
  }
}

TEST(Frechet, RejectsIndefiniteCovariance) {
  auto bad = gaussian({0, 0}, {1, 0, 0, -1});
  auto ok = gaussian({0, 0}, {1, 0, 0, 1});
  EXPECT_EQ(error_of([&] { frechet_distance(bad, ok); }), Errc::NonPSD);
  auto wrong = gaussian({0, 0, 0}, {1, 0, 0, 1});
  EXPECT_EQ(error_of([&] { frechet_distance(wrong, ok); }), Errc::DimensionMismatch);
}

TEST(Fid, IdentitySymmetryAndScaling) {
  DeterministicRng rng(3);
  auto x = sample(rng, 60, {0, 1, 2, 3}, {1, 2, 0.5, 1});
  auto y = sample(rng, 80, {1, 1, 0, 3}, {2, 1, 1, 0.3});
  EXPECT_NEAR(fid(x, x), 0.0, 1e-8);
  const double xy = fid(x, y);
  EXPECT_NEAR(fid(y, x), xy, 1e-6 * xy);
  for (double s : {0.5, 2.0}) {
    std::vector<EmbeddingVector> xs, ys;
    for (auto& v : x) {
      auto vals = v.values();
      for (auto& e : vals) e *= s;
      xs.emplace_back(vals);
    }
    for (auto& v : y) {
      auto vals = v.values();
      for (auto& e : vals) e *= s;
      ys.emplace_back(vals);
    }
    EXPECT_NEAR(fid(xs, ys), s * s * xy, 1e-8 * s * s * xy);
  }
  std::vector<EmbeddingVector> wide{EmbeddingVector({1, 2, 3, 4, 5}), EmbeddingVector({5, 4, 3, 2, 1})};
  EXPECT_EQ(error_of([&] { fid(x, wide); }), Errc::DimensionMismatch);
}

TEST(Fid, SampledDiagonalGaussiansNearClosedForm) {
  DeterministicRng rng(99);
  const std::vector<double> mu1{0, 0, 1, 1}, sd1{1, 2, 1, 0.5};
  const std::vector<double> mu2{1, 0, 0, 2}, sd2{2, 1, 1.5, 0.5};
  double want = 0;
  for (int k = 0; k < 4; ++k) {
    want += (mu1[k] - mu2[k]) * (mu1[k] - mu2[k]) + sd1[k] * sd1[k] + sd2[k] * sd2[k] - 2 * sd1[k] * sd2[k];
  }
  auto a = sample(rng, 10000, mu1, sd1);
  auto b = sample(rng, 10000, mu2, sd2);
  EXPECT_NEAR(fid(a, b), want, 0.05 * want);
}

TEST(Similarity, MockDishSimilarity) {
  TempDir dir;
  auto blobs = std::make_shared<BlobStore>(dir.path());
  providers::MockProvider mock(blobs);
  auto img = mock.generate("佛跳墙", 1, "omni-dish-base");
  EXPECT_NEAR(dish_similarity("佛跳墙", img, mock), 1.0, 1e-12);
  EXPECT_NEAR(image_similarity(img, img, mock), 1.0, 1e-12);
  std::vector<double> xs{0.25, 0.5, 1.0};
  EXPECT_DOUBLE_EQ(mean(xs), (0.25 + 0.5 + 1.0) / 3);
  EXPECT_EQ(mean(std::vector<double>{}), 0.0);
}

TEST(HumanScores, AggregationAndValidation) {
  std::vector<HumanScoreSheet> sheets{
      HumanScoreSheet(Dimension::Texture, {1, 2, 3}),
      HumanScoreSheet(Dimension::Fidelity, {3, 3, 3}),
      HumanScoreSheet(Dimension::Texture, {3}),
      HumanScoreSheet(Dimension::Lighting, {1, 2, 2}),
  };
  auto rows = aggregate_scores(sheets);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].dimension, Dimension::Fidelity);
  EXPECT_DOUBLE_EQ(rows[0].mean, 3.0);
  EXPECT_EQ(rows[1].dimension, Dimension::Texture);
  EXPECT_DOUBLE_EQ(rows[1].mean, 2.25);
  EXPECT_EQ(rows[1].count, 4u);
  EXPECT_DOUBLE_EQ(rows[2].mean, 1.667);
  EXPECT_EQ(error_of([] { HumanScoreSheet(Dimension::Scene, {1, 4}); }), Errc::InvalidScore);
  EXPECT_EQ(error_of([] { HumanScoreSheet(Dimension::Scene, {0}); }), Errc::InvalidScore);
  auto sheet = score_sheet_from_json(Json{{"dimension", "Aesthetics"}, {"scores", {1, 1, 2}}});
  EXPECT_EQ(sheet.dimension(), Dimension::Aesthetics);
  EXPECT_EQ(dimension_from_name(dimension_name(Dimension::Consistency)), Dimension::Consistency);
}
