#pragma once

#include <span>
#include <string>
#include <vector>

#include "dishforge/providers/provider.hpp"
#include "dishforge/types.hpp"

namespace dishforge::eval {

/// <a,b> / (|a||b|). Throws DimensionMismatch on unequal widths.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Sample mean and unbiased (n-1) covariance of an embedding set.
struct GaussianStats {
  std::vector<double> mean;
  std::vector<double> cov;  // row-major dims x dims, symmetric
  std::size_t n = 0;

  std::size_t dims() const noexcept { return mean.size(); }
  double cov_at(std::size_t i, std::size_t j) const { return cov[i * mean.size() + j]; }

  /// Throws InvalidArgument unless n >= 2, the shapes agree and the
  /// covariance is symmetric to 1e-9.
  void validate() const;
};

/// Throws InsufficientSamples for fewer than two vectors and
/// DimensionMismatch for mixed widths. The covariance uses divisor n-1 and is
/// symmetrised as (C + C^T) / 2; accumulation follows input order.
GaussianStats estimate_gaussian(std::span<const EmbeddingVector> embeddings);

/// Same fit over raw feature rows, which unlike EmbeddingVector may be zero.
GaussianStats estimate_gaussian(std::span<const std::vector<double>> rows);

/// Frechet distance between two Gaussians:
///   |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}).
///
/// The trace of the matrix square root is taken from the symmetric
/// eigendecomposition of S1^{1/2} S2 S1^{1/2}, which has the same spectrum as
/// S1 S2 but is symmetric PSD, so no complex residue arises. Negative
/// eigenvalues of S1 and of that product are clamped to zero; if the clamped
/// mass exceeds 1e-3 of the respective trace the input is rejected as NonPSD.
/// The result is clamped to >= 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Frechet distance between the Gaussian fits of two embedding sets.
double fid(std::span<const EmbeddingVector> set_a, std::span<const EmbeddingVector> set_b);

/// Two-tower dish-name/image similarity: cosine(embed_text(name), embed_image(image)).
double dish_similarity(std::string_view dish_name, const ImageRef& image, providers::EmbedProvider& embed);

/// cosine(embed_image(a), embed_image(b)); the CLIP-I / DINO style score.
double image_similarity(const ImageRef& a, const ImageRef& b, providers::EmbedProvider& embed);

/// Arithmetic mean in input order; 0 for an empty input.
double mean(std::span<const double> values);

enum class Dimension {
  Fidelity,
  Texture,
  Composition,
  Scene,
  Lighting,
  Subject,
  Effectiveness,
  Consistency,
  Aesthetics,
};

std::string_view dimension_name(Dimension d) noexcept;
Dimension dimension_from_name(std::string_view name);

/// Human ratings on the 1/2/3 scale for one dimension.
class HumanScoreSheet {
 public:
  /// Throws InvalidScore(value) for any score outside {1, 2, 3}.
  HumanScoreSheet(Dimension dimension, std::vector<int> scores);

  Dimension dimension() const noexcept { return dimension_; }
  const std::vector<int>& scores() const noexcept { return scores_; }

 private:
  Dimension dimension_;
  std::vector<int> scores_;
};

HumanScoreSheet score_sheet_from_json(const Json& j);

struct DimensionSummary {
  Dimension dimension;
  double mean = 0;  // rounded to 3 decimal places
  std::size_t count = 0;
};

/// One row per dimension present, in enum order; sheets sharing a dimension
/// are pooled.
std::vector<DimensionSummary> aggregate_scores(std::span<const HumanScoreSheet> sheets);

}  // namespace dishforge::eval
