#include "dishforge/eval.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>

#include "dishforge/error.hpp"

namespace dishforge::eval {
namespace {

using Matrix = Eigen::MatrixXd;

constexpr double kSymmetryTolerance = 1e-9;
constexpr double kClampedMassTolerance = 1e-3;

constexpr std::array<std::string_view, 9> kDimensionNames{
    "Fidelity", "Texture", "Composition", "Scene", "Lighting", "Subject", "Effectiveness", "Consistency", "Aesthetics"};

Matrix to_matrix(const GaussianStats& g) {
  const auto d = static_cast<Eigen::Index>(g.dims());
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = g.cov_at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  return m;
}

/// Eigenvalues of a symmetric PSD matrix with negatives clamped to zero.
/// Also returns the eigenvectors when `vectors` is set.
Eigen::VectorXd clamped_spectrum(const Matrix& m, const char* what, Matrix* vectors = nullptr) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) fail(Errc::NumericalFailure, std::string("eigendecomposition of ") + what + " did not converge");
  Eigen::VectorXd values = solver.eigenvalues();
  double negative = 0;
  double positive = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < 0) {
      negative -= values(i);
      values(i) = 0;
    } else {
      positive += values(i);
    }
  }
  if (negative > kClampedMassTolerance * std::max(positive, 1e-12) && negative > 1e-12) {
    fail(Errc::NonPSD, std::string(what) + " is not positive semi-definite (clamped mass " + std::to_string(negative) + ")");
  }
  if (vectors) *vectors = solver.eigenvectors();
  return values;
}

}  // namespace

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dims() != b.dims()) {
    fail(Errc::DimensionMismatch, "cosine of " + std::to_string(a.dims()) + "- and " + std::to_string(b.dims()) + "-dim vectors");
  }
  double dot = 0;
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) dot += va[i] * vb[i];
  double c = dot / (a.norm() * b.norm());
  return std::clamp(c, -1.0, 1.0);
}

void GaussianStats::validate() const {
  const std::size_t d = mean.size();
  if (d == 0) fail(Errc::InvalidArgument, "Gaussian has no dimensions");
  if (n < 2) fail(Errc::InsufficientSamples, "Gaussian fit needs n >= 2");
  if (cov.size() != d * d) fail(Errc::DimensionMismatch, "covariance shape does not match mean");
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(cov[i * d + j] - cov[j * d + i]) > kSymmetryTolerance) {
        fail(Errc::InvalidArgument, "covariance is not symmetric");
      }
    }
  }
}

GaussianStats estimate_gaussian(std::span<const std::vector<double>> rows) {
  if (rows.size() < 2) fail(Errc::InsufficientSamples, "need at least two samples, got " + std::to_string(rows.size()));
  const std::size_t d = rows.front().size();
  if (d == 0) fail(Errc::InvalidArgument, "samples have no dimensions");
  for (const auto& r : rows) {
    if (r.size() != d) fail(Errc::DimensionMismatch, "sample set mixes widths");
    for (double v : r) {
      if (!std::isfinite(v)) fail(Errc::InvalidArgument, "sample has a non-finite entry");
    }
  }
  const std::size_t n = rows.size();
  GaussianStats g;
  g.n = n;
  g.mean.assign(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) g.mean[i] += r[i];
  }
  for (double& m : g.mean) m /= static_cast<double>(n);

  g.cov.assign(d * d, 0.0);
  std::vector<double> centred(d);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) centred[i] = r[i] - g.mean[i];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) g.cov[i * d + j] += centred[i] * centred[j];
    }
  }
  const double divisor = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double v = (g.cov[i * d + j] + g.cov[j * d + i]) / (2.0 * divisor);
      g.cov[i * d + j] = v;
      g.cov[j * d + i] = v;
    }
  }
  return g;
}

GaussianStats estimate_gaussian(std::span<const EmbeddingVector> embeddings) {
  std::vector<std::vector<double>> rows;
  rows.reserve(embeddings.size());
  for (const auto& e : embeddings) rows.push_back(e.values());
  return estimate_gaussian(std::span<const std::vector<double>>(rows));
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  a.validate();
  b.validate();
  if (a.dims() != b.dims()) fail(Errc::DimensionMismatch, "Gaussians have different dimensions");
  const std::size_t d = a.dims();

  double mean_term = 0;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }

  Matrix s1 = to_matrix(a);
  Matrix s2 = to_matrix(b);

  Matrix v1;
  Eigen::VectorXd l1 = clamped_spectrum(s1, "first covariance", &v1);
  clamped_spectrum(s2, "second covariance");
  Matrix s1_half = v1 * l1.cwiseSqrt().asDiagonal() * v1.transpose();

  Matrix product = s1_half * s2 * s1_half;
  product = 0.5 * (product + product.transpose());
  Eigen::VectorXd lp = clamped_spectrum(product, "covariance product");
  const double trace_sqrt = lp.cwiseSqrt().sum();

  double result = mean_term + s1.trace() + s2.trace() - 2.0 * trace_sqrt;
  if (!std::isfinite(result)) fail(Errc::NumericalFailure, "Frechet distance is not finite");
  return std::max(result, 0.0);
}

double fid(std::span<const EmbeddingVector> set_a, std::span<const EmbeddingVector> set_b) {
  if (!set_a.empty() && !set_b.empty() && set_a.front().dims() != set_b.front().dims()) {
    fail(Errc::DimensionMismatch, "embedding sets have different dimensions");
  }
  return frechet_distance(estimate_gaussian(set_a), estimate_gaussian(set_b));
}

double dish_similarity(std::string_view dish_name, const ImageRef& image, providers::EmbedProvider& embed) {
  return cosine(embed.embed_text(dish_name), embed.embed_image(image));
}

double image_similarity(const ImageRef& a, const ImageRef& b, providers::EmbedProvider& embed) {
  return cosine(embed.embed_image(a), embed.embed_image(b));
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::string_view dimension_name(Dimension d) noexcept { return kDimensionNames[static_cast<std::size_t>(d)]; }

Dimension dimension_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
    if (kDimensionNames[i] == name) return static_cast<Dimension>(i);
  }
  fail(Errc::InvalidArgument, "unknown evaluation dimension '" + std::string(name) + "'");
}

HumanScoreSheet::HumanScoreSheet(Dimension dimension, std::vector<int> scores)
    : dimension_(dimension), scores_(std::move(scores)) {
  for (int s : scores_) {
    if (s < 1 || s > 3) fail(Errc::InvalidScore, "score " + std::to_string(s) + " is outside {1,2,3}");
  }
}

HumanScoreSheet score_sheet_from_json(const Json& j) {
  std::vector<int> scores;
  for (const auto& v : j.at("scores")) {
    if (!v.is_number_integer()) fail(Errc::InvalidScore, "score " + v.dump() + " is not an integer");
    scores.push_back(v.get<int>());
  }
  return HumanScoreSheet(dimension_from_name(j.at("dimension").get<std::string>()), std::move(scores));
}

std::vector<DimensionSummary> aggregate_scores(std::span<const HumanScoreSheet> sheets) {
  std::map<Dimension, std::pair<long long, std::size_t>> totals;
  for (const auto& sheet : sheets) {
    auto& [sum, count] = totals[sheet.dimension()];
    for (int s : sheet.scores()) sum += s;
    count += sheet.scores().size();
  }
  std::vector<DimensionSummary> out;
  for (const auto& [dim, t] : totals) {
    double m = t.second ? static_cast<double>(t.first) / static_cast<double>(t.second) : 0.0;
    out.push_back(DimensionSummary{dim, std::round(m * 1000.0) / 1000.0, t.second});
  }
  return out;
}

}  // namespace dishforge::eval
