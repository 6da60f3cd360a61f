#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dishforge/error.hpp"
#include "dishforge/rng.hpp"
#include "dishforge/types.hpp"

namespace dishforge::schedule {

/// One row of the coarse-to-fine training table.
struct StageSpec {
  int stage = 1;
  std::uint32_t resolution = 512;
  bool include_recaption = false;
  bool require_ultra_quality = false;
  bool is_preference_stage = false;

  /// Stage 1: 512, name + tags. Stage 2: 512, + recaption. Stage 3: 1024.
  /// Stage 4: 1024, UltraHigh only. Stage 5: 1024, preference pairs.
  /// Throws InvalidArgument outside 1..5.
  static StageSpec for_stage(int stage);

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct TrainSample {
  std::string record_id;
  std::string text;
  std::uint32_t resolution = 512;
  ImageRef image;
  int stage = 1;
};

inline const std::string& sort_key(const TrainSample& s) { return s.record_id; }
void to_json(Json& j, const TrainSample& s);
void from_json(const Json& j, TrainSample& s);

/// "<name_final>, <rendered tags>[, <recaption>]". Throws MissingRecaption
/// when the stage wants a recaption the record lacks, InvalidState when the
/// record is not at least Tagged.
std::string assemble_sample_text(const DishRecord& record, const StageSpec& spec);

/// Stage 1 takes Tagged and Recaptioned records; stages 2 and 3 take
/// Recaptioned records; stage 4 additionally requires UltraHigh.
bool eligible(const DishRecord& record, const StageSpec& spec);

/// One sample per eligible record, in record_id order. Throws EmptyStage.
std::vector<TrainSample> build_stage_manifest(int stage, std::span<const DishRecord> records);

struct PreferenceRow {
  PreferencePair pair;
  std::uint32_t resolution = 1024;
};

inline std::tuple<std::string, std::string, std::string, std::string> sort_key(
    const PreferenceRow& r) {
  return {r.pair.prompt, r.pair.annotator_id, r.pair.image_win.blob_id, r.pair.image_lose.blob_id};
}
void to_json(Json& j, const PreferenceRow& r);
PreferenceRow preference_row_from_json(const Json& j);

/// Stage 5 rows at 1024, ordered by (prompt, annotator). Throws EmptyStage.
std::vector<PreferenceRow> build_preference_manifest(std::span<const PreferencePair> pairs);

inline constexpr double kDefaultDishRatio = 0.5;

struct MixtureSpec {
  double dish_ratio = kDefaultDishRatio;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(dish_ratio > 0.0 && dish_ratio <= 1.0)) fail(Errc::InvalidArgument, "dish_ratio must lie in (0, 1]");
  }
};

/// round-half-up(k * ratio). A 1e-9 nudge absorbs binary representation
/// error so that e.g. 5 * 0.1 rounds to 1 and 15 * 0.3 to 5.
inline std::size_t dish_count(std::size_t k, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(k) * ratio + 0.5 + 1e-9));
}

/// Draws exactly dish_count(k, ratio) dish items and the rest from the
/// general pool. Each pool is sampled uniformly without replacement, or with
/// replacement when it is smaller than the demand; the batch is then
/// shuffled. Deterministic in (pools, spec, k). Throws EmptyPool when a pool
/// with non-zero demand is empty.
template <typename Item>
std::vector<Item> sample_mixture(std::span<const Item> dish_pool, std::span<const Item> general_pool,
                                 const MixtureSpec& spec, std::size_t k) {
  spec.validate();
  if (k == 0) fail(Errc::InvalidArgument, "batch size must be at least 1");
  const std::size_t n_dish = dish_count(k, spec.dish_ratio);
  const std::size_t n_general = k - n_dish;
  if (n_dish > 0 && dish_pool.empty()) fail(Errc::EmptyPool, "dish pool is empty");
  if (n_general > 0 && general_pool.empty()) fail(Errc::EmptyPool, "general pool is empty");

  DeterministicRng rng(spec.seed);
  auto draw = [&rng](std::span<const Item> pool, std::size_t demand, std::vector<Item>& out) {
    auto idx = pool.size() >= demand ? rng.sample_without_replacement(pool.size(), demand)
                                     : rng.sample_with_replacement(pool.size(), demand);
    for (auto i : idx) out.push_back(pool[i]);
  };
  std::vector<Item> batch;
  batch.reserve(k);
  draw(dish_pool, n_dish, batch);
  draw(general_pool, n_general, batch);
  rng.shuffle(batch);
  return batch;
}

}  // namespace dishforge::schedule

namespace nlohmann {
template <>
struct adl_serializer<dishforge::schedule::PreferenceRow> {
  static dishforge::schedule::PreferenceRow from_json(const json& j) {
    return dishforge::schedule::preference_row_from_json(j);
  }
  static void to_json(json& j, const dishforge::schedule::PreferenceRow& r) { dishforge::schedule::to_json(j, r); }
};
}  // namespace nlohmann
