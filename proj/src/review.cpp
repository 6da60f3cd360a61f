#include "dishforge/review.hpp"

#include <algorithm>
#include <array>
#include <ctime>
#include <set>

#include "dishforge/error.hpp"
#include "dishforge/hash.hpp"
#include "dishforge/manifest.hpp"

namespace dishforge::review {

using editset::EditPair;
using editset::ReviewStatus;
using TimePoint = std::chrono::system_clock::time_point;

namespace {

Clock or_system(Clock clock) {
  if (clock) return clock;
  return [] { return std::chrono::system_clock::now(); };
}

std::int64_t to_millis(TimePoint t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

TimePoint from_millis(std::int64_t ms) { return TimePoint(std::chrono::milliseconds(ms)); }

constexpr std::string_view kQueueKind = "review_queue";
constexpr std::string_view kPreferenceKind = "preference_queue";

// Shared by both queues: header row {kind, leases} followed by item rows.
template <typename Item>
void save_rows(const std::filesystem::path& path, std::string_view kind, const LeaseBook& leases,
               const std::vector<Item>& items) {
  std::vector<std::string> lines;
  lines.push_back(manifest_detail::serialize_row(Json{{"kind", kind}, {"leases", leases.to_json()}}));
  for (const auto& item : items) {
    Json j;
    to_json(j, item);
    lines.push_back(manifest_detail::serialize_row(std::move(j)));
  }
  manifest_detail::write_lines(path, lines);
}

template <typename Item>
std::pair<LeaseBook, std::vector<Item>> load_rows(const std::filesystem::path& path, std::string_view kind) {
  auto rows = manifest_detail::read_objects(path);
  if (rows.empty()) throw Error::parse_error(1, "queue file has no header row");
  LeaseBook leases;
  try {
    if (rows.front().second.at("kind").get<std::string>() != kind) {
      throw Error(Errc::SchemaViolation, "expected a " + std::string(kind) + " file");
    }
    leases = LeaseBook::from_json(rows.front().second.at("leases"));
  } catch (const std::exception& e) {
    throw Error::parse_error(rows.front().first, e.what());
  }
  std::vector<Item> items;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    try {
      items.push_back(rows[i].second.template get<Item>());
    } catch (const std::exception& e) {
      throw Error::parse_error(rows[i].first, e.what());
    }
  }
  return {std::move(leases), std::move(items)};
}

}  // namespace

std::string format_timestamp(TimePoint t) {
  const auto ms = to_millis(t);
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
  return buf;
}

bool LeaseBook::held_by_other(const std::string& id, const std::string& reviewer, TimePoint now) const {
  auto it = leases_.find(id);
  return it != leases_.end() && it->second.expires > now && it->second.reviewer != reviewer;
}

std::optional<std::string> LeaseBook::held_item(const std::string& reviewer, TimePoint now) const {
  for (const auto& [id, lease] : leases_) {
    if (lease.reviewer == reviewer && lease.expires > now) return id;
  }
  return std::nullopt;
}

void LeaseBook::grant(const std::string& id, const std::string& reviewer, TimePoint expires) {
  leases_[id] = Lease{reviewer, expires};
}

void LeaseBook::release(const std::string& id) { leases_.erase(id); }

void LeaseBook::prune(TimePoint now) {
  std::erase_if(leases_, [now](const auto& kv) { return kv.second.expires <= now; });
}

Json LeaseBook::to_json() const {
  Json j = Json::object();
  for (const auto& [id, lease] : leases_) j[id] = Json{{"reviewer", lease.reviewer}, {"expires_ms", to_millis(lease.expires)}};
  return j;
}

LeaseBook LeaseBook::from_json(const Json& j) {
  LeaseBook book;
  for (const auto& [id, v] : j.items()) {
    book.grant(id, v.at("reviewer").get<std::string>(), from_millis(v.at("expires_ms").get<std::int64_t>()));
  }
  return book;
}

ReviewQueue::ReviewQueue(std::chrono::milliseconds lease, Clock clock) : lease_(lease), clock_(or_system(std::move(clock))) {
  require(lease.count() > 0, "lease duration must be positive");
}

void ReviewQueue::enqueue(const std::vector<EditPair>& pairs) {
  std::lock_guard lock(mutex_);
  std::set<std::string> fresh;
  for (const auto& p : pairs) {
    p.validate();
    if (index_.contains(p.pair_id) || !fresh.insert(p.pair_id).second) {
      fail(Errc::InvalidArgument, "pair " + p.pair_id + " is already queued");
    }
  }
  for (const auto& p : pairs) {
    index_[p.pair_id] = pairs_.size();
    pairs_.push_back(p);
  }
}

std::size_t ReviewQueue::index_of(const std::string& pair_id) const {
  auto it = index_.find(pair_id);
  if (it == index_.end()) fail(Errc::UnknownPair, "no pair " + pair_id);
  return it->second;
}

EditPair ReviewQueue::next(const std::string& reviewer, bool include_skipped) {
  if (reviewer.empty()) fail(Errc::InvalidArgument, "reviewer id must be non-empty");
  std::lock_guard lock(mutex_);
  const auto now = clock_();
  leases_.prune(now);
  auto open = [include_skipped](const EditPair& p) {
    return p.review == ReviewStatus::Pending || (include_skipped && p.review == ReviewStatus::Skipped);
  };
  if (auto held = leases_.held_item(reviewer, now)) {
    if (auto it = index_.find(*held); it != index_.end() && open(pairs_[it->second])) {
      leases_.grant(*held, reviewer, now + lease_);
      return pairs_[it->second];
    }
    leases_.release(*held);
  }
  for (const auto& p : pairs_) {
    if (!open(p) || leases_.held_by_other(p.pair_id, reviewer, now)) continue;
    leases_.grant(p.pair_id, reviewer, now + lease_);
    return p;
  }
  fail(Errc::NothingPending, "no unleased pending pair");
}

EditPair ReviewQueue::verdict(const std::string& pair_id, ReviewStatus verdict, const std::string& reviewer) {
  if (reviewer.empty()) fail(Errc::InvalidArgument, "reviewer id must be non-empty");
  std::lock_guard lock(mutex_);
  auto& p = pairs_[index_of(pair_id)];
  if (p.review == ReviewStatus::Approved || p.review == ReviewStatus::Rejected) {
    fail(Errc::AlreadyReviewed, pair_id + " is already " + std::string(editset::review_status_name(p.review)));
  }
  if (verdict == ReviewStatus::Pending) fail(Errc::InvalidState, "Pending is not a verdict");
  if (verdict == ReviewStatus::Skipped && p.review == ReviewStatus::Skipped) {
    fail(Errc::InvalidState, pair_id + " is already Skipped");
  }
  p.review = verdict;
  p.reviewer = reviewer;
  p.reviewed_at = format_timestamp(clock_());
  leases_.release(pair_id);
  return p;
}

EditPair ReviewQueue::get(const std::string& pair_id) const {
  std::lock_guard lock(mutex_);
  return pairs_[index_of(pair_id)];
}

std::vector<EditPair> ReviewQueue::snapshot() const {
  std::lock_guard lock(mutex_);
  return pairs_;
}

std::map<std::string, std::size_t> ReviewQueue::stats() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::size_t> counts;
  for (auto s : {ReviewStatus::Pending, ReviewStatus::Approved, ReviewStatus::Rejected, ReviewStatus::Skipped}) {
    counts[std::string(editset::review_status_name(s))] = 0;
  }
  for (const auto& p : pairs_) ++counts[std::string(editset::review_status_name(p.review))];
  return counts;
}

std::vector<EditPair> ReviewQueue::approved() const {
  std::vector<EditPair> out;
  {
    std::lock_guard lock(mutex_);
    std::copy_if(pairs_.begin(), pairs_.end(), std::back_inserter(out),
                 [](const auto& p) { return p.review == ReviewStatus::Approved; });
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  return out;
}

std::size_t ReviewQueue::export_approved(const std::filesystem::path& path) const {
  return write_manifest(path, approved());
}

void ReviewQueue::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  save_rows(path, kQueueKind, leases_, pairs_);
}

void ReviewQueue::load(const std::filesystem::path& path) {
  auto [leases, pairs] = load_rows<EditPair>(path, kQueueKind);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!index.emplace(pairs[i].pair_id, i).second) fail(Errc::SchemaViolation, "duplicate pair " + pairs[i].pair_id);
  }
  std::lock_guard lock(mutex_);
  pairs_ = std::move(pairs);
  index_ = std::move(index);
  leases_ = std::move(leases);
}

// ---- preference annotation ----

namespace {

constexpr std::array<std::string_view, 3> kPreferenceStates = {"Pending", "Decided", "Skipped"};

}  // namespace

std::string_view preference_state_name(PreferenceItem::State s) noexcept {
  return kPreferenceStates[static_cast<std::size_t>(s)];
}

std::optional<PreferencePair> PreferenceItem::to_pair() const {
  if (state != State::Decided || !choice) return std::nullopt;
  const bool a_wins = *choice == Choice::A;
  return PreferencePair(prompt, a_wins ? image_a : image_b, a_wins ? image_b : image_a, annotator.value_or(""));
}

void to_json(Json& j, const PreferenceItem& item) {
  j = Json{{"item_id", item.item_id},
           {"prompt", item.prompt},
           {"image_a", item.image_a},
           {"image_b", item.image_b},
           {"state", preference_state_name(item.state)}};
  if (item.choice) j["choice"] = *item.choice == PreferenceItem::Choice::A ? "A" : "B";
  if (item.annotator) j["annotator"] = *item.annotator;
  if (item.decided_at) j["decided_at"] = *item.decided_at;
}

void from_json(const Json& j, PreferenceItem& item) {
  item.item_id = j.at("item_id").get<std::string>();
  item.prompt = j.at("prompt").get<std::string>();
  item.image_a = j.at("image_a").get<ImageRef>();
  item.image_b = j.at("image_b").get<ImageRef>();
  const auto state = j.at("state").get<std::string>();
  auto it = std::find(kPreferenceStates.begin(), kPreferenceStates.end(), state);
  if (it == kPreferenceStates.end()) fail(Errc::SchemaViolation, "unknown preference state '" + state + "'");
  item.state = static_cast<PreferenceItem::State>(it - kPreferenceStates.begin());
  item.choice.reset();
  if (auto c = j.find("choice"); c != j.end()) {
    const auto v = c->get<std::string>();
    if (v != "A" && v != "B") fail(Errc::SchemaViolation, "choice must be A or B");
    item.choice = v == "A" ? PreferenceItem::Choice::A : PreferenceItem::Choice::B;
  }
  item.annotator = j.contains("annotator") ? std::optional(j.at("annotator").get<std::string>()) : std::nullopt;
  item.decided_at = j.contains("decided_at") ? std::optional(j.at("decided_at").get<std::string>()) : std::nullopt;
  if ((item.state == PreferenceItem::State::Decided) != item.choice.has_value()) {
    fail(Errc::SchemaViolation, item.item_id + ": a choice is present exactly when Decided");
  }
}

std::vector<PreferenceItem> build_preference_items(const std::vector<std::string>& prompts,
                                                   providers::GenerationProvider& generation,
                                                   std::string_view checkpoint, std::uint64_t seed_base) {
  std::vector<PreferenceItem> out;
  std::uint64_t seed = seed_base;
  for (const auto& prompt : prompts) {
    const auto seed_a = seed++;
    const auto seed_b = seed++;
    PreferenceItem item;
    item.prompt = prompt;
    item.image_a = generation.generate(prompt, seed_a, checkpoint);
    item.image_b = generation.generate(prompt, seed_b, checkpoint);
    if (item.image_a.blob_id == item.image_b.blob_id) continue;
    Sha256 h;
    h.update_field(prompt).update_field(item.image_a.blob_id).update_field(item.image_b.blob_id);
    item.item_id = "pref-" + h.hex_digest().substr(0, 20);
    out.push_back(std::move(item));
  }
  return out;
}

PreferenceQueue::PreferenceQueue(std::chrono::milliseconds lease, Clock clock)
    : lease_(lease), clock_(or_system(std::move(clock))) {
  require(lease.count() > 0, "lease duration must be positive");
}

void PreferenceQueue::enqueue(const std::vector<PreferenceItem>& items) {
  std::lock_guard lock(mutex_);
  std::set<std::string> fresh;
  for (const auto& item : items) {
    if (item.item_id.empty()) fail(Errc::InvalidArgument, "preference item needs an id");
    if (item.image_a.blob_id == item.image_b.blob_id) fail(Errc::InvalidArgument, item.item_id + ": identical images");
    if (index_.contains(item.item_id) || !fresh.insert(item.item_id).second) {
      fail(Errc::InvalidArgument, "item " + item.item_id + " is already queued");
    }
  }
  for (const auto& item : items) {
    index_[item.item_id] = items_.size();
    items_.push_back(item);
  }
}

std::size_t PreferenceQueue::index_of(const std::string& item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) fail(Errc::UnknownPair, "no preference item " + item_id);
  return it->second;
}

PreferenceItem PreferenceQueue::next(const std::string& annotator, bool include_skipped) {
  using State = PreferenceItem::State;
  if (annotator.empty()) fail(Errc::InvalidArgument, "annotator id must be non-empty");
  std::lock_guard lock(mutex_);
  const auto now = clock_();
  leases_.prune(now);
  auto open = [include_skipped](const PreferenceItem& i) {
    return i.state == State::Pending || (include_skipped && i.state == State::Skipped);
  };
  if (auto held = leases_.held_item(annotator, now)) {
    if (auto it = index_.find(*held); it != index_.end() && open(items_[it->second])) {
      leases_.grant(*held, annotator, now + lease_);
      return items_[it->second];
    }
    leases_.release(*held);
  }
  for (const auto& item : items_) {
    if (!open(item) || leases_.held_by_other(item.item_id, annotator, now)) continue;
    leases_.grant(item.item_id, annotator, now + lease_);
    return item;
  }
  fail(Errc::NothingPending, "no unleased pending comparison");
}

PreferenceItem PreferenceQueue::choose(const std::string& item_id, std::optional<PreferenceItem::Choice> choice,
                                       const std::string& annotator) {
  using State = PreferenceItem::State;
  if (annotator.empty()) fail(Errc::InvalidArgument, "annotator id must be non-empty");
  std::lock_guard lock(mutex_);
  auto& item = items_[index_of(item_id)];
  if (item.state == State::Decided) fail(Errc::AlreadyReviewed, item_id + " is already decided");
  if (!choice && item.state == State::Skipped) fail(Errc::InvalidState, item_id + " is already Skipped");
  item.state = choice ? State::Decided : State::Skipped;
  item.choice = choice;
  item.annotator = annotator;
  item.decided_at = format_timestamp(clock_());
  leases_.release(item_id);
  return item;
}

PreferenceItem PreferenceQueue::get(const std::string& item_id) const {
  std::lock_guard lock(mutex_);
  return items_[index_of(item_id)];
}

std::map<std::string, std::size_t> PreferenceQueue::stats() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::size_t> counts;
  for (auto name : kPreferenceStates) counts[std::string(name)] = 0;
  for (const auto& item : items_) ++counts[std::string(preference_state_name(item.state))];
  return counts;
}

std::vector<PreferencePair> PreferenceQueue::decided_pairs() const {
  std::lock_guard lock(mutex_);
  std::vector<PreferencePair> out;
  for (const auto& item : items_) {
    if (auto p = item.to_pair()) out.push_back(std::move(*p));
  }
  return out;
}

void PreferenceQueue::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  save_rows(path, kPreferenceKind, leases_, items_);
}

void PreferenceQueue::load(const std::filesystem::path& path) {
  auto [leases, items] = load_rows<PreferenceItem>(path, kPreferenceKind);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!index.emplace(items[i].item_id, i).second) fail(Errc::SchemaViolation, "duplicate item " + items[i].item_id);
  }
  std::lock_guard lock(mutex_);
  items_ = std::move(items);
  index_ = std::move(index);
  leases_ = std::move(leases);
}

}  // namespace dishforge::review
