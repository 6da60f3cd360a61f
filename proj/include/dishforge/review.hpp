#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dishforge/editset.hpp"
#include "dishforge/providers/provider.hpp"
#include "dishforge/types.hpp"

namespace dishforge::review {

using Clock = std::function<std::chrono::system_clock::time_point()>;

inline constexpr std::chrono::minutes kDefaultLease{10};

/// ISO-8601 UTC with millisecond precision.
std::string format_timestamp(std::chrono::system_clock::time_point t);

/// Which reviewer holds which item, and until when.
class LeaseBook {
 public:
  struct Lease {
    std::string reviewer;
    std::chrono::system_clock::time_point expires;
  };

  bool held_by_other(const std::string& id, const std::string& reviewer,
                     std::chrono::system_clock::time_point now) const;
  std::optional<std::string> held_item(const std::string& reviewer, std::chrono::system_clock::time_point now) const;
  void grant(const std::string& id, const std::string& reviewer, std::chrono::system_clock::time_point expires);
  void release(const std::string& id);
  void prune(std::chrono::system_clock::time_point now);

  Json to_json() const;
  static LeaseBook from_json(const Json& j);

 private:
  std::map<std::string, Lease> leases_;
};

/// Human filter over edit pairs. All state changes happen under one mutex;
/// accessors return copies.
///
/// Transitions: Pending -> {Approved, Rejected, Skipped}, Skipped ->
/// {Approved, Rejected}. A verdict on an Approved or Rejected pair raises
/// AlreadyReviewed; any other illegal request (Skipped again, "Pending")
/// raises InvalidState.
class ReviewQueue {
 public:
  explicit ReviewQueue(std::chrono::milliseconds lease = kDefaultLease, Clock clock = {});

  /// Appends pairs in order. Duplicate ids raise InvalidArgument.
  void enqueue(const std::vector<editset::EditPair>& pairs);

  /// The pair this reviewer already holds, else the oldest Pending pair not
  /// leased to someone else (Skipped pairs too when `include_skipped`).
  /// Throws NothingPending.
  editset::EditPair next(const std::string& reviewer, bool include_skipped = false);

  editset::EditPair verdict(const std::string& pair_id, editset::ReviewStatus verdict, const std::string& reviewer);

  editset::EditPair get(const std::string& pair_id) const;
  std::vector<editset::EditPair> snapshot() const;
  std::map<std::string, std::size_t> stats() const;

  /// Approved pairs only, sorted by pair_id.
  std::vector<editset::EditPair> approved() const;
  std::size_t export_approved(const std::filesystem::path& path) const;

  /// Header row with the live leases, then pairs in queue order.
  void save(const std::filesystem::path& path) const;
  /// Replaces the queue's contents with a saved file. Throws ParseError.
  void load(const std::filesystem::path& path);

 private:
  std::size_t index_of(const std::string& pair_id) const;

  std::chrono::milliseconds lease_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::vector<editset::EditPair> pairs_;
  std::map<std::string, std::size_t> index_;
  LeaseBook leases_;
};

/// An A-vs-B comparison waiting for a preference annotation.
struct PreferenceItem {
  enum class State { Pending, Decided, Skipped };
  enum class Choice { A, B };

  std::string item_id;
  std::string prompt;
  ImageRef image_a;
  ImageRef image_b;
  State state = State::Pending;
  std::optional<Choice> choice;
  std::optional<std::string> annotator;
  std::optional<std::string> decided_at;

  /// Set iff Decided.
  std::optional<PreferencePair> to_pair() const;
};

std::string_view preference_state_name(PreferenceItem::State s) noexcept;
inline const std::string& sort_key(const PreferenceItem& i) { return i.item_id; }
void to_json(Json& j, const PreferenceItem& item);
void from_json(const Json& j, PreferenceItem& item);

/// Two generations per prompt from different seeds. Identical outputs are
/// dropped since they cannot express a preference.
std::vector<PreferenceItem> build_preference_items(const std::vector<std::string>& prompts,
                                                   providers::GenerationProvider& generation,
                                                   std::string_view checkpoint, std::uint64_t seed_base);

/// DPO annotation queue with the same lease and state discipline as
/// ReviewQueue: Pending -> {Decided, Skipped}, Skipped -> Decided.
class PreferenceQueue {
 public:
  explicit PreferenceQueue(std::chrono::milliseconds lease = kDefaultLease, Clock clock = {});

  void enqueue(const std::vector<PreferenceItem>& items);
  PreferenceItem next(const std::string& annotator, bool include_skipped = false);

  /// `choice` empty means skip.
  PreferenceItem choose(const std::string& item_id, std::optional<PreferenceItem::Choice> choice,
                        const std::string& annotator);

  PreferenceItem get(const std::string& item_id) const;
  std::map<std::string, std::size_t> stats() const;
  std::vector<PreferencePair> decided_pairs() const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  std::size_t index_of(const std::string& item_id) const;

  std::chrono::milliseconds lease_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::vector<PreferenceItem> items_;
  std::map<std::string, std::size_t> index_;
  LeaseBook leases_;
};

}  // namespace dishforge::review
