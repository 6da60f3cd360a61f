#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dishforge {

/// Machine-readable failure category. Every error raised by the library
/// carries exactly one of these; wrapping errors (CorrectionFailed,
/// RecaptionFailed, StageFailed) additionally carry the code of the cause.
enum class Errc {
  InvalidArgument,
  InvalidState,
  // core-data
  UndecodableImage,
  StorageFailure,
  IoFailure,
  SchemaViolation,
  ParseError,
  // providers
  ProviderUnavailable,
  ProviderTimeout,
  MalformedResponse,
  MissingBlob,
  DimensionMismatch,
  EmptyMask,
  InvalidRho,
  UnknownJob,
  // curation
  CorrectionFailed,
  TaggingFailed,
  EmptyTagSet,
  // captioning
  RecaptionFailed,
  EmptyLibrary,
  NoEntryForDish,
  // schedule
  MissingRecaption,
  EmptyStage,
  EmptyPool,
  // editset
  NoPrompts,
  FinetuneFailed,
  UnknownPair,
  AlreadyReviewed,
  NothingPending,
  // eval
  ZeroVector,
  InsufficientSamples,
  NumericalFailure,
  NonPSD,
  InvalidScore,
  // service
  StageFailed,
  ConfigInvalid,
  BindFailure,
  WorkspaceLocked,
};

std::string_view errc_name(Errc code) noexcept;
std::optional<Errc> errc_from_name(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  /// Wraps a lower-level failure; `context` names the record or stage.
  Error(Errc code, std::string context, const Error& cause);

  Errc code() const noexcept { return code_; }
  std::optional<Errc> cause() const noexcept { return cause_; }
  const std::string& context() const noexcept { return context_; }

  /// Set for ParseError raised while reading line-delimited files (1-based).
  std::optional<std::size_t> line() const noexcept { return line_; }

  static Error parse_error(std::size_t line, const std::string& message);

 private:
  Errc code_;
  std::optional<Errc> cause_;
  std::string context_;
  std::optional<std::size_t> line_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(Errc::InvalidArgument, message);
}

}  // namespace dishforge
