#include "dishforge/error.hpp"

#include <array>
#include <utility>

namespace dishforge {
namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 41> kNames{{
    {Errc::InvalidArgument, "InvalidArgument"},
    {Errc::InvalidState, "InvalidState"},
    {Errc::UndecodableImage, "UndecodableImage"},
    {Errc::StorageFailure, "StorageFailure"},
    {Errc::IoFailure, "IoFailure"},
    {Errc::SchemaViolation, "SchemaViolation"},
    {Errc::ParseError, "ParseError"},
    {Errc::ProviderUnavailable, "ProviderUnavailable"},
    {Errc::ProviderTimeout, "ProviderTimeout"},
    {Errc::MalformedResponse, "MalformedResponse"},
    {Errc::MissingBlob, "MissingBlob"},
    {Errc::DimensionMismatch, "DimensionMismatch"},
    {Errc::EmptyMask, "EmptyMask"},
    {Errc::InvalidRho, "InvalidRho"},
    {Errc::UnknownJob, "UnknownJob"},
    {Errc::CorrectionFailed, "CorrectionFailed"},
    {Errc::TaggingFailed, "TaggingFailed"},
    {Errc::EmptyTagSet, "EmptyTagSet"},
    {Errc::RecaptionFailed, "RecaptionFailed"},
    {Errc::EmptyLibrary, "EmptyLibrary"},
    {Errc::NoEntryForDish, "NoEntryForDish"},
    {Errc::MissingRecaption, "MissingRecaption"},
    {Errc::EmptyStage, "EmptyStage"},
    {Errc::EmptyPool, "EmptyPool"},
    {Errc::NoPrompts, "NoPrompts"},
    {Errc::FinetuneFailed, "FinetuneFailed"},
    {Errc::UnknownPair, "UnknownPair"},
    {Errc::AlreadyReviewed, "AlreadyReviewed"},
    {Errc::NothingPending, "NothingPending"},
    {Errc::ZeroVector, "ZeroVector"},
    {Errc::InsufficientSamples, "InsufficientSamples"},
    {Errc::NumericalFailure, "NumericalFailure"},
    {Errc::NonPSD, "NonPSD"},
    {Errc::InvalidScore, "InvalidScore"},
    {Errc::StageFailed, "StageFailed"},
    {Errc::ConfigInvalid, "ConfigInvalid"},
    {Errc::BindFailure, "BindFailure"},
    {Errc::WorkspaceLocked, "WorkspaceLocked"},
    {Errc::InvalidArgument, "PreconditionFailed"},
    {Errc::InvalidState, "InvalidTransition"},
    {Errc::ProviderUnavailable, "UnknownCheckpoint"},
}};

}  // namespace

std::string_view errc_name(Errc code) noexcept {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

std::optional<Errc> errc_from_name(std::string_view name) noexcept {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

Error::Error(Errc code, std::string context, const Error& cause)
    : std::runtime_error(std::string(errc_name(code)) + "(" + context + "): " + cause.what()),
      code_(code),
      cause_(cause.code()),
      context_(std::move(context)),
      line_(cause.line()) {}

Error Error::parse_error(std::size_t line, const std::string& message) {
  Error e(Errc::ParseError, "line " + std::to_string(line) + ": " + message);
  e.line_ = line;
  return e;
}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace dishforge
