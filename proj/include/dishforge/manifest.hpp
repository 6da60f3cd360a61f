#pragma once

#include <algorithm>
#include <concepts>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dishforge/error.hpp"
#include "dishforge/types.hpp"

namespace dishforge {

/// A row type persisted in line-delimited manifests: JSON-serialisable and
/// ordered by an ADL-visible `sort_key`.
template <typename Row>
concept ManifestRow = requires(const Row& row, Json& j) {
  { sort_key(row) };
  { to_json(j, row) };
};

namespace manifest_detail {

/// Writes `lines` (already serialised, already ordered) atomically; each line
/// is newline-terminated. Throws IoFailure.
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

/// Parses each non-blank line as a JSON object. Throws IoFailure or
/// ParseError(line).
std::vector<std::pair<std::size_t, Json>> read_objects(const std::filesystem::path& path);

std::string serialize_row(Json row);

}  // namespace manifest_detail

/// Writes one row per line, sorted ascending by `sort_key` (ties by the
/// serialised text), each tagged with `schema_version`. Any permutation of
/// the same rows produces a byte-identical file.
template <ManifestRow Row>
std::size_t write_manifest(const std::filesystem::path& path, const std::vector<Row>& rows) {
  using Key = std::decay_t<decltype(sort_key(std::declval<const Row&>()))>;
  std::vector<std::pair<Key, std::string>> keyed;
  keyed.reserve(rows.size());
  for (const auto& row : rows) {
    Json j;
    try {
      to_json(j, row);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail(Errc::SchemaViolation, e.what());
    }
    keyed.emplace_back(sort_key(row), manifest_detail::serialize_row(std::move(j)));
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> lines;
  lines.reserve(keyed.size());
  for (auto& [key, line] : keyed) lines.push_back(std::move(line));
  manifest_detail::write_lines(path, lines);
  return lines.size();
}

/// Reads rows in file order. Malformed lines raise ParseError with the
/// 1-based line number.
template <typename Row>
std::vector<Row> read_manifest(const std::filesystem::path& path) {
  std::vector<Row> rows;
  for (auto& [line_no, j] : manifest_detail::read_objects(path)) {
    try {
      rows.push_back(j.template get<Row>());
    } catch (const std::exception& e) {
      throw Error::parse_error(line_no, e.what());
    }
  }
  return rows;
}

/// Untyped rows, for manifests whose schema the caller owns.
std::vector<Json> read_json_rows(const std::filesystem::path& path);

/// Writes `rows` sorted by the string field `key_field`.
std::size_t write_json_rows(const std::filesystem::path& path, const std::vector<Json>& rows,
                            const std::string& key_field);

}  // namespace dishforge
