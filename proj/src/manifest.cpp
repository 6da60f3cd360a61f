#include "dishforge/manifest.hpp"

#include <atomic>
#include <fstream>

#include <unistd.h>

#include "dishforge/text.hpp"

namespace dishforge {
namespace fs = std::filesystem;

namespace manifest_detail {

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  static std::atomic<std::uint64_t> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot open " + tmp.string() + " for writing");
    for (const auto& line : lines) {
      out.write(line.data(), static_cast<std::streamsize>(line.size()));
      out.put('\n');
    }
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      fail(Errc::IoFailure, "write failed for " + path.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(Errc::IoFailure, "cannot replace " + path.string());
  }
}

std::vector<std::pair<std::size_t, Json>> read_objects(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  std::vector<std::pair<std::size_t, Json>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error::parse_error(line_no, "not a JSON object");
    out.emplace_back(line_no, std::move(j));
  }
  if (in.bad()) fail(Errc::IoFailure, "read failed for " + path.string());
  return out;
}

std::string serialize_row(Json row) {
  if (!row.is_object()) fail(Errc::SchemaViolation, "manifest rows must be objects");
  if (!row.contains("schema_version")) row["schema_version"] = kSchemaVersion;
  try {
    return row.dump();
  } catch (const std::exception& e) {
    fail(Errc::SchemaViolation, e.what());
  }
}

}  // namespace manifest_detail

std::vector<Json> read_json_rows(const fs::path& path) {
  std::vector<Json> rows;
  for (auto& [line_no, j] : manifest_detail::read_objects(path)) rows.push_back(std::move(j));
  return rows;
}

std::size_t write_json_rows(const fs::path& path, const std::vector<Json>& rows, const std::string& key_field) {
  std::vector<std::pair<std::string, std::string>> keyed;
  keyed.reserve(rows.size());
  for (const auto& row : rows) {
    auto it = row.find(key_field);
    if (it == row.end() || !it->is_string()) fail(Errc::SchemaViolation, "row lacks string field '" + key_field + "'");
    keyed.emplace_back(it->get<std::string>(), manifest_detail::serialize_row(row));
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> lines;
  for (auto& [k, line] : keyed) lines.push_back(std::move(line));
  manifest_detail::write_lines(path, lines);
  return lines.size();
}

}  // namespace dishforge
