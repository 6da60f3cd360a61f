#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dishforge::text {

/// Unicode NFC normalisation of UTF-8 text. Throws InvalidArgument on
/// invalid UTF-8.
std::string nfc(std::string_view utf8);

std::string trim(std::string_view s);

/// NFC followed by whitespace trimming; the canonical form of dish names.
std::string canonical_name(std::string_view s);

std::string lower_ascii(std::string_view s);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

std::vector<std::string> split(std::string_view s, std::string_view sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Splits UTF-8 into code-point substrings (invalid bytes become single units).
std::vector<std::string> code_points(std::string_view utf8);

/// Substitutes every `{key}` in `tmpl`.
std::string format_template(std::string_view tmpl,
                            std::initializer_list<std::pair<std::string_view, std::string_view>> vars);

}  // namespace dishforge::text
