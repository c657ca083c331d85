#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared across modules. Everything here treats input
// as UTF-8; case folding only touches ASCII letters.
namespace docs2synth::text {

std::string trim(std::string_view s);
std::string ascii_lower(std::string_view s);

// Collapses runs of ASCII whitespace to one space and trims both ends.
std::string collapse_whitespace(std::string_view s);

// Answer comparison form: drops . , ; : ! ? " ' then lowercases and
// collapses whitespace.
std::string normalize_answer(std::string_view s);

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD.
std::u32string to_code_points(std::string_view s);
std::string to_utf8(std::u32string_view cps);
std::size_t code_point_length(std::string_view s);

// First line with non-whitespace content, trimmed; empty if none.
std::string first_nonempty_line(std::string_view s);

// Lowercased alphanumeric tokens. Any ASCII punctuation or whitespace splits;
// non-ASCII code points are kept inside tokens.
std::vector<std::string> tokenize(std::string_view s);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

// Replaces every "{{name}}" with vars.at(name). Unknown placeholders are left
// verbatim so a template typo shows up in the rendered prompt.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view encoded);

// UTC time as 2026-01-31T12:00:00Z.
std::string utc_timestamp();

std::string read_file(const std::string& path);
// Writes to path.tmp then renames over path.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace docs2synth::text
