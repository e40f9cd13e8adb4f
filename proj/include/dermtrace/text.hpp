// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dermtrace {

using json = nlohmann::json;

/// ASCII case folding. Bytes outside ASCII pass through unchanged.
std::string casefold(std::string_view s);

std::string trim(std::string_view s);

/// Casefold, then split on every byte that is not an ASCII letter or digit.
/// Non-ASCII bytes are treated as word characters so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains_casefolded(std::string_view haystack, std::string_view needle);

std::uint64_t fnv1a64(std::string_view s) noexcept;

std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Calls `fn(line_number, record)` for every non-blank line of a JSONL file.
/// Malformed lines raise ParseError naming the 1-based line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// Scans `text` for the first balanced JSON array or object that parses and
/// satisfies `accept`. Surrounding prose and code fences are ignored.
std::optional<json> find_json_block(std::string_view text, const std::function<bool(const json&)>& accept);

void for_each_jsonl_text(std::string_view text, const std::string& origin,
                         const std::function<void(std::size_t, const json&)>& fn);

} // namespace dermtrace
