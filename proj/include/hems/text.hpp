// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the parsers. Nothing here allocates more
// than the result it returns.
namespace hems::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char delim);
std::vector<std::string_view> split_lines(std::string_view s);

// Whitespace tokenization (space, tab, CR, LF, VT, FF).
std::vector<std::string_view> words(std::string_view s);
std::size_t word_count(std::string_view s);

// Lower-cased alphanumeric tokens, used for keyword matching.
std::vector<std::string> keyword_tokens(std::string_view s);

// Number of code points, or nullopt for malformed UTF-8.
std::optional<std::size_t> utf8_length(std::string_view s);

// Strict base-10 integer: optional leading '-', digits only, no overflow.
std::optional<long long> parse_int(std::string_view s);

std::string format_fixed(double value, int decimals = 2);

}  // namespace hems::text
