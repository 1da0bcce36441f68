#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hk {

/// Canonical answer form used for deduplication and exact match:
/// lowercase, punctuation removed, English articles dropped as whole tokens,
/// whitespace collapsed. Non-ASCII bytes pass through untouched.
std::string normalize_answer(std::string_view raw);

/// Whitespace-separated tokens of an already-normalized string.
std::vector<std::string> split_tokens(std::string_view text);

/// True iff `needle` occurs in `haystack` as a contiguous run of whole tokens.
bool contains_token_run(const std::vector<std::string>& haystack,
                        const std::vector<std::string>& needle);

std::string to_lower_ascii(std::string_view text);
bool icontains(std::string_view haystack, std::string_view needle);
/// Position of the last case-insensitive occurrence, or npos.
std::size_t rfind_icase(std::string_view haystack, std::string_view needle);
std::string trim(std::string_view text);

}  // namespace hk
