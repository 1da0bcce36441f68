#include "hk/text.hpp"

#include <algorithm>
#include <cctype>

namespace hk {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_article(std::string_view tok) { return tok == "a" || tok == "an" || tok == "the"; }

}  // namespace

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

std::string normalize_answer(std::string_view raw) {
  std::string stripped;
  stripped.reserve(raw.size());
  for (char c : to_lower_ascii(raw)) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    stripped.push_back(c);
  }
  std::string out;
  for (const auto& tok : split_tokens(stripped)) {
    if (is_article(tok)) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

bool contains_token_run(const std::vector<std::string>& haystack,
                        const std::vector<std::string>& needle) {
  if (needle.empty()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

bool icontains(std::string_view haystack, std::string_view needle) {
  return to_lower_ascii(haystack).find(to_lower_ascii(needle)) != std::string::npos;
}

std::size_t rfind_icase(std::string_view haystack, std::string_view needle) {
  return to_lower_ascii(haystack).rfind(to_lower_ascii(needle));
}

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

}  // namespace hk
