#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xlab {

using CodePoints = std::vector<char32_t>;

/// Decodes UTF-8. Throws std::invalid_argument on malformed input, overlong
/// forms or encoded surrogates.
CodePoints utf8_decode(std::string_view text);

/// Encodes scalar values as UTF-8. Throws on surrogates or values above
/// U+10FFFF.
std::string utf8_encode(const CodePoints& cps);
void utf8_append(std::string& out, char32_t cp);

std::size_t utf8_length(std::string_view text);

inline bool is_surrogate(char32_t cp) { return cp >= 0xD800 && cp <= 0xDFFF; }

/// U+FDD0..U+FDEF and the last two code points of every plane.
inline bool is_noncharacter(char32_t cp) {
  return (cp >= 0xFDD0 && cp <= 0xFDEF) || (cp & 0xFFFE) == 0xFFFE;
}

inline bool is_scalar_value(char32_t cp) {
  return cp <= 0x10FFFF && !is_surrogate(cp);
}

/// NFC, whitespace runs collapsed to one U+0020, ends trimmed.
std::string normalize_text(std::string_view text);

/// Splits on ASCII/Unicode whitespace after normalization.
std::vector<std::string> split_words(std::string_view text);

}  // namespace xlab
