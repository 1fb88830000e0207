#ifndef GNER_UTF8_H_
#define GNER_UTF8_H_

#include <string>
#include <string_view>
#include <vector>

namespace gner {

// Splits UTF-8 text into one string per code point. Invalid bytes are
// kept as single-byte units.
std::vector<std::string> SplitCodePoints(std::string_view text);

// Decodes UTF-8 into code points; invalid bytes map to U+FFFD.
std::u32string DecodeUtf8(std::string_view text);

bool IsDecimalDigit(char32_t c);
bool IsUpper(char32_t c);
bool IsLower(char32_t c);

}  // namespace gner

#endif  // GNER_UTF8_H_
