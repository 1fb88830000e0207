#include "gner/utf8.h"

#include <algorithm>
#include <locale>

namespace gner {
namespace {

// Length of the UTF-8 sequence starting at `lead`, or 0 if invalid.
size_t SequenceLength(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 0;
}

bool ValidSequence(std::string_view text, size_t pos, size_t len) {
  if (len == 0 || pos + len > text.size()) return false;
  for (size_t k = 1; k < len; ++k) {
    if ((static_cast<unsigned char>(text[pos + k]) & 0xC0) != 0x80) return false;
  }
  return true;
}

// First code point of each contiguous block of ten decimal digits (Nd).
constexpr char32_t kDigitBlocks[] = {
    0x0030,  0x0660,  0x06F0,  0x07C0,  0x0966,  0x09E6,  0x0A66,  0x0AE6,
    0x0B66,  0x0BE6,  0x0C66,  0x0CE6,  0x0D66,  0x0DE6,  0x0E50,  0x0ED0,
    0x0F20,  0x1040,  0x1090,  0x17E0,  0x1810,  0x1946,  0x19D0,  0x1A80,
    0x1A90,  0x1B50,  0x1BB0,  0x1C40,  0x1C50,  0xA620,  0xA8D0,  0xA900,
    0xA9D0,  0xA9F0,  0xAA50,  0xABF0,  0xFF10,  0x104A0, 0x10D30, 0x11066,
    0x110F0, 0x11136, 0x111D0, 0x112F0, 0x11450, 0x114D0, 0x11650, 0x116C0,
    0x11730, 0x118E0, 0x11950, 0x11C50, 0x11D50, 0x11DA0, 0x16A60, 0x16AC0,
    0x16B50, 0x1D7CE, 0x1D7D8, 0x1D7E2, 0x1D7EC, 0x1D7F6, 0x1E140, 0x1E2F0,
    0x1E950, 0x1FBF0,
};

const std::ctype<wchar_t>& CaseFacet() {
  static const std::locale locale = [] {
    for (const char* name : {"C.UTF-8", "C.utf8", "en_US.UTF-8"}) {
      try {
        return std::locale(name);
      } catch (const std::runtime_error&) {
      }
    }
    return std::locale::classic();
  }();
  return std::use_facet<std::ctype<wchar_t>>(locale);
}

}  // namespace

std::vector<std::string> SplitCodePoints(std::string_view text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t len = SequenceLength(static_cast<unsigned char>(text[pos]));
    if (!ValidSequence(text, pos, len)) len = 1;
    out.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

std::u32string DecodeUtf8(std::string_view text) {
  std::u32string out;
  size_t pos = 0;
  while (pos < text.size()) {
    unsigned char lead = static_cast<unsigned char>(text[pos]);
    size_t len = SequenceLength(lead);
    if (!ValidSequence(text, pos, len)) {
      out.push_back(0xFFFD);
      ++pos;
      continue;
    }
    char32_t cp = len == 1 ? lead : lead & (0xFF >> (len + 1));
    for (size_t k = 1; k < len; ++k) {
      cp = (cp << 6) | (static_cast<unsigned char>(text[pos + k]) & 0x3F);
    }
    out.push_back(cp);
    pos += len;
  }
  return out;
}

bool IsDecimalDigit(char32_t c) {
  auto it = std::upper_bound(std::begin(kDigitBlocks), std::end(kDigitBlocks), c);
  if (it == std::begin(kDigitBlocks)) return false;
  return c - *(it - 1) < 10;
}

bool IsUpper(char32_t c) {
  return CaseFacet().is(std::ctype_base::upper, static_cast<wchar_t>(c));
}

bool IsLower(char32_t c) {
  return CaseFacet().is(std::ctype_base::lower, static_cast<wchar_t>(c));
}

}  // namespace gner
