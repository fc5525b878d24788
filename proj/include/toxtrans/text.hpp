#pragma once

#include <string>
#include <string_view>

namespace toxtrans::text {

bool is_valid_utf8(std::string_view bytes);

/// Decodes UTF-8 into Unicode scalar values. Throws Error on ill-formed input.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view code_points);

/// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

/// Unicode canonical composition (NFC).
std::string nfc(std::string_view s);

/// The normalization applied before hashing text: NFC, then trim. Nothing
/// else, so distinct slang spellings stay distinct.
std::string normalize_for_key(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);
std::string to_upper_ascii(std::string_view s);

}  // namespace toxtrans::text
