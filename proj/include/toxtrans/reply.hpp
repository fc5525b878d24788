#pragma once

#include <string>

#include "toxtrans/gateway.hpp"
#include "toxtrans/prompt_text.hpp"

namespace toxtrans {

enum class ParseMode {
  structured,  // found a Translation: header
  lenient,     // no headers at all; the whole reply is the translation
  echo,        // the reply was the prompt itself; the prompt's input is used
};

std::string_view to_string(ParseMode m);

struct ParsedOutput {
  std::string explanation;
  std::string translation;
  ParseMode mode = ParseMode::structured;

  bool lenient() const { return mode != ParseMode::structured; }
};

/// Splits a reply in the template's output format. The translation is the
/// text after the last line-initial "Translation:" header, trimmed and
/// stripped of one pair of enclosing quotes; the explanation is the text
/// between "Explanation:" and that header. A reply with neither header is
/// taken whole as the translation. Throws Error("empty translation") when
/// nothing remains.
ParsedOutput parse_output(const ModelOutput& raw);
ParsedOutput parse_output(std::string_view raw_text);

/// parse_output, except that a reply byte-identical to the prompt that was
/// sent is recognized as an echo and yields the prompt's input sentence.
ParsedOutput parse_reply(const ModelOutput& raw, const PromptText& sent);

/// A well-formed reply in the template's output format.
std::string format_reply(std::string_view explanation, std::string_view translation);

}  // namespace toxtrans
