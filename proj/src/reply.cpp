#include "toxtrans/reply.hpp"

#include <optional>
#include <vector>

#include "toxtrans/text.hpp"

namespace toxtrans {

std::string_view to_string(ParseMode m) {
  switch (m) {
    case ParseMode::structured:
      return "structured";
    case ParseMode::lenient:
      return "lenient";
    case ParseMode::echo:
      return "echo";
  }
  return "structured";
}

namespace {

struct Header {
  std::size_t line_start;  // offset of the header line
  std::size_t body_start;  // offset just past the colon
};

// Finds line-initial headers such as "Translation:", tolerating leading
// markdown decoration ("#", "*") and whitespace before the keyword and a
// closing "**" after the colon.
std::vector<Header> find_headers(std::string_view s, std::string_view keyword) {
  std::vector<Header> out;
  std::size_t line = 0;
  while (line <= s.size()) {
    std::size_t i = line;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '#' || s[i] == '*')) ++i;
    if (text::starts_with_ci(s.substr(i), keyword) && s.substr(i + keyword.size(), 1) == ":") {
      std::size_t body = i + keyword.size() + 1;
      while (s.substr(body, 1) == "*") ++body;
      out.push_back({line, body});
    }
    const auto nl = s.find('\n', line);
    if (nl == std::string_view::npos) break;
    line = nl + 1;
  }
  return out;
}

std::string strip_quotes(std::string_view s) {
  s = text::trim(s);
  static constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
      {"\"", "\""}, {"“", "”"}, {"「", "」"}};
  for (const auto& [open, close] : kPairs) {
    if (s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
        s.substr(s.size() - close.size()) == close) {
      return std::string(text::trim(s.substr(open.size(), s.size() - open.size() - close.size())));
    }
  }
  return std::string(s);
}

}  // namespace

ParsedOutput parse_output(std::string_view raw_text) {
  const auto body = text::trim(raw_text);
  if (body.empty()) throw Error("empty translation");
  const auto translations = find_headers(body, "Translation");
  const auto explanations = find_headers(body, "Explanation");

  ParsedOutput out;
  if (translations.empty()) {
    if (!explanations.empty()) throw Error("empty translation");
    out.translation = strip_quotes(body);
    out.mode = ParseMode::lenient;
  } else {
    const auto& t = translations.back();
    out.translation = strip_quotes(body.substr(t.body_start));
    std::optional<Header> e;
    for (const auto& h : explanations) {
      if (h.line_start < t.line_start) e = h;
    }
    if (e) {
      out.explanation =
          std::string(text::trim(body.substr(e->body_start, t.line_start - e->body_start)));
    }
  }
  if (out.translation.empty()) throw Error("empty translation");
  return out;
}

ParsedOutput parse_output(const ModelOutput& raw) { return parse_output(raw.raw_text); }

ParsedOutput parse_reply(const ModelOutput& raw, const PromptText& sent) {
  if (raw.raw_text == sent.rendered && !text::trim(sent.sentence).empty()) {
    return ParsedOutput{"", sent.sentence, ParseMode::echo};
  }
  return parse_output(raw);
}

std::string format_reply(std::string_view explanation, std::string_view translation) {
  std::string out = "Explanation:\n";
  out += explanation;
  out += "\n\nTranslation:\n";
  out += translation;
  return out;
}

}  // namespace toxtrans
