#include <doctest.h>

#include "toxtrans/error.hpp"
#include "toxtrans/fewshot.hpp"
#include "toxtrans/reply.hpp"

using namespace toxtrans;

TEST_CASE("structured reply") {
  const auto p = parse_output("Explanation:\nRude, mocking tone.\n\nTranslation:\n你真的好笨\n");
  CHECK(p.mode == ParseMode::structured);
  CHECK(p.explanation == "Rude, mocking tone.");
  CHECK(p.translation == "你真的好笨");
}

TEST_CASE("headers tolerate markdown and case") {
  const auto p = parse_output("**Explanation:** sarcastic\n### translation:**  \"Kau ni lembap\"  ");
  CHECK(p.translation == "Kau ni lembap");
  CHECK(p.explanation == "sarcastic");
}

TEST_CASE("last translation header wins") {
  const auto p = parse_output("Translation: draft\nExplanation: on reflection\nTranslation: final");
  CHECK(p.translation == "final");
  CHECK(p.explanation == "on reflection");
}

TEST_CASE("quotes are stripped once") {
  CHECK(parse_output("Translation: “好啦”").translation == "好啦");
  CHECK(parse_output("Translation: 「走开」").translation == "走开");
  CHECK(parse_output("Translation: \"\"x\"\"").translation == "\"x\"");
}

TEST_CASE("reply without headers is lenient") {
  const auto p = parse_output("  just the words  ");
  CHECK(p.mode == ParseMode::lenient);
  CHECK(p.lenient());
  CHECK(p.translation == "just the words");
}

TEST_CASE("empty translations are errors") {
  CHECK_THROWS_WITH(parse_output("   "), "empty translation");
  CHECK_THROWS_WITH(parse_output("Explanation: only an analysis"), "empty translation");
  CHECK_THROWS_WITH(parse_output("Explanation: x\nTranslation:   \"\" "), "empty translation");
}

TEST_CASE("format_reply round trips") {
  for (const std::string t : {"好", "Kau ni memang bodoh", "line one\nline two", "a \"quoted\" bit"}) {
    const auto p = parse_output(format_reply("why", t));
    CHECK(p.translation == t);
    CHECK(p.explanation == "why");
    CHECK(p.mode == ParseMode::structured);
  }
}

TEST_CASE("echo replies yield the prompt input") {
  const auto prompt = render_forward_prompt("Eh you damn slow leh", "singlish", "zh", {});
  ModelOutput echoed{prompt.rendered, {}, {}, 1};
  const auto p = parse_reply(echoed, prompt);
  CHECK(p.mode == ParseMode::echo);
  CHECK(p.translation == "Eh you damn slow leh");

  ModelOutput other{format_reply("x", "你好慢"), {}, {}, 1};
  CHECK(parse_reply(other, prompt).translation == "你好慢");
  CHECK(to_string(ParseMode::echo) == "echo");
}
