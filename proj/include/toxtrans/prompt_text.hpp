#pragma once

#include <string>
#include <string_view>

namespace toxtrans {

enum class Direction { forward, back };

std::string_view to_string(Direction d);

/// A fully rendered prompt. `sentence` is the input the prompt asks to
/// translate, kept so replies can be checked against what was sent.
struct PromptText {
  std::string rendered;
  std::string template_id;
  int example_count = 0;
  Direction direction = Direction::forward;
  std::string sentence;
};

}  // namespace toxtrans
