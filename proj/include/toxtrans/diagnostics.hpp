#pragma once

#include <functional>
#include <string_view>

namespace toxtrans {

using WarningSink = std::function<void(std::string_view)>;

/// Emits a warning through the installed sink (stderr by default).
void warn(std::string_view message);

/// Installs a sink and returns the previous one. Pass nullptr for the default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace toxtrans
