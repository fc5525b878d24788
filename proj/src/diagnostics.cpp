#include "toxtrans/diagnostics.hpp"

#include <iostream>
#include <mutex>
#include <string>

namespace toxtrans {

namespace {

std::mutex g_sink_mu;
WarningSink g_sink;

}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(g_sink_mu);
  if (g_sink) {
    g_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_sink_mu);
  auto previous = std::move(g_sink);
  g_sink = std::move(sink);
  return previous;
}

}  // namespace toxtrans
