#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "toxtrans/diagnostics.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(TOXTRANS_FIXTURES) / name;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("toxtrans-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Collects warnings for its lifetime instead of printing them.
class CaptureWarnings {
 public:
  CaptureWarnings() {
    previous_ = toxtrans::set_warning_sink([this](std::string_view m) {
      std::lock_guard lock(mu_);
      messages_.emplace_back(m);
    });
  }
  ~CaptureWarnings() { toxtrans::set_warning_sink(previous_); }

  std::vector<std::string> messages() const {
    std::lock_guard lock(mu_);
    return messages_;
  }
  bool any_contains(const std::string& needle) const {
    for (const auto& m : messages()) {
      if (m.find(needle) != std::string::npos) return true;
    }
    return false;
  }

 private:
  toxtrans::WarningSink previous_;
  mutable std::mutex mu_;
  std::vector<std::string> messages_;
};

}  // namespace testing
