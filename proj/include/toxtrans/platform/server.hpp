#pragma once

#include <memory>
#include <string>
#include <thread>

#include "toxtrans/platform/service.hpp"

namespace httplib {
class Server;
}

namespace toxtrans::platform {

/// HTTP transport for AnnotationService.
class ApiServer {
 public:
  explicit ApiServer(AnnotationService& service);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and returns the port; port 0 picks a free one. Throws if the
  /// port is taken.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void listen();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  AnnotationService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace toxtrans::platform
