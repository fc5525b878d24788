#include "toxtrans/platform/server.hpp"

#include <httplib.h>

#include "toxtrans/error.hpp"

namespace toxtrans::platform {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace

ApiServer::ApiServer(AnnotationService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  const auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) r.headers.emplace(lower(k), v);
    ApiResponse out;
    try {
      out = service_.handle(r);
    } catch (const std::exception& e) {
      out = {500, {{"error", e.what()}}};
    }
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  // httplib defaults to SO_REUSEPORT, which lets a second server share a
  // port silently. SO_REUSEADDR alone still allows quick restarts.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  server_->Get("/api/.*", dispatch);
  server_->Post("/api/.*", dispatch);
  server_->Put("/api/.*", dispatch);
  server_->Delete("/api/.*", dispatch);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind to " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error("cannot bind to " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  return port;
}

void ApiServer::listen() { server_->listen_after_bind(); }

void ApiServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ApiServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace toxtrans::platform
