#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxtrans/gateway.hpp"

namespace toxtrans {

/// One entry of a backend config file. `type` selects the implementation:
/// "http" for a real service, or "echo" / "table" / "hash" for offline mocks.
///
/// For http backends the request body is `request_template` with the string
/// tokens {{prompt}} (translators), {{text}} (embedders) substituted and a
/// value of exactly "{{temperature}}" replaced by the configured number. The
/// result is read at the JSON pointer `response_path`. The credential is read
/// from the environment variable `auth_env_var` and sent as a bearer token;
/// config files never carry secrets.
struct BackendConfig {
  std::string name;
  BackendKind kind = BackendKind::translator;
  std::string type = "http";
  std::string base_url;
  std::string auth_env_var;
  nlohmann::json request_template = nlohmann::json::object();
  std::string response_path;
  int concurrency = 4;
  RetryPolicy retry;
  double temperature = 0.0;
  int timeout_seconds = 120;
  nlohmann::json mock = nlohmann::json::object();
};

BackendConfig parse_backend_config(const nlohmann::json& j);
/// Accepts either a JSON array of configs or {"backends": [...]}.
std::vector<BackendConfig> parse_backend_configs(const nlohmann::json& j);
std::vector<BackendConfig> load_backend_configs(const std::filesystem::path& path);

nlohmann::json to_json(const BackendConfig& c);

class HttpTranslator final : public Translator {
 public:
  explicit HttpTranslator(BackendConfig config);
  std::string complete(std::string_view prompt) override;
  nlohmann::json describe() const override;

 private:
  BackendConfig config_;
};

class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(BackendConfig config);
  std::vector<double> embed(std::string_view text) override;
  nlohmann::json describe() const override;

 private:
  BackendConfig config_;
};

/// Builds the request body for `input` from the config's template.
nlohmann::json build_request_body(const BackendConfig& config, std::string_view input);

std::vector<BackendId> register_backends(Gateway& gateway, const std::vector<BackendConfig>& configs);

}  // namespace toxtrans
