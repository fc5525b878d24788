#include "toxtrans/http_backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>

#include "toxtrans/store.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

namespace {

const std::vector<std::string>& secret_keys() {
  static const std::vector<std::string> keys = {
      "api_key", "apikey", "x-api-key", "token",         "access_token",
      "secret",  "password", "authorization", "bearer", "credential"};
  return keys;
}

bool looks_like_secret(std::string_view key) {
  std::string lower(key);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return std::find(secret_keys().begin(), secret_keys().end(), lower) != secret_keys().end();
}

void reject_secrets(const nlohmann::json& j, const std::string& where) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (k != "auth_env_var" && looks_like_secret(k)) {
        throw Error(where + ": key \"" + k +
                    "\" looks like a credential; credentials must come from auth_env_var");
      }
      reject_secrets(v, where);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) reject_secrets(v, where);
  }
}

// Single pass, so placeholder-like text inside the input is left alone.
std::string fill_placeholders(std::string_view s, std::string_view input) {
  std::string out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto p = s.find("{{prompt}}", pos);
    const auto t = s.find("{{text}}", pos);
    const auto next = std::min(p, t);
    if (next == std::string_view::npos) break;
    out.append(s.substr(pos, next - pos));
    out.append(input);
    pos = next + (next == p ? std::string_view("{{prompt}}").size() : std::string_view("{{text}}").size());
  }
  out.append(s.substr(std::min(pos, s.size())));
  return out;
}

void substitute(nlohmann::json& node, std::string_view input, double temperature) {
  if (node.is_string()) {
    const auto s = node.get<std::string>();
    if (s == "{{temperature}}") {
      node = temperature;
      return;
    }
    node = fill_placeholders(s, input);
  } else if (node.is_object() || node.is_array()) {
    for (auto& child : node) substitute(child, input, temperature);
  }
}

struct SplitUrl {
  std::string origin;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("base_url must include a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

nlohmann::json post(const BackendConfig& config, const nlohmann::json& body) {
  const auto [origin, path] = split_url(config.base_url);
  httplib::Client client(origin);
  client.set_connection_timeout(config.timeout_seconds, 0);
  client.set_read_timeout(config.timeout_seconds, 0);
  client.set_write_timeout(config.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config.auth_env_var.empty()) {
    const char* credential = std::getenv(config.auth_env_var.c_str());
    if (credential == nullptr || *credential == '\0') {
      throw Error("environment variable " + config.auth_env_var + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + credential);
  }
  const auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransientError("request to " + config.base_url +
                         " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status) + " from " + config.base_url);
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error("HTTP " + std::to_string(res->status) + " from " + config.base_url + ": " +
                res->body.substr(0, 200));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw Error("response from " + config.base_url + " is not JSON");
  }
}

const nlohmann::json& at_path(const nlohmann::json& response, const std::string& path) {
  try {
    return response.at(nlohmann::json::json_pointer(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("response has nothing at " + path + " (" + e.what() + ")");
  }
}

}  // namespace

BackendConfig parse_backend_config(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("backend config must be a JSON object");
  BackendConfig c;
  c.name = j.value("name", "");
  if (c.name.empty()) throw Error("backend config missing \"name\"");
  const std::string where = "backend \"" + c.name + "\"";
  reject_secrets(j, where);
  c.kind = parse_backend_kind(j.value("kind", ""));
  c.type = j.value("type", "http");
  c.base_url = j.value("base_url", "");
  c.auth_env_var = j.value("auth_env_var", "");
  c.request_template = j.value("request_template", nlohmann::json::object());
  c.response_path = j.value("response_path", "");
  c.concurrency = j.value("concurrency", 4);
  c.temperature = j.value("temperature", 0.0);
  c.timeout_seconds = j.value("timeout_seconds", 120);
  c.mock = j.value("mock", nlohmann::json::object());
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
    c.retry.base_delay = std::chrono::milliseconds(r.value("base_ms", 500));
    c.retry.max_delay = std::chrono::milliseconds(r.value("max_ms", 30'000));
  }
  if (c.concurrency < 1) throw Error(where + ": concurrency must be at least 1");
  if (c.retry.max_attempts < 1) throw Error(where + ": retry.max_attempts must be at least 1");
  if (c.type == "http") {
    if (c.base_url.empty()) throw Error(where + ": http backend needs base_url");
    if (c.response_path.empty() || c.response_path.front() != '/') {
      throw Error(where + ": response_path must be a JSON pointer such as /choices/0/message/content");
    }
  } else if (c.type == "echo" || c.type == "table") {
    if (c.kind != BackendKind::translator) throw Error(where + ": " + c.type + " is a translator type");
  } else if (c.type == "hash") {
    if (c.kind != BackendKind::embedder) throw Error(where + ": hash is an embedder type");
  } else {
    throw Error(where + ": unknown backend type \"" + c.type + "\"");
  }
  return c;
}

std::vector<BackendConfig> parse_backend_configs(const nlohmann::json& j) {
  const auto& list = j.is_object() && j.contains("backends") ? j["backends"] : j;
  if (!list.is_array()) throw Error("backend config file must hold an array of backends");
  std::vector<BackendConfig> out;
  for (const auto& item : list) out.push_back(parse_backend_config(item));
  return out;
}

std::vector<BackendConfig> load_backend_configs(const std::filesystem::path& path) {
  try {
    return parse_backend_configs(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error("cannot parse backend config " + path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const BackendConfig& c) {
  nlohmann::json j{{"name", c.name},
                   {"kind", to_string(c.kind)},
                   {"type", c.type},
                   {"concurrency", c.concurrency},
                   {"temperature", c.temperature},
                   {"retry",
                    {{"max_attempts", c.retry.max_attempts},
                     {"base_ms", c.retry.base_delay.count()},
                     {"max_ms", c.retry.max_delay.count()}}}};
  if (c.type == "http") {
    j["base_url"] = c.base_url;
    j["auth_env_var"] = c.auth_env_var;
    j["request_template"] = c.request_template;
    j["response_path"] = c.response_path;
  } else {
    j["mock"] = c.mock;
  }
  return j;
}

nlohmann::json build_request_body(const BackendConfig& config, std::string_view input) {
  auto body = config.request_template;
  substitute(body, input, config.temperature);
  return body;
}

HttpTranslator::HttpTranslator(BackendConfig config) : config_(std::move(config)) {}

std::string HttpTranslator::complete(std::string_view prompt) {
  const auto response = post(config_, build_request_body(config_, prompt));
  const auto& node = at_path(response, config_.response_path);
  if (!node.is_string()) throw Error("value at " + config_.response_path + " is not a string");
  return node.get<std::string>();
}

nlohmann::json HttpTranslator::describe() const { return to_json(config_); }

HttpEmbedder::HttpEmbedder(BackendConfig config) : config_(std::move(config)) {}

std::vector<double> HttpEmbedder::embed(std::string_view text) {
  const auto response = post(config_, build_request_body(config_, text));
  const auto& node = at_path(response, config_.response_path);
  if (!node.is_array()) throw Error("value at " + config_.response_path + " is not an array");
  std::vector<double> out;
  out.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) throw Error("embedding contains a non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

nlohmann::json HttpEmbedder::describe() const { return to_json(config_); }

std::vector<BackendId> register_backends(Gateway& gateway,
                                         const std::vector<BackendConfig>& configs) {
  std::vector<BackendId> ids;
  for (const auto& c : configs) {
    BackendOptions options;
    options.concurrency = c.concurrency;
    options.retry = c.retry;
    options.temperature = c.temperature;
    options.descriptor = {{"type", c.type}};
    if (c.kind == BackendKind::translator) {
      std::shared_ptr<Translator> t;
      if (c.type == "http") {
        t = std::make_shared<HttpTranslator>(c);
      } else if (c.type == "echo") {
        t = std::make_shared<EchoTranslator>();
      } else {
        const auto table = c.mock.value("table", std::map<std::string, std::string>{});
        const auto fallback =
            c.mock.value("fallback", std::string("echo")) == "error" ? MockFallback::error
                                                                      : MockFallback::echo;
        t = std::make_shared<TableTranslator>(table, fallback);
      }
      ids.push_back(gateway.register_translator(c.name, std::move(t), options));
    } else {
      std::shared_ptr<Embedder> e;
      if (c.type == "http") {
        e = std::make_shared<HttpEmbedder>(c);
      } else {
        e = std::make_shared<HashEmbedder>(c.mock.value("dimension", std::size_t{64}));
      }
      ids.push_back(gateway.register_embedder(c.name, std::move(e), options));
    }
  }
  return ids;
}

}  // namespace toxtrans
