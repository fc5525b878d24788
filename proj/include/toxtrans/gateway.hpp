#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxtrans/backend.hpp"
#include "toxtrans/error.hpp"
#include "toxtrans/prompt_text.hpp"
#include "toxtrans/store.hpp"

namespace toxtrans {

/// A failure worth retrying: timeout, HTTP 429, or a 5xx-equivalent.
class TransientError : public Error {
 public:
  using Error::Error;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30'000};
};

struct BackendOptions {
  int concurrency = 4;
  RetryPolicy retry;
  double temperature = 0.0;
  nlohmann::json descriptor = nlohmann::json::object();
};

struct ModelOutput {
  std::string raw_text;
  BackendId backend;
  std::chrono::microseconds latency{0};
  int attempt_count = 1;
};

class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string complete(std::string_view prompt) = 0;
  virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) = 0;
  virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

/// Base for mock translators: keeps every prompt it was sent, byte for byte.
class RecordingTranslator : public Translator {
 public:
  std::vector<std::string> requests() const;

 protected:
  void record(std::string_view prompt);

 private:
  mutable std::mutex mu_;
  std::vector<std::string> requests_;
};

class EchoTranslator final : public RecordingTranslator {
 public:
  std::string complete(std::string_view prompt) override;
  nlohmann::json describe() const override { return {{"type", "echo"}}; }
};

enum class MockFallback { echo, error };

/// Returns the scripted output for the sentence a prompt asks to translate.
/// Prompts that are not template renderings are matched whole.
class TableTranslator final : public RecordingTranslator {
 public:
  TableTranslator(std::map<std::string, std::string> table, MockFallback fallback);
  std::string complete(std::string_view prompt) override;
  nlohmann::json describe() const override;

 private:
  std::map<std::string, std::string> table_;
  MockFallback fallback_;
};

/// Plays a fixed script of replies and failures, then echoes.
class ScriptedTranslator final : public RecordingTranslator {
 public:
  struct Step {
    enum class Kind { reply, transient_failure, permanent_failure };
    Kind kind = Kind::reply;
    std::string text;
  };

  explicit ScriptedTranslator(std::vector<Step> script);
  std::string complete(std::string_view prompt) override;
  nlohmann::json describe() const override { return {{"type", "scripted"}}; }

 private:
  std::mutex mu_;
  std::vector<Step> script_;
  std::size_t next_ = 0;
};

class FunctionTranslator final : public RecordingTranslator {
 public:
  using Fn = std::function<std::string(std::string_view prompt)>;
  explicit FunctionTranslator(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(std::string_view prompt) override;
  nlohmann::json describe() const override { return {{"type", "function"}}; }

 private:
  Fn fn_;
};

/// Deterministic pseudo-embedding seeded by the SHA-256 of the text.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = 64);
  std::vector<double> embed(std::string_view text) override;
  nlohmann::json describe() const override;

 private:
  std::size_t dimension_;
};

/// Fixed text -> vector table; unknown text is a permanent failure.
class TableEmbedder final : public Embedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table);
  std::vector<double> embed(std::string_view text) override;
  nlohmann::json describe() const override { return {{"type", "table"}}; }

 private:
  std::map<std::string, std::vector<double>, std::less<>> table_;
};

/// The sentence in a rendered prompt's closing `<Language>: "<sentence>"`
/// line, or nullopt if the prompt does not end that way.
std::optional<std::string> extract_prompt_sentence(std::string_view prompt);

/// Registry of translator and embedder backends. Completions retry transient
/// failures with exponential backoff and full jitter; in-flight requests per
/// backend are bounded. Embeddings are memoized for the life of the gateway
/// and optionally persisted through an EmbeddingCache.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<EmbeddingCache> persistent_cache = nullptr,
                   std::uint64_t seed = 0);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  BackendId register_translator(std::string name, std::shared_ptr<Translator> translator,
                                BackendOptions options = {});
  BackendId register_embedder(std::string name, std::shared_ptr<Embedder> embedder,
                              BackendOptions options = {});
  BackendId register_mock_translator(std::string name, std::map<std::string, std::string> table,
                                     MockFallback fallback);

  bool has(const BackendId& id) const;
  std::vector<BackendId> backends() const;
  /// Name, kind, options and backend self-description, for run manifests.
  nlohmann::json describe() const;

  ModelOutput complete(const BackendId& backend, const PromptText& prompt);
  ModelOutput complete(const BackendId& backend, std::string_view prompt);

  EmbeddingVector embed(const BackendId& backend, std::string_view text);

  /// Seeds the cache with a known vector for (embedder, text).
  void plant_embedding(const BackendId& backend, std::string_view text,
                       std::vector<double> values);

  /// Replaces the backoff sleep; tests install a no-op or a recorder.
  void set_sleep(std::function<void(std::chrono::milliseconds)> sleep);

 private:
  struct Entry;
  Entry& lookup(const BackendId& id, BackendKind kind);
  std::chrono::milliseconds backoff(const RetryPolicy& policy, int attempt);

  mutable std::shared_mutex registry_mu_;
  std::map<BackendId, std::unique_ptr<Entry>> entries_;

  std::shared_ptr<EmbeddingCache> persistent_;
  MemoryEmbeddingCache memo_;
  std::mutex memo_mu_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::function<void(std::chrono::milliseconds)> sleep_;
};

}  // namespace toxtrans
