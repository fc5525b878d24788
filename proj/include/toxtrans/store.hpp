#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxtrans/backend.hpp"

namespace toxtrans {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Content-addressed key for one (embedder, text) pair. Text is normalized
/// with NFC + trim before hashing.
class CacheKey {
 public:
  static CacheKey of(std::string_view backend_name, std::string_view text);

  const std::string& hex() const { return hex_; }

  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;

 private:
  explicit CacheKey(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

class EmbeddingCache {
 public:
  virtual ~EmbeddingCache() = default;

  virtual void put(const CacheKey& key, const EmbeddingVector& vector) = 0;
  virtual std::optional<EmbeddingVector> get(const CacheKey& key) const = 0;
};

class MemoryEmbeddingCache final : public EmbeddingCache {
 public:
  void put(const CacheKey& key, const EmbeddingVector& vector) override;
  std::optional<EmbeddingVector> get(const CacheKey& key) const override;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<CacheKey, EmbeddingVector> entries_;
};

/// One JSON file per key under `dir/<first two hex chars>/`. Writes go to a
/// temporary file and are renamed into place, so readers never see a torn
/// vector. A checksum over the raw IEEE-754 bytes guards against corruption;
/// a corrupt entry reads as absent and emits a warning.
class FileEmbeddingCache final : public EmbeddingCache {
 public:
  explicit FileEmbeddingCache(fs::path dir);

  void put(const CacheKey& key, const EmbeddingVector& vector) override;
  std::optional<EmbeddingVector> get(const CacheKey& key) const override;

  fs::path path_for(const CacheKey& key) const;

 private:
  fs::path dir_;
  std::mutex write_mu_;
};

struct ReplayResult {
  std::vector<json> records;
  std::vector<std::string> warnings;
};

/// Named append-only JSONL logs in one directory. Each record is a single
/// line written with one O_APPEND write, serialized per log.
class LogStore {
 public:
  explicit LogStore(fs::path dir);

  /// Registers a log, creating its file if needed. Idempotent.
  void create(std::string_view name);
  bool exists(std::string_view name) const;

  void append(std::string_view name, const json& record);

  /// Records in append order. A trailing partial line (crash mid-write) or
  /// an unparseable line is dropped with a warning.
  ReplayResult replay(std::string_view name) const;

  fs::path path_for(std::string_view name) const;

 private:
  std::mutex& mutex_for(std::string_view name);

  fs::path dir_;
  std::mutex table_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>, std::less<>> log_mu_;
  std::map<std::string, bool, std::less<>> tail_checked_;
};

struct RunManifest {
  std::string run_id;
  std::string timestamp;
  json config;
  std::string template_hash;
  std::map<std::string, std::string> pool_hashes;
  std::string corpus_checksum;
  std::uint64_t seed = 0;
  json backends = json::array();
  json notes = json::object();
};

void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);

/// `runs/<run-id>/{manifest.json, matrix.json, report.md}`; a run directory
/// is immutable once written.
class RunStore {
 public:
  explicit RunStore(fs::path dir);

  bool exists(std::string_view run_id) const;
  /// Writes every artifact; throws if the run id is already taken.
  void write(const RunManifest& manifest,
             const std::map<std::string, std::string>& artifacts);
  RunManifest read_manifest(std::string_view run_id) const;
  std::string read_artifact(std::string_view run_id, std::string_view name) const;
  std::vector<std::string> list() const;

 private:
  fs::path dir_;
  std::mutex mu_;
};

/// The `data/` directory layout shared by the CLI and the server.
struct DataLayout {
  fs::path root;

  fs::path corpus() const { return root / "corpus"; }
  fs::path pools() const { return root / "pools"; }
  fs::path logs() const { return root / "logs"; }
  fs::path cache() const { return root / "cache"; }
  fs::path runs() const { return root / "runs"; }

  void ensure() const;
};

/// Writes `content` to a sibling temporary file, then renames over `path`.
void atomic_write(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);

}  // namespace toxtrans
