#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxtrans/annotation.hpp"
#include "toxtrans/bench.hpp"
#include "toxtrans/corpus.hpp"
#include "toxtrans/fewshot.hpp"
#include "toxtrans/gateway.hpp"
#include "toxtrans/http_backend.hpp"
#include "toxtrans/store.hpp"

namespace toxtrans::platform {

/// Who is annotating, under which display name, for which language.
struct ApiSession {
  std::string annotator;
  std::string display_name;
  std::string language;
};

/// `<data-dir>/platform.json`; every field optional.
struct PlatformConfig {
  std::vector<std::string> languages;
  /// Empty means any annotator id is accepted.
  std::vector<ApiSession> annotators;
  std::filesystem::path backends;
};

PlatformConfig parse_platform_config(const nlohmann::json& j, const std::filesystem::path& base);

/// The data directory and the campaigns, caches and runs stored in it.
/// Campaigns are loaded on first use by replaying their logs.
class Workspace {
 public:
  explicit Workspace(std::filesystem::path data_dir);

  const DataLayout& layout() const { return layout_; }
  const PlatformConfig& config() const { return config_; }
  bool has_language(std::string_view code) const;
  const ApiSession* annotator(std::string_view id) const;

  Campaign& campaign(std::string_view language);
  LogStore& logs() { return logs_; }
  RunStore& runs() { return runs_; }
  std::shared_ptr<EmbeddingCache> cache() { return cache_; }

  std::filesystem::path corpus_path(std::string_view name) const;
  Corpus load_corpus(std::string_view name) const;
  /// Validates, stores as `corpus/<name>.jsonl`, returns the stored corpus.
  Corpus import_corpus(const std::filesystem::path& source, std::string name);

  std::filesystem::path pool_path(std::string_view language) const;
  std::optional<FewShotPool> load_pool(std::string_view language) const;
  void save_pool(const FewShotPool& pool);

  /// Backend configs from `explicit_path`, else the platform config.
  std::vector<BackendConfig> backend_configs(const std::optional<std::filesystem::path>& explicit_path) const;
  /// A gateway over the persistent embedding cache with `configs` registered.
  std::unique_ptr<Gateway> make_gateway(const std::vector<BackendConfig>& configs, std::uint64_t seed = 0);

 private:
  DataLayout layout_;
  PlatformConfig config_;
  LogStore logs_;
  RunStore runs_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::mutex campaigns_mu_;
  std::map<std::string, std::unique_ptr<Campaign>, std::less<>> campaigns_;
};

/// A bench config file resolved against a workspace: backends registered,
/// corpus, pools and baseline loaded.
struct BenchSetup {
  BenchConfig config;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<TemplateRegistry> templates;
};

/// Paths in the file are relative to the file's directory; a corpus or pool
/// that is not found there is looked up in the workspace.
BenchSetup load_bench_setup(Workspace& ws, const std::filesystem::path& config_file);
BenchSetup make_bench_setup(Workspace& ws, const nlohmann::json& j, const std::filesystem::path& base);

/// UTC timestamp plus a short hash of `salt`, e.g. 20260101T120000Z-3fa2c1.
std::string new_run_id(std::string_view salt);
std::string utc_timestamp();

}  // namespace toxtrans::platform
