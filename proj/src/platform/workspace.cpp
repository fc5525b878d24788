#include "toxtrans/platform/workspace.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "toxtrans/error.hpp"
#include "toxtrans/hash.hpp"

namespace toxtrans::platform {

namespace fs = std::filesystem;
using nlohmann::json;

PlatformConfig parse_platform_config(const json& j, const fs::path& base) {
  PlatformConfig c;
  if (!j.is_object()) throw Error("platform config must be a JSON object");
  c.languages = j.value("languages", default_target_languages());
  for (const auto& l : c.languages) language_name(l);
  std::set<std::string> ids;
  for (const auto& a : j.value("annotators", json::array())) {
    ApiSession s{a.at("id").get<std::string>(), a.value("name", ""), a.value("language", "")};
    if (s.annotator.empty()) throw Error("annotator id must not be empty");
    if (!ids.insert(s.annotator).second) throw Error("duplicate annotator id " + s.annotator);
    if (!s.language.empty() &&
        std::find(c.languages.begin(), c.languages.end(), s.language) == c.languages.end()) {
      throw Error("annotator " + s.annotator + " is assigned to unconfigured language " + s.language);
    }
    if (s.display_name.empty()) s.display_name = s.annotator;
    c.annotators.push_back(std::move(s));
  }
  if (j.contains("backends")) c.backends = base / j["backends"].get<std::string>();
  return c;
}

Workspace::Workspace(fs::path data_dir)
    : layout_{std::move(data_dir)},
      logs_((layout_.ensure(), layout_.logs())),
      runs_(layout_.runs()),
      cache_(std::make_shared<FileEmbeddingCache>(layout_.cache())) {
  const auto file = layout_.root / "platform.json";
  if (fs::exists(file)) {
    try {
      config_ = parse_platform_config(json::parse(read_file(file)), layout_.root);
    } catch (const json::exception& e) {
      throw Error("platform.json: " + std::string(e.what()));
    }
  } else {
    config_.languages = default_target_languages();
  }
}

bool Workspace::has_language(std::string_view code) const {
  return std::find(config_.languages.begin(), config_.languages.end(), code) != config_.languages.end();
}

const ApiSession* Workspace::annotator(std::string_view id) const {
  for (const auto& a : config_.annotators) {
    if (a.annotator == id) return &a;
  }
  return nullptr;
}

Campaign& Workspace::campaign(std::string_view language) {
  if (!has_language(language)) throw Error("language " + std::string(language) + " is not configured");
  std::lock_guard lock(campaigns_mu_);
  auto it = campaigns_.find(language);
  if (it == campaigns_.end()) {
    it = campaigns_.emplace(std::string(language), std::make_unique<Campaign>(std::string(language), &logs_)).first;
  }
  return *it->second;
}

fs::path Workspace::corpus_path(std::string_view name) const {
  return layout_.corpus() / (std::string(name) + ".jsonl");
}

Corpus Workspace::load_corpus(std::string_view name) const {
  const auto path = corpus_path(name);
  if (!fs::exists(path)) throw Error("no corpus named \"" + std::string(name) + "\" in " + layout_.corpus().string());
  auto c = toxtrans::import_corpus(path);
  c.name = std::string(name);
  return c;
}

Corpus Workspace::import_corpus(const fs::path& source, std::string name) {
  auto c = toxtrans::import_corpus(source);
  if (name.empty()) name = source.stem().string();
  if (name.find_first_of("/\\") != std::string::npos || name.starts_with(".")) {
    throw Error("invalid corpus name \"" + name + "\"");
  }
  c.name = name;
  atomic_write(corpus_path(name), serialize_corpus(c));
  return c;
}

fs::path Workspace::pool_path(std::string_view language) const {
  return layout_.pools() / (std::string(language) + ".jsonl");
}

std::optional<FewShotPool> Workspace::load_pool(std::string_view language) const {
  const auto path = pool_path(language);
  if (!fs::exists(path)) return std::nullopt;
  auto pool = toxtrans::load_pool(path);
  if (pool.target_language.empty()) pool.target_language = std::string(language);
  return pool;
}

void Workspace::save_pool(const FewShotPool& pool) { toxtrans::save_pool(pool, pool_path(pool.target_language)); }

std::vector<BackendConfig> Workspace::backend_configs(const std::optional<fs::path>& explicit_path) const {
  if (explicit_path) return load_backend_configs(*explicit_path);
  if (!config_.backends.empty()) return load_backend_configs(config_.backends);
  throw Error("no backend configuration; pass --backends or set \"backends\" in platform.json");
}

std::unique_ptr<Gateway> Workspace::make_gateway(const std::vector<BackendConfig>& configs, std::uint64_t seed) {
  auto gw = std::make_unique<Gateway>(cache_, seed);
  register_backends(*gw, configs);
  return gw;
}

namespace {

BackendId translator_id(const json& j) { return {j.get<std::string>(), BackendKind::translator}; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::map<std::string, std::string> load_references(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open baseline file " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      out[j.at("sentence_id").get<std::string>()] = j.at("translation").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(fmt::format("{} line {}: {}", path.string(), n, e.what()));
    }
  }
  return out;
}

}  // namespace

BenchSetup make_bench_setup(Workspace& ws, const json& j, const fs::path& base) {
  if (!j.is_object()) throw Error("bench config must be a JSON object");
  BenchSetup setup;
  auto& c = setup.config;

  std::vector<BackendConfig> backends;
  if (!j.contains("backends")) {
    backends = ws.backend_configs(std::nullopt);
  } else if (j["backends"].is_string()) {
    backends = load_backend_configs(resolve(base, j["backends"].get<std::string>()));
  } else {
    backends = parse_backend_configs(j["backends"]);
  }
  c.seed = j.value("seed", std::uint64_t{0});
  setup.gateway = ws.make_gateway(backends, c.seed);

  for (const auto& t : j.at("translators")) c.translators.push_back(translator_id(t));
  c.embedder = {j.at("embedder").get<std::string>(), BackendKind::embedder};
  if (j.contains("back_translator") && !j["back_translator"].is_null()) {
    c.back_translator = translator_id(j["back_translator"]);
  }
  c.target_languages = j.value("languages", default_target_languages());
  if (j.contains("k") && !j["k"].is_null()) c.k = j["k"].get<int>();
  if (j.contains("k_values")) c.k_values = j["k_values"].get<std::vector<int>>();
  c.concurrency = j.value("concurrency", std::size_t{4});
  c.failure_budget = j.value("failure_budget", 0.2);
  c.exclude_self = j.value("exclude_self", false);
  c.include_back = j.value("include_back", true);

  if (j.contains("template")) {
    setup.templates = std::make_unique<TemplateRegistry>(TemplateRegistry::with_builtin());
    c.template_id = "custom";
    setup.templates->add_file(c.template_id, resolve(base, j["template"].get<std::string>()));
    c.templates = setup.templates.get();
  }

  const auto corpus_ref = j.at("corpus").get<std::string>();
  const auto corpus_file = resolve(base, corpus_ref);
  const Corpus corpus = fs::exists(corpus_file) ? import_corpus(corpus_file) : ws.load_corpus(corpus_ref);
  if (j.contains("sentences")) {
    for (const auto& id : j["sentences"]) {
      const auto* s = corpus.find(id.get<std::string>());
      if (s == nullptr) throw Error("sentence " + id.get<std::string>() + " is not in corpus " + corpus_ref);
      c.sentences.push_back(*s);
    }
  } else if (j.contains("sample")) {
    c.sentences = sample_balanced(corpus, j["sample"].at("n").get<int>(),
                                  j["sample"].value("seed", c.seed));
  } else {
    c.sentences = corpus.sentences;
  }
  c.corpus_checksum = corpus.checksum;

  const auto pools = j.value("pools", json::object());
  for (const auto& lang : c.target_languages) {
    if (pools.contains(lang)) {
      const auto p = resolve(base, pools[lang].get<std::string>());
      auto pool = load_pool(p);
      if (pool.target_language != lang) throw Error(p.string() + " is not a " + lang + " pool");
      c.pools.emplace(lang, std::move(pool));
    } else if (auto pool = ws.load_pool(lang)) {
      c.pools.emplace(lang, std::move(*pool));
    }
  }

  if (j.contains("baseline")) {
    const auto& b = j["baseline"];
    if (b.is_string() && b.get<std::string>() == "pools") {
      // Gold references: the adopted translations of the pool entries.
      for (const auto& [lang, pool] : c.pools) {
        for (const auto& e : pool.examples) c.baseline[lang][e.source.id] = e.translation;
      }
    } else {
      for (const auto& [lang, path] : b.items()) {
        c.baseline[lang] = load_references(resolve(base, path.get<std::string>()));
      }
    }
  }
  c.validate();
  return setup;
}

BenchSetup load_bench_setup(Workspace& ws, const fs::path& config_file) {
  json j;
  try {
    j = json::parse(read_file(config_file));
  } catch (const json::exception& e) {
    throw Error(config_file.string() + ": " + e.what());
  }
  return make_bench_setup(ws, j, config_file.parent_path());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string new_run_id(std::string_view salt) {
  const auto ts = utc_timestamp();
  const auto nanos = std::chrono::steady_clock::now().time_since_epoch().count();
  return ts + "-" + sha256_hex(std::string(salt) + ts + std::to_string(nanos)).substr(0, 6);
}

}  // namespace toxtrans::platform
