#include "toxtrans/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <fstream>
#include <sstream>

#include "toxtrans/diagnostics.hpp"
#include "toxtrans/error.hpp"
#include "toxtrans/hash.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

namespace {

std::string bytes_checksum(std::span<const double> values) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(values.data()),
                                     values.size() * sizeof(double)));
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("write failed for " + path.string() + ": " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void check_log_name(std::string_view name) {
  if (name.empty() || name.find('/') != std::string_view::npos || name.front() == '.') {
    throw Error("invalid log name \"" + std::string(name) + "\"");
  }
}

}  // namespace

CacheKey CacheKey::of(std::string_view backend_name, std::string_view text) {
  std::string material(backend_name);
  material.push_back('\0');
  material += text::normalize_for_key(text);
  return CacheKey(sha256_hex(material));
}

void MemoryEmbeddingCache::put(const CacheKey& key, const EmbeddingVector& vector) {
  std::unique_lock lock(mu_);
  entries_.insert_or_assign(key, vector);
}

std::optional<EmbeddingVector> MemoryEmbeddingCache::get(const CacheKey& key) const {
  std::shared_lock lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t MemoryEmbeddingCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

FileEmbeddingCache::FileEmbeddingCache(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

fs::path FileEmbeddingCache::path_for(const CacheKey& key) const {
  return dir_ / key.hex().substr(0, 2) / (key.hex() + ".json");
}

void FileEmbeddingCache::put(const CacheKey& key, const EmbeddingVector& vector) {
  json j;
  j["key"] = key.hex();
  j["backend"] = vector.source_backend().name;
  j["dimension"] = vector.dimension();
  j["values"] = std::vector<double>(vector.values().begin(), vector.values().end());
  j["checksum"] = bytes_checksum(vector.values());
  const auto path = path_for(key);
  std::lock_guard lock(write_mu_);
  fs::create_directories(path.parent_path());
  atomic_write(path, j.dump());
}

std::optional<EmbeddingVector> FileEmbeddingCache::get(const CacheKey& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    const json j = json::parse(read_file(path));
    auto values = j.at("values").get<std::vector<double>>();
    if (j.at("key").get<std::string>() != key.hex() ||
        j.at("dimension").get<std::size_t>() != values.size() ||
        j.at("checksum").get<std::string>() != bytes_checksum(values)) {
      throw Error("checksum mismatch");
    }
    return EmbeddingVector::make(
        std::move(values), BackendId{j.at("backend").get<std::string>(), BackendKind::embedder});
  } catch (const std::exception& e) {
    warn("embedding cache entry " + path.string() + " is corrupt (" + e.what() +
         "); treating as absent");
    return std::nullopt;
  }
}

LogStore::LogStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path LogStore::path_for(std::string_view name) const {
  return dir_ / (std::string(name) + ".jsonl");
}

void LogStore::create(std::string_view name) {
  check_log_name(name);
  const auto path = path_for(name);
  std::lock_guard lock(mutex_for(name));
  if (fs::exists(path)) return;
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot create log " + path.string() + ": " + std::strerror(errno));
  ::close(fd);
}

bool LogStore::exists(std::string_view name) const {
  std::error_code ec;
  return fs::exists(path_for(name), ec);
}

std::mutex& LogStore::mutex_for(std::string_view name) {
  std::lock_guard lock(table_mu_);
  auto it = log_mu_.find(name);
  if (it == log_mu_.end()) {
    it = log_mu_.emplace(std::string(name), std::make_unique<std::mutex>()).first;
  }
  return *it->second;
}

void LogStore::append(std::string_view name, const json& record) {
  if (!exists(name)) throw Error("unknown log \"" + std::string(name) + "\"");
  std::string line = record.dump();
  line.push_back('\n');
  const auto path = path_for(name);

  std::lock_guard lock(mutex_for(name));
  const int fd = ::open(path.c_str(), O_RDWR | O_APPEND | O_CLOEXEC);
  if (fd < 0) throw Error("cannot open log " + path.string() + ": " + std::strerror(errno));
  try {
    bool& checked = [&]() -> bool& {
      std::lock_guard table_lock(table_mu_);
      return tail_checked_[std::string(name)];
    }();
    if (!checked) {
      // Seal a torn tail left by a crash so the next record starts on its own line.
      const off_t size = ::lseek(fd, 0, SEEK_END);
      if (size > 0) {
        char last = '\n';
        if (::pread(fd, &last, 1, size - 1) == 1 && last != '\n') write_all(fd, "\n", path);
      }
      checked = true;
    }
    write_all(fd, line, path);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

ReplayResult LogStore::replay(std::string_view name) const {
  if (!exists(name)) throw Error("unknown log \"" + std::string(name) + "\"");
  const std::string content = read_file(path_for(name));
  ReplayResult result;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    ++line_no;
    const auto end = content.find('\n', start);
    if (end == std::string::npos) {
      result.warnings.push_back("log " + std::string(name) + ": dropped partial trailing record at line " +
                                std::to_string(line_no));
      break;
    }
    const std::string_view line(content.data() + start, end - start);
    start = end + 1;
    if (text::trim(line).empty()) continue;
    try {
      result.records.push_back(json::parse(line));
    } catch (const json::exception&) {
      result.warnings.push_back("log " + std::string(name) + ": dropped unparseable record at line " +
                                std::to_string(line_no));
    }
  }
  for (const auto& w : result.warnings) warn(w);
  return result;
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"run_id", m.run_id},
           {"timestamp", m.timestamp},
           {"config", m.config},
           {"template_hash", m.template_hash},
           {"pool_hashes", m.pool_hashes},
           {"corpus_checksum", m.corpus_checksum},
           {"seed", m.seed},
           {"backends", m.backends},
           {"notes", m.notes}};
}

void from_json(const json& j, RunManifest& m) {
  j.at("run_id").get_to(m.run_id);
  j.at("timestamp").get_to(m.timestamp);
  m.config = j.value("config", json::object());
  m.template_hash = j.value("template_hash", "");
  m.pool_hashes = j.value("pool_hashes", std::map<std::string, std::string>{});
  m.corpus_checksum = j.value("corpus_checksum", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.backends = j.value("backends", json::array());
  m.notes = j.value("notes", json::object());
}

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

bool RunStore::exists(std::string_view run_id) const {
  std::error_code ec;
  return fs::exists(dir_ / std::string(run_id) / "manifest.json", ec);
}

void RunStore::write(const RunManifest& manifest,
                     const std::map<std::string, std::string>& artifacts) {
  if (manifest.run_id.empty() || manifest.run_id.find('/') != std::string::npos) {
    throw Error("invalid run id \"" + manifest.run_id + "\"");
  }
  std::lock_guard lock(mu_);
  const auto run_dir = dir_ / manifest.run_id;
  if (!fs::create_directory(run_dir)) {
    throw Error("run \"" + manifest.run_id + "\" already exists");
  }
  for (const auto& [name, content] : artifacts) atomic_write(run_dir / name, content);
  atomic_write(run_dir / "manifest.json", json(manifest).dump(2) + "\n");
}

RunManifest RunStore::read_manifest(std::string_view run_id) const {
  return json::parse(read_artifact(run_id, "manifest.json")).get<RunManifest>();
}

std::string RunStore::read_artifact(std::string_view run_id, std::string_view name) const {
  const auto path = dir_ / std::string(run_id) / std::string(name);
  if (!fs::exists(path)) {
    throw Error("run \"" + std::string(run_id) + "\" has no " + std::string(name));
  }
  return read_file(path);
}

std::vector<std::string> RunStore::list() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void DataLayout::ensure() const {
  for (const auto& p : {corpus(), pools(), logs(), cache(), runs()}) fs::create_directories(p);
}

void atomic_write(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned long> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace toxtrans
