#include "toxtrans/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include "toxtrans/hash.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "back"; }

namespace {

constexpr std::string_view kClosingInstruction =
    "Now, translate the following sentence while keeping its tone intact:";

// Matches `<Language>: "` at the start of `line`; returns the offset just past
// the opening quote.
std::optional<std::size_t> language_label_end(std::string_view line) {
  std::size_t i = 0;
  if (line.empty() || !std::isalpha(static_cast<unsigned char>(line[0]))) return std::nullopt;
  while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) ||
                             line[i] == ' ' || line[i] == '_' || line[i] == '-')) {
    ++i;
  }
  if (line.substr(i, 3) != ": \"") return std::nullopt;
  return i + 3;
}

class Limiter {
 public:
  explicit Limiter(int limit) : limit_(std::max(1, limit)) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
};

class LimiterGuard {
 public:
  explicit LimiterGuard(Limiter& l) : l_(l) { l_.acquire(); }
  ~LimiterGuard() { l_.release(); }
  LimiterGuard(const LimiterGuard&) = delete;
  LimiterGuard& operator=(const LimiterGuard&) = delete;

 private:
  Limiter& l_;
};

}  // namespace

std::optional<std::string> extract_prompt_sentence(std::string_view prompt) {
  if (prompt.empty() || prompt.back() != '"') return std::nullopt;
  if (const auto marker = prompt.rfind(kClosingInstruction); marker != std::string_view::npos) {
    auto rest = text::trim(prompt.substr(marker + kClosingInstruction.size()));
    if (const auto open = language_label_end(rest)) {
      if (rest.size() >= *open + 1) return std::string(rest.substr(*open, rest.size() - *open - 1));
    }
    return std::nullopt;
  }
  // No known closing instruction: take the last line that opens with a label.
  std::size_t pos = prompt.size();
  while (true) {
    const auto nl = prompt.rfind('\n', pos == 0 ? 0 : pos - 1);
    const std::size_t start = nl == std::string_view::npos ? 0 : nl + 1;
    const auto tail = prompt.substr(start);
    if (const auto open = language_label_end(tail); open && tail.size() >= *open + 1) {
      return std::string(tail.substr(*open, tail.size() - *open - 1));
    }
    if (nl == std::string_view::npos || nl == 0) return std::nullopt;
    pos = nl;
  }
}

std::vector<std::string> RecordingTranslator::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

void RecordingTranslator::record(std::string_view prompt) {
  std::lock_guard lock(mu_);
  requests_.emplace_back(prompt);
}

std::string EchoTranslator::complete(std::string_view prompt) {
  record(prompt);
  return std::string(prompt);
}

TableTranslator::TableTranslator(std::map<std::string, std::string> table, MockFallback fallback)
    : table_(std::move(table)), fallback_(fallback) {}

std::string TableTranslator::complete(std::string_view prompt) {
  record(prompt);
  const auto sentence = extract_prompt_sentence(prompt).value_or(std::string(prompt));
  if (const auto it = table_.find(sentence); it != table_.end()) return it->second;
  if (fallback_ == MockFallback::echo) return std::string(prompt);
  throw Error("no scripted output for \"" + sentence + "\"");
}

nlohmann::json TableTranslator::describe() const {
  return {{"type", "table"},
          {"entries", table_.size()},
          {"fallback", fallback_ == MockFallback::echo ? "echo" : "error"}};
}

ScriptedTranslator::ScriptedTranslator(std::vector<Step> script) : script_(std::move(script)) {}

std::string ScriptedTranslator::complete(std::string_view prompt) {
  record(prompt);
  Step step;
  {
    std::lock_guard lock(mu_);
    if (next_ >= script_.size()) return std::string(prompt);
    step = script_[next_++];
  }
  switch (step.kind) {
    case Step::Kind::transient_failure:
      throw TransientError(step.text.empty() ? "scripted transient failure" : step.text);
    case Step::Kind::permanent_failure:
      throw Error(step.text.empty() ? "scripted permanent failure" : step.text);
    case Step::Kind::reply:
      break;
  }
  return step.text;
}

std::string FunctionTranslator::complete(std::string_view prompt) {
  record(prompt);
  return fn_(prompt);
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw Error("hash embedder dimension must be positive");
}

std::vector<double> HashEmbedder::embed(std::string_view text) {
  const auto digest = sha256_hex(text);
  std::uint64_t state = std::stoull(digest.substr(0, 16), nullptr, 16);
  std::vector<double> out(dimension_);
  for (auto& v : out) {
    // splitmix64
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    v = static_cast<double>(z >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  if (std::all_of(out.begin(), out.end(), [](double v) { return v == 0.0; })) out[0] = 1.0;
  return out;
}

nlohmann::json HashEmbedder::describe() const {
  return {{"type", "hash"}, {"dimension", dimension_}};
}

TableEmbedder::TableEmbedder(std::map<std::string, std::vector<double>> table)
    : table_(table.begin(), table.end()) {}

std::vector<double> TableEmbedder::embed(std::string_view text) {
  const auto it = table_.find(text);
  if (it == table_.end()) throw Error("no planted embedding for \"" + std::string(text) + "\"");
  return it->second;
}

struct Gateway::Entry {
  BackendId id;
  BackendOptions options;
  std::shared_ptr<Translator> translator;
  std::shared_ptr<Embedder> embedder;
  Limiter limiter;

  Entry(BackendId i, BackendOptions o)
      : id(std::move(i)), options(std::move(o)), limiter(options.concurrency) {}
};

Gateway::Gateway(std::shared_ptr<EmbeddingCache> persistent_cache, std::uint64_t seed)
    : persistent_(std::move(persistent_cache)),
      rng_(seed),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

Gateway::~Gateway() = default;

BackendId Gateway::register_translator(std::string name, std::shared_ptr<Translator> translator,
                                       BackendOptions options) {
  if (name.empty()) throw Error("backend name must be non-empty");
  if (!translator) throw Error("null translator for " + name);
  if (options.retry.max_attempts < 1) throw Error("retry limit must be at least 1");
  BackendId id{std::move(name), BackendKind::translator};
  std::unique_lock lock(registry_mu_);
  if (entries_.count(id)) throw Error("translator \"" + id.name + "\" already registered");
  auto entry = std::make_unique<Entry>(id, std::move(options));
  entry->translator = std::move(translator);
  entries_.emplace(id, std::move(entry));
  return id;
}

BackendId Gateway::register_embedder(std::string name, std::shared_ptr<Embedder> embedder,
                                     BackendOptions options) {
  if (name.empty()) throw Error("backend name must be non-empty");
  if (!embedder) throw Error("null embedder for " + name);
  if (options.retry.max_attempts < 1) throw Error("retry limit must be at least 1");
  BackendId id{std::move(name), BackendKind::embedder};
  std::unique_lock lock(registry_mu_);
  if (entries_.count(id)) throw Error("embedder \"" + id.name + "\" already registered");
  auto entry = std::make_unique<Entry>(id, std::move(options));
  entry->embedder = std::move(embedder);
  entries_.emplace(id, std::move(entry));
  return id;
}

BackendId Gateway::register_mock_translator(std::string name,
                                            std::map<std::string, std::string> table,
                                            MockFallback fallback) {
  return register_translator(std::move(name),
                             std::make_shared<TableTranslator>(std::move(table), fallback));
}

bool Gateway::has(const BackendId& id) const {
  std::shared_lock lock(registry_mu_);
  return entries_.count(id) > 0;
}

std::vector<BackendId> Gateway::backends() const {
  std::shared_lock lock(registry_mu_);
  std::vector<BackendId> out;
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

nlohmann::json Gateway::describe() const {
  std::shared_lock lock(registry_mu_);
  auto out = nlohmann::json::array();
  for (const auto& [id, e] : entries_) {
    nlohmann::json d = e->options.descriptor;
    d["name"] = id.name;
    d["kind"] = to_string(id.kind);
    d["concurrency"] = e->options.concurrency;
    d["max_attempts"] = e->options.retry.max_attempts;
    if (id.kind == BackendKind::translator) d["temperature"] = e->options.temperature;
    d["implementation"] = e->translator ? e->translator->describe() : e->embedder->describe();
    out.push_back(std::move(d));
  }
  return out;
}

Gateway::Entry& Gateway::lookup(const BackendId& id, BackendKind kind) {
  std::shared_lock lock(registry_mu_);
  const auto it = entries_.find(BackendId{id.name, kind});
  if (it == entries_.end() || id.kind != kind) {
    throw Error("unregistered " + std::string(to_string(kind)) + " backend \"" + id.name + "\"");
  }
  return *it->second;
}

std::chrono::milliseconds Gateway::backoff(const RetryPolicy& policy, int attempt) {
  const auto exp = std::min<long long>(
      policy.max_delay.count(),
      policy.base_delay.count() * (1LL << std::min(attempt - 1, 30)));
  if (exp <= 0) return std::chrono::milliseconds{0};
  std::lock_guard lock(rng_mu_);
  std::uniform_int_distribution<long long> dist(0, exp);
  return std::chrono::milliseconds{dist(rng_)};
}

void Gateway::set_sleep(std::function<void(std::chrono::milliseconds)> sleep) {
  sleep_ = std::move(sleep);
}

ModelOutput Gateway::complete(const BackendId& backend, const PromptText& prompt) {
  return complete(backend, std::string_view(prompt.rendered));
}

ModelOutput Gateway::complete(const BackendId& backend, std::string_view prompt) {
  auto& entry = lookup(backend, BackendKind::translator);
  LimiterGuard guard(entry.limiter);
  const auto start = std::chrono::steady_clock::now();
  const int limit = entry.options.retry.max_attempts;
  std::string last_failure;
  for (int attempt = 1; attempt <= limit; ++attempt) {
    std::string text;
    try {
      text = entry.translator->complete(prompt);
    } catch (const TransientError& e) {
      last_failure = e.what();
      if (attempt < limit) sleep_(backoff(entry.options.retry, attempt));
      continue;
    } catch (const Error& e) {
      throw Error("backend \"" + backend.name + "\": " + e.what());
    }
    if (text::trim(text).empty()) {
      throw Error("backend \"" + backend.name + "\" returned an empty completion");
    }
    return ModelOutput{
        std::move(text), entry.id,
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start),
        attempt};
  }
  throw Error("backend \"" + backend.name + "\": attempts exhausted after " +
              std::to_string(limit) + " tries; last failure: " + last_failure);
}

EmbeddingVector Gateway::embed(const BackendId& backend, std::string_view text) {
  if (text::trim(text).empty()) throw Error("cannot embed empty text");
  auto& entry = lookup(backend, BackendKind::embedder);
  const std::string normalized = text::normalize_for_key(text);
  const auto key = CacheKey::of(backend.name, normalized);
  if (auto hit = memo_.get(key)) return *hit;
  if (persistent_) {
    if (auto hit = persistent_->get(key)) {
      std::lock_guard lock(memo_mu_);
      if (auto raced = memo_.get(key)) return *raced;
      memo_.put(key, *hit);
      return *hit;
    }
  }

  std::vector<double> values;
  {
    LimiterGuard guard(entry.limiter);
    const int limit = entry.options.retry.max_attempts;
    std::string last_failure;
    bool done = false;
    for (int attempt = 1; attempt <= limit && !done; ++attempt) {
      try {
        values = entry.embedder->embed(normalized);
        done = true;
      } catch (const TransientError& e) {
        last_failure = e.what();
        if (attempt < limit) sleep_(backoff(entry.options.retry, attempt));
      } catch (const Error& e) {
        throw Error("embedder \"" + backend.name + "\": " + e.what());
      }
    }
    if (!done) {
      throw Error("embedder \"" + backend.name + "\": attempts exhausted after " +
                  std::to_string(limit) + " tries; last failure: " + last_failure);
    }
  }
  auto vec = EmbeddingVector::make(std::move(values), entry.id);

  std::lock_guard lock(memo_mu_);
  if (auto raced = memo_.get(key)) return *raced;
  memo_.put(key, vec);
  if (persistent_) persistent_->put(key, vec);
  return vec;
}

void Gateway::plant_embedding(const BackendId& backend, std::string_view text,
                              std::vector<double> values) {
  auto& entry = lookup(backend, BackendKind::embedder);
  auto vec = EmbeddingVector::make(std::move(values), entry.id);
  const auto key = CacheKey::of(backend.name, text);
  std::lock_guard lock(memo_mu_);
  memo_.put(key, vec);
  if (persistent_) persistent_->put(key, vec);
}

}  // namespace toxtrans
