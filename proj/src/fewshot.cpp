#include "toxtrans/fewshot.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "toxtrans/error.hpp"
#include "toxtrans/hash.hpp"
#include "toxtrans/metrics.hpp"
#include "toxtrans/store.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

namespace detail {
std::string_view builtin_template_source();
}

namespace {

const std::map<std::string, std::string, std::less<>>& language_names() {
  static const std::map<std::string, std::string, std::less<>> names = {
      {"singlish", "Singlish"}, {"sg", "Singlish"}, {"zh", "Chinese"},
      {"ms", "Malay"},          {"ta", "Tamil"},    {"en", "English"}};
  return names;
}

const std::set<std::string, std::less<>>& known_placeholders() {
  static const std::set<std::string, std::less<>> names = {"original_language", "target_language",
                                                           "exp_str", "sentence"};
  return names;
}

bool is_placeholder_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Returns the placeholder name if `{name}` starts at `pos`.
std::optional<std::string_view> placeholder_at(std::string_view tpl, std::size_t pos) {
  if (tpl[pos] != '{') return std::nullopt;
  std::size_t end = pos + 1;
  while (end < tpl.size() && is_placeholder_char(tpl[end])) ++end;
  if (end == pos + 1 || end >= tpl.size() || tpl[end] != '}') return std::nullopt;
  return tpl.substr(pos + 1, end - pos - 1);
}

std::string strip_final_newline(std::string text) {
  if (!text.empty() && text.back() == '\n') text.pop_back();
  if (!text.empty() && text.back() == '\r') text.pop_back();
  return text;
}

}  // namespace

std::string language_name(std::string_view code) {
  const auto it = language_names().find(code);
  if (it == language_names().end()) {
    throw Error("language \"" + std::string(code) + "\" is not in the configured set");
  }
  return it->second;
}

const std::vector<std::string>& default_target_languages() {
  static const std::vector<std::string> langs = {"zh", "ms", "ta"};
  return langs;
}

std::optional<int> default_k(std::string_view code) {
  if (code == "zh") return 15;
  if (code == "ms") return 10;
  if (code == "ta") return 20;
  return std::nullopt;
}

TemplateRegistry TemplateRegistry::with_builtin() {
  TemplateRegistry r;
  r.add(std::string(kDefaultTemplateId), std::string(detail::builtin_template_source()));
  return r;
}

void TemplateRegistry::add(std::string id, std::string text) {
  text = strip_final_newline(std::move(text));
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (const auto name = placeholder_at(text, i); name && !known_placeholders().count(*name)) {
      throw Error("template \"" + id + "\" uses unknown placeholder {" + std::string(*name) + "}");
    }
  }
  templates_.insert_or_assign(std::move(id), std::move(text));
}

void TemplateRegistry::add_file(std::string id, const std::filesystem::path& path) {
  add(std::move(id), read_file(path));
}

const std::string& TemplateRegistry::get(std::string_view id) const {
  const auto it = templates_.find(id);
  if (it == templates_.end()) throw Error("unknown template \"" + std::string(id) + "\"");
  return it->second;
}

bool TemplateRegistry::contains(std::string_view id) const { return templates_.count(id) > 0; }

std::string TemplateRegistry::hash(std::string_view id) const { return sha256_hex(get(id)); }

const TemplateRegistry& builtin_templates() {
  static const TemplateRegistry registry = TemplateRegistry::with_builtin();
  return registry;
}

std::string format_examples(std::string_view original_language, std::string_view target_language,
                            std::span<const ExamplePair> examples) {
  if (examples.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += std::to_string(i + 1);
    out += ". ";
    out += original_language;
    out += ": \"";
    out += examples[i].source;
    out += "\" -> ";
    out += target_language;
    out += ": \"";
    out += examples[i].translation;
    out += "\"";
  }
  return out;
}

PromptText render_prompt(const TemplateRegistry& templates, std::string_view template_id,
                         std::string_view original_language, std::string_view target_language,
                         std::span<const ExamplePair> examples, std::string_view sentence,
                         Direction direction) {
  const std::string& tpl = templates.get(template_id);
  if (text::trim(sentence).empty()) throw Error("cannot render a prompt for an empty sentence");
  const auto orig = language_name(original_language);
  const auto target = language_name(target_language);
  const std::map<std::string_view, std::string> values = {
      {"original_language", orig},
      {"target_language", target},
      {"exp_str", format_examples(orig, target, examples)},
      {"sentence", std::string(sentence)}};

  PromptText out;
  out.template_id = std::string(template_id);
  out.example_count = static_cast<int>(examples.size());
  out.direction = direction;
  out.sentence = std::string(sentence);
  out.rendered.reserve(tpl.size() + sentence.size() + 64 * examples.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (const auto name = placeholder_at(tpl, i)) {
      const auto it = values.find(*name);
      if (it == values.end()) throw Error("unfilled placeholder {" + std::string(*name) + "}");
      out.rendered += it->second;
      i += name->size() + 2;
    } else {
      out.rendered.push_back(tpl[i++]);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const FewShotExample& e) {
  j = nlohmann::json{{"source", e.source},
                     {"translation", e.translation},
                     {"target_language", e.target_language},
                     {"origin", e.origin},
                     {"adopted_round", e.adopted_round}};
}

void from_json(const nlohmann::json& j, FewShotExample& e) {
  j.at("source").get_to(e.source);
  j.at("translation").get_to(e.translation);
  j.at("target_language").get_to(e.target_language);
  j.at("origin").get_to(e.origin);
  e.adopted_round = j.value("adopted_round", 3);
  if (text::trim(e.translation).empty()) throw Error("example " + e.source.id + " has empty translation");
  language_name(e.target_language);
}

std::size_t FewShotPool::llm_retained() const {
  return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(), [](const auto& e) {
    return e.origin.kind == OriginKind::llm;
  }));
}

FewShotPool build_pool(std::span<const SourceSentence> curated,
                       std::span<const FinalSelection> finals, std::string target_language,
                       Gateway* gateway, const BackendId* embedder, std::size_t max_size) {
  if (finals.empty()) throw Error("no final selections to build a pool from");
  language_name(target_language);
  std::map<std::string, const FinalSelection*, std::less<>> by_sentence;
  for (const auto& f : finals) {
    if (!by_sentence.emplace(f.sentence_id, &f).second) {
      throw Error("sentence " + f.sentence_id + " has more than one final selection");
    }
  }
  std::vector<std::string> missing;
  for (const auto& s : curated) {
    if (!by_sentence.count(s.id)) missing.push_back(s.id);
  }
  if (!missing.empty()) {
    std::string msg = "missing final selection for sentence";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }
  if (curated.size() > max_size) {
    throw Error("pool of " + std::to_string(curated.size()) + " exceeds the maximum of " +
                std::to_string(max_size));
  }

  FewShotPool pool;
  pool.target_language = std::move(target_language);
  for (const auto& s : curated) {
    const auto& f = *by_sentence.at(s.id);
    if (f.winner.target_language != pool.target_language) {
      throw Error("final selection for " + s.id + " is in " + f.winner.target_language + ", not " +
                  pool.target_language);
    }
    pool.examples.push_back({s, f.winner.text, pool.target_language, f.winner.origin(), 3});
  }
  if (gateway != nullptr && embedder != nullptr) {
    pool.embedder = embedder->name;
    for (const auto& e : pool.examples) {
      pool.embeddings.emplace(e.source.id, gateway->embed(*embedder, e.source.text));
    }
  }
  return pool;
}

std::vector<ScoredExample> select_top_k(const FewShotPool& pool, const SourceSentence& s, int k,
                                        Gateway& gateway, const BackendId& embedder) {
  if (k < 1) throw Error("k must be at least 1");
  if (pool.examples.empty()) throw Error("few-shot pool for " + pool.target_language + " is empty");
  const auto query = gateway.embed(embedder, s.text);
  std::vector<ScoredExample> scored;
  scored.reserve(pool.examples.size());
  for (const auto& e : pool.examples) {
    const auto cached = pool.embedder == embedder.name ? pool.embeddings.find(e.source.id)
                                                       : pool.embeddings.end();
    const auto vec = cached != pool.embeddings.end() ? cached->second
                                                     : gateway.embed(embedder, e.source.text);
    scored.push_back({e, cosine(query, vec).value});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredExample& a, const ScoredExample& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.example.source.id < b.example.source.id;
  });
  scored.resize(std::min(scored.size(), static_cast<std::size_t>(k)));
  return scored;
}

std::vector<ExamplePair> forward_pairs(std::span<const FewShotExample> examples) {
  std::vector<ExamplePair> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({e.source.text, e.translation});
  return out;
}

std::vector<ExamplePair> forward_pairs(std::span<const ScoredExample> examples) {
  std::vector<ExamplePair> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({e.example.source.text, e.example.translation});
  return out;
}

std::vector<ExamplePair> reversed_pairs(std::span<const ExamplePair> pairs) {
  std::vector<ExamplePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.translation, p.source});
  return out;
}

PromptText render_forward_prompt(std::string_view sentence, std::string_view original_language,
                                 std::string_view target_language,
                                 std::span<const ExamplePair> examples,
                                 const TemplateRegistry& templates, std::string_view template_id) {
  return render_prompt(templates, template_id, original_language, target_language, examples,
                       sentence, Direction::forward);
}

PromptText build_back_prompt(std::string_view translation, std::string_view target_language,
                             std::string_view original_language,
                             std::span<const ExamplePair> forward_examples,
                             const TemplateRegistry& templates, std::string_view template_id) {
  if (text::trim(translation).empty()) throw Error("cannot back-translate an empty translation");
  const auto reversed = reversed_pairs(forward_examples);
  return render_prompt(templates, template_id, target_language, original_language, reversed,
                       translation, Direction::back);
}

std::string serialize_pool(const FewShotPool& pool) {
  std::string out;
  for (const auto& e : pool.examples) {
    out += nlohmann::json(e).dump();
    out.push_back('\n');
  }
  return out;
}

FewShotPool parse_pool(std::istream& in, std::string target_language) {
  FewShotPool pool;
  pool.target_language = std::move(target_language);
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    FewShotExample e;
    try {
      e = nlohmann::json::parse(line).get<FewShotExample>();
    } catch (const std::exception& ex) {
      throw Error("pool line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (pool.target_language.empty()) pool.target_language = e.target_language;
    if (e.target_language != pool.target_language) {
      throw Error("pool line " + std::to_string(line_no) + ": language " + e.target_language +
                  " in a " + pool.target_language + " pool");
    }
    if (!seen.insert(e.source.id).second) {
      throw Error("pool line " + std::to_string(line_no) + ": duplicate source id " + e.source.id);
    }
    pool.examples.push_back(std::move(e));
  }
  if (pool.examples.size() > kDefaultPoolMax) {
    throw Error("pool holds " + std::to_string(pool.examples.size()) + " examples; maximum is " +
                std::to_string(kDefaultPoolMax));
  }
  return pool;
}

void save_pool(const FewShotPool& pool, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  atomic_write(path, serialize_pool(pool));
}

FewShotPool load_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open pool " + path.string());
  return parse_pool(in);
}

std::string pool_hash(const FewShotPool& pool) { return sha256_hex(serialize_pool(pool)); }

}  // namespace toxtrans
