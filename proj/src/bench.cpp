#include "toxtrans/bench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "toxtrans/error.hpp"
#include "toxtrans/parallel.hpp"
#include "toxtrans/reply.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

using nlohmann::json;

void BenchConfig::validate() const {
  if (target_languages.empty()) throw Error("bench config lists no target languages");
  for (const auto& l : target_languages) language_name(l);
  if (k_values.empty()) throw Error("k_values must not be empty");
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] < 1) throw Error("k_values must be positive");
    if (i > 0 && k_values[i] <= k_values[i - 1]) throw Error("k_values must be strictly ascending");
  }
  if (k && *k < 0) throw Error("k must not be negative");
  if (sentences.empty()) throw Error("bench config has no sentences");
  std::set<std::string> ids;
  for (const auto& s : sentences) {
    if (!ids.insert(s.id).second) throw Error("duplicate sentence id " + s.id);
  }
  if (failure_budget < 0.0 || failure_budget > 1.0) throw Error("failure_budget must lie in [0, 1]");
  if (concurrency < 1) throw Error("concurrency must be at least 1");
  if (!registry().contains(template_id)) throw Error("unknown template \"" + template_id + "\"");
  for (const auto& [lang, pool] : pools) {
    if (pool.target_language != lang) {
      throw Error("pool registered for " + lang + " holds " + pool.target_language + " examples");
    }
  }
}

int BenchConfig::resolved_k(std::string_view language) const {
  if (k) return *k;
  const auto it = pools.find(std::string(language));
  if (it == pools.end()) return 0;
  return default_k(language).value_or(static_cast<int>(it->second.examples.size()));
}

const TemplateRegistry& BenchConfig::registry() const {
  return templates != nullptr ? *templates : builtin_templates();
}

const Cell* ScoreMatrix::find(std::string_view model, std::string_view language,
                              SimilarityKind metric) const {
  const auto it = cells.find({std::string(model), std::string(language), metric});
  return it == cells.end() ? nullptr : &it->second;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(); }

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json sentence_to_json(const SentenceScore& s) {
  json j{{"sentence_id", s.sentence_id}, {"score", optional_number(s.score)}};
  if (!s.translation.empty()) j["translation"] = s.translation;
  if (!s.back_text.empty()) j["back_text"] = s.back_text;
  if (!s.parse_mode.empty()) j["parse_mode"] = s.parse_mode;
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

SentenceScore sentence_from_json(const json& j) {
  return {j.at("sentence_id").get<std::string>(), number_or_null(j.at("score")),
          j.value("translation", ""),              j.value("back_text", ""),
          j.value("parse_mode", ""),               j.value("error", "")};
}

json cell_to_json(const Cell& c) {
  auto per = json::array();
  for (const auto& s : c.per_sentence) per.push_back(sentence_to_json(s));
  return {{"mean", optional_number(c.mean)},
          {"valid", c.valid},
          {"failures", c.failures},
          {"per_sentence", per}};
}

Cell cell_from_json(const json& j) {
  Cell c;
  c.mean = number_or_null(j.at("mean"));
  c.valid = j.at("valid").get<bool>();
  c.failures = j.at("failures").get<std::size_t>();
  for (const auto& s : j.at("per_sentence")) c.per_sentence.push_back(sentence_from_json(s));
  return c;
}

std::string language_label(std::string_view code) { return text::to_upper_ascii(code); }

std::vector<SourceSentence> sorted_sentences(const BenchConfig& config) {
  auto out = config.sentences;
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::vector<ExamplePair> examples_for(const BenchConfig& config, std::string_view language,
                                      const SourceSentence& s, int k, Gateway& gateway) {
  if (k == 0) return {};
  const auto it = config.pools.find(std::string(language));
  if (it == config.pools.end()) {
    throw Error(fmt::format("no few-shot pool for {} (needed for k={})", language, k));
  }
  auto scored = select_top_k(it->second, s, k + (config.exclude_self ? 1 : 0), gateway, config.embedder);
  if (config.exclude_self) {
    std::erase_if(scored, [&](const ScoredExample& e) { return e.example.source.id == s.id; });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
  }
  return forward_pairs(std::span<const ScoredExample>(scored));
}

struct ItemResult {
  SentenceScore direct;
  SentenceScore back;
};

ItemResult evaluate(const BenchConfig& config, Gateway& gateway, const BackendId& translator,
                    std::string_view language, const SourceSentence& s, int k) {
  ItemResult r;
  r.direct.sentence_id = s.id;
  r.back.sentence_id = s.id;
  std::vector<ExamplePair> pairs;
  ParsedOutput parsed;
  try {
    pairs = examples_for(config, language, s, k, gateway);
    const auto prompt = render_forward_prompt(s.text, s.source_language, language, pairs,
                                              config.registry(), config.template_id);
    const auto out = gateway.complete(translator, prompt);
    parsed = parse_reply(out, prompt);
    r.direct.translation = parsed.translation;
    r.direct.parse_mode = std::string(to_string(parsed.mode));
    r.direct.score = sim_direct(gateway, config.embedder, s, parsed.translation).value;
  } catch (const std::exception& e) {
    r.direct.error = e.what();
    r.back.error = std::string("forward translation failed: ") + e.what();
    return r;
  }
  if (!config.include_back) return r;
  r.back.translation = parsed.translation;
  try {
    const auto builder = [&](std::string_view translation) {
      return build_back_prompt(translation, language, s.source_language, pairs, config.registry(),
                               config.template_id);
    };
    auto bt = sim_back(gateway, config.back_translator.value_or(translator), builder, config.embedder,
                       s, parsed.translation);
    r.back.score = bt.score.value;
    r.back.back_text = std::move(bt.back_text);
    r.back.parse_mode = std::string(to_string(bt.parse_mode));
  } catch (const std::exception& e) {
    r.back.error = e.what();
  }
  return r;
}

}  // namespace

Cell make_cell(std::vector<SentenceScore> per_sentence, double failure_budget) {
  Cell c;
  std::vector<double> scores;
  for (const auto& s : per_sentence) {
    if (s.score) {
      scores.push_back(*s.score);
    } else {
      ++c.failures;
    }
  }
  if (!scores.empty()) c.mean = mean(scores);
  c.valid = c.mean.has_value() &&
            static_cast<double>(c.failures) <= failure_budget * static_cast<double>(per_sentence.size());
  c.per_sentence = std::move(per_sentence);
  return c;
}

void to_json(json& j, const ScoreMatrix& m) {
  auto cells = json::array();
  for (const auto& [key, cell] : m.cells) {
    auto c = cell_to_json(cell);
    c["model"] = key.model;
    c["language"] = key.language;
    c["metric"] = to_string(key.metric);
    cells.push_back(std::move(c));
  }
  j = json{{"run_id", m.run_id},     {"config", m.config}, {"models", m.models},
           {"languages", m.languages}, {"cells", cells},     {"warnings", m.warnings}};
}

void from_json(const json& j, ScoreMatrix& m) {
  m.run_id = j.value("run_id", "");
  m.config = j.value("config", json::object());
  m.models = j.at("models").get<std::vector<std::string>>();
  m.languages = j.at("languages").get<std::vector<std::string>>();
  m.warnings = j.value("warnings", std::vector<std::string>{});
  m.cells.clear();
  for (const auto& c : j.at("cells")) {
    CellKey key{c.at("model").get<std::string>(), c.at("language").get<std::string>(),
                parse_similarity_kind(c.at("metric").get<std::string>())};
    m.cells.emplace(std::move(key), cell_from_json(c));
  }
}

std::string serialize_matrix(const ScoreMatrix& m) { return json(m).dump(2) + "\n"; }

ScoreMatrix parse_matrix(std::string_view text) {
  try {
    return json::parse(text).get<ScoreMatrix>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed score matrix: ") + e.what());
  }
}

json config_snapshot(const BenchConfig& config) {
  json translators = json::array();
  for (const auto& t : config.translators) translators.push_back(t.name);
  json k = json::object();
  json pools = json::object();
  for (const auto& l : config.target_languages) k[l] = config.resolved_k(l);
  for (const auto& [lang, pool] : config.pools) {
    pools[lang] = {{"size", pool.examples.size()}, {"hash", pool_hash(pool)}};
  }
  json sentences = json::array();
  for (const auto& s : sorted_sentences(config)) sentences.push_back(s.id);
  return {{"translators", translators},
          {"embedder", config.embedder.name},
          {"back_translator", config.back_translator ? json(config.back_translator->name) : json()},
          {"languages", config.target_languages},
          {"k", k},
          {"k_values", config.k_values},
          {"sentences", sentences},
          {"corpus_checksum", config.corpus_checksum},
          {"pools", pools},
          {"baseline_languages", [&] {
             json out = json::array();
             for (const auto& [lang, _] : config.baseline) out.push_back(lang);
             return out;
           }()},
          {"exclude_self", config.exclude_self},
          {"include_back", config.include_back},
          {"seed", config.seed},
          {"template_id", config.template_id},
          {"template_hash", config.registry().hash(config.template_id)},
          {"failure_budget", config.failure_budget}};
}

std::map<std::string, Cell> score_baseline(const BenchConfig& config, Gateway& gateway) {
  const auto sentences = sorted_sentences(config);
  std::map<std::string, Cell> out;
  for (const auto& lang : config.target_languages) {
    const auto refs = config.baseline.find(lang);
    if (refs == config.baseline.end()) continue;
    std::vector<std::string> missing;
    for (const auto& s : sentences) {
      if (!refs->second.count(s.id)) missing.push_back(s.id);
    }
    if (!missing.empty()) {
      std::string msg = "baseline for " + lang + " has no reference for:";
      for (const auto& id : missing) msg += " " + id;
      throw Error(msg);
    }
    std::vector<SentenceScore> per(sentences.size());
    parallel_for(sentences.size(), config.concurrency, [&](std::size_t i) {
      per[i].sentence_id = sentences[i].id;
      per[i].translation = refs->second.at(sentences[i].id);
      try {
        per[i].score = sim_direct(gateway, config.embedder, sentences[i], per[i].translation).value;
      } catch (const std::exception& e) {
        per[i].error = e.what();
      }
    });
    out.emplace(lang, make_cell(std::move(per), config.failure_budget));
  }
  return out;
}

ScoreMatrix run_grid(const BenchConfig& config, Gateway& gateway, std::string run_id) {
  config.validate();
  if (config.translators.empty()) throw Error("bench config lists no translators");
  for (const auto& t : config.translators) {
    if (!gateway.has(t)) throw Error("translator " + t.name + " is not registered");
  }
  if (!gateway.has(config.embedder)) throw Error("embedder " + config.embedder.name + " is not registered");
  if (config.back_translator && !gateway.has(*config.back_translator)) {
    throw Error("back translator " + config.back_translator->name + " is not registered");
  }

  ScoreMatrix m;
  m.run_id = std::move(run_id);
  m.config = config_snapshot(config);
  m.languages = config.target_languages;
  if (!config.baseline.empty()) {
    m.models.emplace_back(kBaselineModel);
    for (auto& [lang, cell] : score_baseline(config, gateway)) {
      m.cells.emplace(CellKey{std::string(kBaselineModel), lang, SimilarityKind::direct}, std::move(cell));
    }
  }

  const auto sentences = sorted_sentences(config);
  const auto& langs = config.target_languages;
  const std::size_t n = sentences.size();
  std::vector<int> ks;
  for (const auto& l : langs) {
    ks.push_back(config.resolved_k(l));
    const auto pool = config.pools.find(l);
    if (ks.back() > 0 && pool != config.pools.end() &&
        static_cast<std::size_t>(ks.back()) > pool->second.examples.size()) {
      m.warnings.push_back(fmt::format("{}: k={} exceeds the pool size {}; using the whole pool", l,
                                       ks.back(), pool->second.examples.size()));
    }
  }
  std::vector<ItemResult> results(config.translators.size() * langs.size() * n);
  parallel_for(results.size(), config.concurrency * config.translators.size(), [&](std::size_t idx) {
    const std::size_t t = idx / (langs.size() * n);
    const std::size_t l = (idx / n) % langs.size();
    const std::size_t s = idx % n;
    results[idx] = evaluate(config, gateway, config.translators[t], langs[l], sentences[s], ks[l]);
  });

  for (std::size_t t = 0; t < config.translators.size(); ++t) {
    const auto& model = config.translators[t].name;
    m.models.push_back(model);
    for (std::size_t l = 0; l < langs.size(); ++l) {
      std::vector<SentenceScore> direct;
      std::vector<SentenceScore> back;
      for (std::size_t s = 0; s < n; ++s) {
        auto& r = results[(t * langs.size() + l) * n + s];
        direct.push_back(std::move(r.direct));
        back.push_back(std::move(r.back));
      }
      auto dcell = make_cell(std::move(direct), config.failure_budget);
      if (!dcell.valid) {
        m.warnings.push_back(fmt::format("{} {} direct: {} of {} sentences failed; cell invalid", model,
                                         langs[l], dcell.failures, n));
      }
      m.cells.emplace(CellKey{model, langs[l], SimilarityKind::direct}, std::move(dcell));
      if (!config.include_back) continue;
      auto bcell = make_cell(std::move(back), config.failure_budget);
      if (!bcell.valid) {
        m.warnings.push_back(fmt::format("{} {} back: {} of {} sentences failed; cell invalid", model,
                                         langs[l], bcell.failures, n));
      }
      m.cells.emplace(CellKey{model, langs[l], SimilarityKind::back}, std::move(bcell));
    }
  }
  return m;
}

void to_json(json& j, const KSweep& s) {
  auto cells = json::array();
  for (const auto& [key, cell] : s.cells) {
    auto c = cell_to_json(cell);
    c["k"] = key.first;
    c["language"] = key.second;
    cells.push_back(std::move(c));
  }
  auto baseline = json::object();
  for (const auto& [lang, cell] : s.baseline) baseline[lang] = cell_to_json(cell);
  j = json{{"model", s.model},   {"k_values", s.k_values}, {"languages", s.languages},
           {"cells", cells},     {"baseline", baseline},   {"argmax", s.argmax},
           {"warnings", s.warnings}};
}

KSweep sweep_k(const BenchConfig& config, Gateway& gateway) {
  config.validate();
  if (config.translators.empty()) throw Error("bench config lists no translators");
  KSweep out;
  out.model = config.translators.front().name;
  out.k_values = config.k_values;
  out.languages = config.target_languages;
  if (config.translators.size() > 1) {
    out.warnings.push_back("sweep uses only the first translator, " + out.model);
  }

  if (!config.baseline.empty()) out.baseline = score_baseline(config, gateway);
  for (const int k : config.k_values) {
    BenchConfig run = config;
    run.translators = {config.translators.front()};
    run.k = k;
    run.include_back = false;
    run.baseline.clear();
    run.target_languages.clear();
    for (const auto& lang : config.target_languages) {
      const auto pool = config.pools.find(lang);
      const std::size_t size = pool == config.pools.end() ? 0 : pool->second.examples.size();
      if (static_cast<std::size_t>(k) > size) {
        out.warnings.push_back(fmt::format("{}: k={} skipped; pool has {} examples", lang, k, size));
        continue;
      }
      run.target_languages.push_back(lang);
    }
    if (run.target_languages.empty()) continue;
    const auto m = run_grid(run, gateway);
    for (const auto& w : m.warnings) out.warnings.push_back(fmt::format("k={}: {}", k, w));
    for (const auto& lang : run.target_languages) {
      out.cells.emplace(std::pair{k, lang}, *m.find(out.model, lang, SimilarityKind::direct));
    }
  }

  for (const auto& lang : out.languages) {
    std::optional<double> best;
    for (const int k : out.k_values) {
      const auto it = out.cells.find({k, lang});
      if (it == out.cells.end() || !it->second.valid || !it->second.mean) continue;
      if (!best || *it->second.mean > *best) {
        best = it->second.mean;
        out.argmax[lang] = k;
      }
    }
  }
  return out;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "md" || s == "markdown") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw Error("unknown report format \"" + std::string(s) + "\" (expected md, csv or json)");
}

namespace {

constexpr std::string_view kMissing = "–";

bool usable(const Cell* c) { return c != nullptr && c->valid && c->mean; }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string raw_number(double v) { return fmt::format("{:.17g}", v); }

std::string csv_row(std::string_view first, std::string_view language, std::string_view metric,
                    const Cell& c) {
  std::string scores;
  for (const auto& s : c.per_sentence) {
    if (!scores.empty()) scores += ';';
    scores += s.sentence_id + "=" + (s.score ? raw_number(*s.score) : std::string());
  }
  return fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(first), csv_field(language), metric,
                     c.mean ? raw_number(*c.mean) : std::string(), c.valid ? "true" : "false",
                     c.per_sentence.size(), c.failures, csv_field(scores));
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

}  // namespace

std::string render_report(const ScoreMatrix& m, ReportFormat format) {
  if (format == ReportFormat::json) return json(m).dump(2) + "\n";
  const std::array<SimilarityKind, 2> metrics{SimilarityKind::direct, SimilarityKind::back};
  if (format == ReportFormat::csv) {
    std::string out = "model,language,metric,mean,valid,n,failures,scores\n";
    for (const auto& model : m.models) {
      for (const auto metric : metrics) {
        for (const auto& lang : m.languages) {
          if (const auto* c = m.find(model, lang, metric)) out += csv_row(model, lang, to_string(metric), *c);
        }
      }
    }
    return out;
  }

  std::vector<std::string> header{"Model"};
  std::vector<std::string> rule{"---"};
  std::vector<std::optional<double>> best;
  for (const auto metric : metrics) {
    for (const auto& lang : m.languages) {
      header.push_back((metric == SimilarityKind::direct ? "Direct " : "Back ") + language_label(lang));
      rule.emplace_back(":---:");
      std::optional<double> b;
      for (const auto& model : m.models) {
        const auto* c = m.find(model, lang, metric);
        if (usable(c) && (!b || *c->mean > *b)) b = c->mean;
      }
      best.push_back(b);
    }
  }
  std::string out = md_row(header) + md_row(rule);
  for (const auto& model : m.models) {
    std::vector<std::string> row{model};
    std::size_t col = 0;
    for (const auto metric : metrics) {
      for (const auto& lang : m.languages) {
        const auto* c = m.find(model, lang, metric);
        if (!usable(c)) {
          row.emplace_back(kMissing);
        } else {
          const auto v = format_percent(*c->mean);
          row.push_back(*c->mean == *best[col] ? "**" + v + "**" : v);
        }
        ++col;
      }
    }
    out += md_row(row);
  }
  return out;
}

std::string render_sweep(const KSweep& s, ReportFormat format) {
  if (format == ReportFormat::json) return json(s).dump(2) + "\n";
  if (format == ReportFormat::csv) {
    std::string out = "model,language,metric,mean,valid,n,failures,scores\n";
    for (const auto& lang : s.languages) {
      if (const auto it = s.baseline.find(lang); it != s.baseline.end()) {
        out += csv_row(kBaselineModel, lang, "direct", it->second);
      }
      for (const int k : s.k_values) {
        if (const auto it = s.cells.find({k, lang}); it != s.cells.end()) {
          out += csv_row(fmt::format("k = {}", k), lang, "direct", it->second);
        }
      }
    }
    return out;
  }

  std::vector<std::string> header{"k"};
  std::vector<std::string> rule{"---"};
  for (const auto& lang : s.languages) {
    header.push_back("SG → " + language_label(lang));
    rule.emplace_back(":---:");
  }
  std::string out = md_row(header) + md_row(rule);
  if (!s.baseline.empty()) {
    std::vector<std::string> row{std::string(kBaselineModel)};
    for (const auto& lang : s.languages) {
      const auto it = s.baseline.find(lang);
      row.push_back(it != s.baseline.end() && usable(&it->second) ? format_percent(*it->second.mean)
                                                                   : std::string(kMissing));
    }
    out += md_row(row);
  }
  for (const int k : s.k_values) {
    std::vector<std::string> row{fmt::format("k = {}", k)};
    for (const auto& lang : s.languages) {
      const auto it = s.cells.find({k, lang});
      if (it == s.cells.end() || !usable(&it->second)) {
        row.emplace_back(kMissing);
        continue;
      }
      const auto v = format_percent(*it->second.mean);
      const auto arg = s.argmax.find(lang);
      row.push_back(arg != s.argmax.end() && arg->second == k ? "**" + v + "**" : v);
    }
    out += md_row(row);
  }
  return out;
}

RunManifest make_manifest(const BenchConfig& config, const ScoreMatrix& m, const Gateway& gateway,
                          std::string timestamp) {
  RunManifest manifest;
  manifest.run_id = m.run_id;
  manifest.timestamp = std::move(timestamp);
  manifest.config = m.config;
  manifest.template_hash = config.registry().hash(config.template_id);
  for (const auto& [lang, pool] : config.pools) manifest.pool_hashes[lang] = pool_hash(pool);
  manifest.corpus_checksum = config.corpus_checksum;
  manifest.seed = config.seed;
  manifest.backends = gateway.describe();
  manifest.notes = {
      {"example_order", "pool examples sorted by descending similarity to the input"},
      {"back_translation", config.back_translator
                               ? "fixed back translator " + config.back_translator->name
                               : std::string("same translator as the forward direction")},
      {"exclude_self", config.exclude_self},
      {"failure_budget", config.failure_budget}};
  return manifest;
}

void save_run(RunStore& runs, const RunManifest& manifest, const ScoreMatrix& m) {
  if (manifest.run_id.empty()) throw Error("run id must not be empty");
  if (manifest.run_id != m.run_id) throw Error("manifest and matrix disagree on the run id");
  runs.write(manifest, {{"matrix.json", serialize_matrix(m)},
                        {"report.md", render_report(m, ReportFormat::markdown)}});
}

}  // namespace toxtrans
