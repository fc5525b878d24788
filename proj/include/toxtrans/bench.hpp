#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxtrans/corpus.hpp"
#include "toxtrans/fewshot.hpp"
#include "toxtrans/gateway.hpp"
#include "toxtrans/metrics.hpp"
#include "toxtrans/store.hpp"

namespace toxtrans {

inline constexpr std::string_view kBaselineModel = "Baseline";

struct BenchConfig {
  std::vector<BackendId> translators;
  BackendId embedder;
  /// Back-translates with this backend instead of the translator under test.
  std::optional<BackendId> back_translator;
  std::vector<std::string> target_languages;
  /// Example count for run_grid; unset means the language default when a
  /// pool is present and zero-shot otherwise.
  std::optional<int> k;
  /// Grid for sweep_k, ascending.
  std::vector<int> k_values{5, 10, 15, 20};
  std::vector<SourceSentence> sentences;
  std::string corpus_checksum;
  std::map<std::string, FewShotPool> pools;
  /// language -> sentence id -> reference translation.
  std::map<std::string, std::map<std::string, std::string>> baseline;
  /// Leave a sentence's own pool entry out of its examples.
  bool exclude_self = false;
  bool include_back = true;
  std::uint64_t seed = 0;
  std::size_t concurrency = 4;
  std::string template_id{kDefaultTemplateId};
  const TemplateRegistry* templates = nullptr;
  double failure_budget = 0.2;

  void validate() const;
  /// Example count used for `language` in run_grid.
  int resolved_k(std::string_view language) const;
  const TemplateRegistry& registry() const;
};

struct CellKey {
  std::string model;
  std::string language;
  SimilarityKind metric = SimilarityKind::direct;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct SentenceScore {
  std::string sentence_id;
  std::optional<double> score;
  std::string translation;
  std::string back_text;
  std::string parse_mode;
  std::string error;
};

struct Cell {
  /// Mean over the sentences that scored; unset when none did.
  std::optional<double> mean;
  std::vector<SentenceScore> per_sentence;
  std::size_t failures = 0;
  bool valid = true;
};

struct ScoreMatrix {
  std::string run_id;
  nlohmann::json config = nlohmann::json::object();
  /// Row order for reports; the baseline row, when present, comes first.
  std::vector<std::string> models;
  std::vector<std::string> languages;
  std::map<CellKey, Cell> cells;
  std::vector<std::string> warnings;

  const Cell* find(std::string_view model, std::string_view language, SimilarityKind metric) const;
};

void to_json(nlohmann::json& j, const ScoreMatrix& m);
void from_json(const nlohmann::json& j, ScoreMatrix& m);
/// Stable text form; equal matrices serialize to equal bytes.
std::string serialize_matrix(const ScoreMatrix& m);
ScoreMatrix parse_matrix(std::string_view text);

/// Builds a cell from per-sentence results, applying the failure budget.
Cell make_cell(std::vector<SentenceScore> per_sentence, double failure_budget);

/// Config as recorded in matrices and manifests.
nlohmann::json config_snapshot(const BenchConfig& config);

/// Every translator x language x sentence: forward prompt with top-k pool
/// examples, translation, direct similarity, back prompt, back similarity.
/// Adds the baseline row when baseline references are configured.
ScoreMatrix run_grid(const BenchConfig& config, Gateway& gateway, std::string run_id = {});

/// Direct similarity of the configured references, one cell per language.
/// Throws listing sentences that have no reference.
std::map<std::string, Cell> score_baseline(const BenchConfig& config, Gateway& gateway);

struct KSweep {
  std::string model;
  std::vector<int> k_values;
  std::vector<std::string> languages;
  /// (k, language) -> direct-similarity cell; absent when k was skipped.
  std::map<std::pair<int, std::string>, Cell> cells;
  std::map<std::string, Cell> baseline;
  /// Best k per language; ties go to the smaller k.
  std::map<std::string, int> argmax;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const KSweep& s);

/// One direct-only grid run per k for the first configured translator.
/// A k larger than a language's pool is skipped for that language.
KSweep sweep_k(const BenchConfig& config, Gateway& gateway);

enum class ReportFormat { markdown, csv, json };

ReportFormat parse_report_format(std::string_view s);

std::string render_report(const ScoreMatrix& m, ReportFormat format);
std::string render_sweep(const KSweep& s, ReportFormat format);

/// Manifest for a finished run; backend descriptors come from the gateway.
RunManifest make_manifest(const BenchConfig& config, const ScoreMatrix& m, const Gateway& gateway,
                          std::string timestamp);

/// Writes manifest.json, matrix.json and report.md under the run id.
void save_run(RunStore& runs, const RunManifest& manifest, const ScoreMatrix& m);

}  // namespace toxtrans
