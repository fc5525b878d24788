#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxtrans/candidate.hpp"
#include "toxtrans/corpus.hpp"
#include "toxtrans/gateway.hpp"
#include "toxtrans/prompt_text.hpp"

namespace toxtrans {

inline constexpr std::string_view kDefaultTemplateId = "toxicity-preserving";
inline constexpr std::size_t kDefaultPoolMax = 20;

/// Display name used inside prompts ("zh" -> "Chinese"). Throws for codes
/// outside the configured set.
std::string language_name(std::string_view code);
const std::vector<std::string>& default_target_languages();
/// Per-language example count used for translation runs: 15 zh, 10 ms, 20 ta.
std::optional<int> default_k(std::string_view code);

/// Prompt templates keyed by id, with `{placeholder}` syntax. Recognized
/// placeholders: original_language, target_language, exp_str, sentence.
class TemplateRegistry {
 public:
  /// A registry holding the built-in toxicity-preserving template.
  static TemplateRegistry with_builtin();

  void add(std::string id, std::string text);
  void add_file(std::string id, const std::filesystem::path& path);
  const std::string& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::string hash(std::string_view id) const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

const TemplateRegistry& builtin_templates();

struct ExamplePair {
  std::string source;
  std::string translation;
};

/// `N. <Orig>: "<source>" -> <Target>: "<translation>"`, one per line;
/// "(none)" when there are no examples.
std::string format_examples(std::string_view original_language, std::string_view target_language,
                            std::span<const ExamplePair> examples);

/// Single-pass substitution: values are inserted verbatim and never rescanned,
/// so braces in a sentence are literal.
PromptText render_prompt(const TemplateRegistry& templates, std::string_view template_id,
                         std::string_view original_language, std::string_view target_language,
                         std::span<const ExamplePair> examples, std::string_view sentence,
                         Direction direction = Direction::forward);

struct FewShotExample {
  SourceSentence source;
  std::string translation;
  std::string target_language;
  Origin origin;
  int adopted_round = 3;
};

void to_json(nlohmann::json& j, const FewShotExample& e);
void from_json(const nlohmann::json& j, FewShotExample& e);

struct FewShotPool {
  std::string target_language;
  std::vector<FewShotExample> examples;
  /// Source-text embedding per example id, filled when the pool is built
  /// with an embedder.
  std::string embedder;
  std::map<std::string, EmbeddingVector> embeddings;

  std::size_t llm_retained() const;
};

/// One example per curated sentence from the final Round-3 selections.
/// Source embeddings are precomputed when `gateway` and `embedder` are given.
FewShotPool build_pool(std::span<const SourceSentence> curated,
                       std::span<const FinalSelection> finals, std::string target_language,
                       Gateway* gateway = nullptr, const BackendId* embedder = nullptr,
                       std::size_t max_size = kDefaultPoolMax);

struct ScoredExample {
  FewShotExample example;
  double similarity = 0.0;
};

/// The min(k, |pool|) examples most similar to `s`, by descending cosine of
/// source embeddings; ties go to the smaller source id.
std::vector<ScoredExample> select_top_k(const FewShotPool& pool, const SourceSentence& s, int k,
                                        Gateway& gateway, const BackendId& embedder);

std::vector<ExamplePair> forward_pairs(std::span<const FewShotExample> examples);
std::vector<ExamplePair> forward_pairs(std::span<const ScoredExample> examples);
std::vector<ExamplePair> reversed_pairs(std::span<const ExamplePair> pairs);

PromptText render_forward_prompt(std::string_view sentence, std::string_view original_language,
                                 std::string_view target_language,
                                 std::span<const ExamplePair> examples,
                                 const TemplateRegistry& templates = builtin_templates(),
                                 std::string_view template_id = kDefaultTemplateId);

/// The same template with languages swapped and each example reversed, so a
/// translation in `target_language` is rendered back into `original_language`.
PromptText build_back_prompt(std::string_view translation, std::string_view target_language,
                             std::string_view original_language,
                             std::span<const ExamplePair> forward_examples,
                             const TemplateRegistry& templates = builtin_templates(),
                             std::string_view template_id = kDefaultTemplateId);

std::string serialize_pool(const FewShotPool& pool);
FewShotPool parse_pool(std::istream& in, std::string target_language = {});
void save_pool(const FewShotPool& pool, const std::filesystem::path& path);
FewShotPool load_pool(const std::filesystem::path& path);
std::string pool_hash(const FewShotPool& pool);

}  // namespace toxtrans
