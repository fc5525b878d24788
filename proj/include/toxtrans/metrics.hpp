#pragma once

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxtrans/backend.hpp"
#include "toxtrans/corpus.hpp"
#include "toxtrans/gateway.hpp"
#include "toxtrans/reply.hpp"

namespace toxtrans {

enum class SimilarityKind { direct, back, raw_cosine };

std::string_view to_string(SimilarityKind k);
SimilarityKind parse_similarity_kind(std::string_view s);

/// Cosine-based score in [-1, 1]. Kept unscaled; x100 happens only when
/// reports are rendered.
struct SimilarityScore {
  double value = 0.0;
  SimilarityKind kind = SimilarityKind::raw_cosine;
};

struct OverlapScore {
  double value = 0.0;  // [0, 1]
};

struct AgreementScore {
  double value = 1.0;  // [0, 1]
  int round = 0;
};

/// (a.b) / (|a| |b|), clamped to [-1, 1]. Throws on dimension mismatch or a
/// zero vector.
SimilarityScore cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(std::span<const double> a, std::span<const double> b);

SimilarityScore sim_direct(Gateway& gateway, const BackendId& embedder, const SourceSentence& s,
                           std::string_view translation);

struct BackTranslation {
  SimilarityScore score;
  std::string back_text;  // the back-translated source, kept for audit
  ParseMode parse_mode = ParseMode::structured;
  int attempts = 1;
};

using BackPromptBuilder = std::function<PromptText(std::string_view translation)>;

/// Back-translates `translation` through `back_translator` with the prompt
/// from `build_back_prompt`, then scores the result against the source.
BackTranslation sim_back(Gateway& gateway, const BackendId& back_translator,
                         const BackPromptBuilder& build_back_prompt, const BackendId& embedder,
                         const SourceSentence& s, std::string_view translation);

/// Longest common contiguous substring length over the longer length, both
/// measured in Unicode scalar values.
OverlapScore substring_overlap(std::string_view a, std::string_view b);

/// |a n b| / |a u b|; two empty sets agree completely (1.0).
AgreementScore jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// Mean Jaccard over all unordered pairs of annotators for one sentence.
AgreementScore pairwise_agreement(std::span<const std::set<std::string>> selections);

struct RatingRecord {
  std::string language;
  std::string annotator;
  std::string sentence_id;
  int score = 0;
  std::string set;  // "machine" / "gold"; empty when not split
};

enum class RatingGrouping { language, language_and_annotator };

struct RatingSummary {
  std::string language;
  std::string set;
  std::optional<std::string> annotator;
  double mean = 0.0;
  std::size_t count = 0;
};

/// Arithmetic mean per (language, set[, annotator]) group, in key order.
std::vector<RatingSummary> mean_ratings(std::span<const RatingRecord> ratings,
                                        RatingGrouping group_by);

double mean(std::span<const double> values);
double median(std::vector<double> values);

/// round(100 * m, 2) with two decimals, e.g. 0.6950 -> "69.50".
std::string format_percent(double m);

}  // namespace toxtrans
