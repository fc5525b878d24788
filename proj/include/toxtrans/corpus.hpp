#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace toxtrans {

inline constexpr std::string_view kSourceLanguage = "singlish";

enum class Toxicity { benign, harmful };

std::string_view to_string(Toxicity t);
/// Throws Error("unknown toxicity label ...") for anything but benign/harmful.
Toxicity parse_toxicity(std::string_view s);

struct SourceSentence {
  std::string id;
  std::string text;
  std::string source_language{kSourceLanguage};
  Toxicity toxicity = Toxicity::benign;

  friend bool operator==(const SourceSentence&, const SourceSentence&) = default;
};

void to_json(nlohmann::json& j, const SourceSentence& s);
/// Validates the record: non-empty id, non-blank text, known toxicity label.
void from_json(const nlohmann::json& j, SourceSentence& s);

struct Corpus {
  std::string name;
  std::vector<SourceSentence> sentences;
  std::string checksum;

  const SourceSentence* find(std::string_view id) const;
};

enum class CorpusFormat { jsonl };

/// JSON Lines, one {id, text, toxicity} object per line. Blank lines are
/// skipped. Every failing record is reported with its line number.
Corpus parse_corpus(std::istream& in, std::string name);

/// Loads a corpus file. If `<path>.sha256` exists, the content checksum must
/// match it.
Corpus import_corpus(const std::filesystem::path& path,
                     CorpusFormat format = CorpusFormat::jsonl);

std::string serialize_corpus(const Corpus& corpus);
std::string corpus_checksum(const std::vector<SourceSentence>& sentences);

/// Exactly n/2 benign and n/2 harmful sentences, shuffled deterministically
/// for `seed`. n must be positive and even.
std::vector<SourceSentence> sample_balanced(const Corpus& corpus, int n, std::uint64_t seed);

}  // namespace toxtrans
