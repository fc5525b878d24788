#include "toxtrans/corpus.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "toxtrans/error.hpp"
#include "toxtrans/hash.hpp"
#include "toxtrans/store.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

std::string_view to_string(Toxicity t) { return t == Toxicity::benign ? "benign" : "harmful"; }

Toxicity parse_toxicity(std::string_view s) {
  if (s == "benign") return Toxicity::benign;
  if (s == "harmful") return Toxicity::harmful;
  throw Error("unknown toxicity label \"" + std::string(s) + "\"");
}

void to_json(nlohmann::json& j, const SourceSentence& s) {
  j = nlohmann::json{{"id", s.id}, {"text", s.text}, {"toxicity", to_string(s.toxicity)}};
  if (s.source_language != kSourceLanguage) j["source_language"] = s.source_language;
}

void from_json(const nlohmann::json& j, SourceSentence& s) {
  if (!j.is_object()) throw Error("record is not a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) throw Error("missing string field \"id\"");
  if (!j.contains("text") || !j["text"].is_string()) throw Error("missing string field \"text\"");
  if (!j.contains("toxicity") || !j["toxicity"].is_string()) {
    throw Error("missing string field \"toxicity\"");
  }
  s.id = j["id"].get<std::string>();
  s.text = j["text"].get<std::string>();
  s.toxicity = parse_toxicity(j["toxicity"].get<std::string>());
  s.source_language = j.value("source_language", std::string(kSourceLanguage));
  if (s.id.empty()) throw Error("empty id");
  if (text::trim(s.text).empty()) throw Error("text is empty after trimming");
}

const SourceSentence* Corpus::find(std::string_view id) const {
  for (const auto& s : sentences) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Corpus parse_corpus(std::istream& in, std::string name) {
  Corpus corpus;
  corpus.name = std::move(name);
  std::map<std::string, std::size_t, std::less<>> first_line;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (!text::is_valid_utf8(line)) throw Error(where + "invalid UTF-8");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + "malformed JSON (" + e.what() + ")");
    }
    SourceSentence s;
    try {
      s = j.get<SourceSentence>();
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    if (const auto it = first_line.find(s.id); it != first_line.end()) {
      throw Error("duplicate id \"" + s.id + "\" on lines " + std::to_string(it->second) +
                  " and " + std::to_string(line_no));
    }
    first_line.emplace(s.id, line_no);
    corpus.sentences.push_back(std::move(s));
  }
  corpus.checksum = corpus_checksum(corpus.sentences);
  return corpus;
}

Corpus import_corpus(const std::filesystem::path& path, CorpusFormat format) {
  if (format != CorpusFormat::jsonl) throw Error("unsupported corpus format");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  Corpus corpus = parse_corpus(in, path.stem().string());
  auto sidecar = path;
  sidecar += ".sha256";
  if (std::filesystem::exists(sidecar)) {
    const auto expected = std::string(text::trim(read_file(sidecar)));
    if (expected != corpus.checksum) {
      throw Error("corpus checksum mismatch for " + path.string() + ": expected " + expected +
                  ", computed " + corpus.checksum);
    }
  }
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    out += nlohmann::json(s).dump();
    out.push_back('\n');
  }
  return out;
}

std::string corpus_checksum(const std::vector<SourceSentence>& sentences) {
  return sha256_hex(serialize_corpus(Corpus{"", sentences, ""}));
}

namespace {

// Uniform integer in [0, bound) by rejection on the raw engine output, so the
// result does not depend on the standard library's distribution code.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(rng, i)]);
  }
}

}  // namespace

std::vector<SourceSentence> sample_balanced(const Corpus& corpus, int n, std::uint64_t seed) {
  if (n <= 0 || n % 2 != 0) {
    throw Error("sample size must be a positive even integer, got " + std::to_string(n));
  }
  std::vector<SourceSentence> benign;
  std::vector<SourceSentence> harmful;
  for (const auto& s : corpus.sentences) {
    (s.toxicity == Toxicity::benign ? benign : harmful).push_back(s);
  }
  const auto half = static_cast<std::size_t>(n / 2);
  if (benign.size() < half) {
    throw Error("need " + std::to_string(half) + " benign, have " + std::to_string(benign.size()));
  }
  if (harmful.size() < half) {
    throw Error("need " + std::to_string(half) + " harmful, have " +
                std::to_string(harmful.size()));
  }
  std::mt19937_64 rng(seed);
  shuffle(benign, rng);
  shuffle(harmful, rng);
  std::vector<SourceSentence> out(benign.begin(), benign.begin() + static_cast<std::ptrdiff_t>(half));
  out.insert(out.end(), harmful.begin(), harmful.begin() + static_cast<std::ptrdiff_t>(half));
  shuffle(out, rng);
  return out;
}

}  // namespace toxtrans
