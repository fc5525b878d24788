#include "toxtrans/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "toxtrans/error.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

std::string_view to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::direct:
      return "direct";
    case SimilarityKind::back:
      return "back";
    case SimilarityKind::raw_cosine:
      return "raw_cosine";
  }
  return "raw_cosine";
}

SimilarityKind parse_similarity_kind(std::string_view s) {
  if (s == "direct") return SimilarityKind::direct;
  if (s == "back") return SimilarityKind::back;
  if (s == "raw_cosine") return SimilarityKind::raw_cosine;
  throw Error("unknown similarity kind \"" + std::string(s) + "\"");
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine of a zero vector is undefined");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  if (!std::isfinite(c)) throw Error("cosine is not finite");
  return std::clamp(c, -1.0, 1.0);
}

SimilarityScore cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return {cosine(a.values(), b.values()), SimilarityKind::raw_cosine};
}

SimilarityScore sim_direct(Gateway& gateway, const BackendId& embedder, const SourceSentence& s,
                           std::string_view translation) {
  if (text::trim(translation).empty()) throw Error("empty translation");
  const auto es = gateway.embed(embedder, s.text);
  const auto et = gateway.embed(embedder, translation);
  return {cosine(es, et).value, SimilarityKind::direct};
}

BackTranslation sim_back(Gateway& gateway, const BackendId& back_translator,
                         const BackPromptBuilder& build_back_prompt, const BackendId& embedder,
                         const SourceSentence& s, std::string_view translation) {
  if (text::trim(translation).empty()) throw Error("empty translation");
  const PromptText prompt = build_back_prompt(translation);
  ModelOutput out;
  try {
    out = gateway.complete(back_translator, prompt);
  } catch (const Error& e) {
    throw Error(std::string("back-translation failed: ") + e.what());
  }
  ParsedOutput parsed;
  try {
    parsed = parse_reply(out, prompt);
  } catch (const Error& e) {
    throw Error(std::string("back-translation unusable: ") + e.what());
  }
  const auto es = gateway.embed(embedder, s.text);
  const auto eb = gateway.embed(embedder, parsed.translation);
  return {{cosine(es, eb).value, SimilarityKind::back},
          std::move(parsed.translation),
          parsed.mode,
          out.attempt_count};
}

namespace {

// Suffix automaton over the code points of one string.
class SuffixAutomaton {
 public:
  explicit SuffixAutomaton(const std::u32string& s) {
    states_.reserve(2 * s.size() + 1);
    states_.push_back({});
    for (char32_t c : s) extend(c);
  }

  /// Length of the longest substring of `t` that also occurs in the source.
  std::size_t longest_common(const std::u32string& t) const {
    std::size_t state = 0;
    std::size_t len = 0;
    std::size_t best = 0;
    for (char32_t c : t) {
      while (state != 0 && !states_[state].next.count(c)) {
        state = static_cast<std::size_t>(states_[state].link);
        len = states_[state].len;
      }
      if (const auto it = states_[state].next.find(c); it != states_[state].next.end()) {
        state = it->second;
        ++len;
      } else {
        state = 0;
        len = 0;
      }
      best = std::max(best, len);
    }
    return best;
  }

 private:
  struct State {
    std::size_t len = 0;
    long link = -1;
    std::unordered_map<char32_t, std::size_t> next;
  };

  void extend(char32_t c) {
    const std::size_t cur = states_.size();
    states_.push_back({states_[last_].len + 1, -1, {}});
    long p = static_cast<long>(last_);
    while (p != -1 && !states_[p].next.count(c)) {
      states_[p].next[c] = cur;
      p = states_[p].link;
    }
    if (p == -1) {
      states_[cur].link = 0;
    } else {
      const std::size_t q = states_[p].next[c];
      if (states_[p].len + 1 == states_[q].len) {
        states_[cur].link = static_cast<long>(q);
      } else {
        const std::size_t clone = states_.size();
        State copy = states_[q];
        copy.len = states_[p].len + 1;
        states_.push_back(std::move(copy));
        while (p != -1) {
          auto it = states_[p].next.find(c);
          if (it == states_[p].next.end() || it->second != q) break;
          it->second = clone;
          p = states_[p].link;
        }
        states_[q].link = static_cast<long>(clone);
        states_[cur].link = static_cast<long>(clone);
      }
    }
    last_ = cur;
  }

  std::vector<State> states_;
  std::size_t last_ = 0;
};

}  // namespace

OverlapScore substring_overlap(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) throw Error("substring overlap needs two non-empty strings");
  const auto ua = text::decode_utf8(a);
  const auto ub = text::decode_utf8(b);
  const SuffixAutomaton sam(ua);
  const auto common = sam.longest_common(ub);
  return {static_cast<double>(common) / static_cast<double>(std::max(ua.size(), ub.size()))};
}

AgreementScore jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return {1.0, 0};
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return {static_cast<double>(inter) / static_cast<double>(uni), 0};
}

AgreementScore pairwise_agreement(std::span<const std::set<std::string>> selections) {
  if (selections.size() < 2) {
    throw Error("agreement needs at least 2 annotators, got " + std::to_string(selections.size()));
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < selections.size(); ++i) {
    for (std::size_t j = i + 1; j < selections.size(); ++j) {
      sum += jaccard(selections[i], selections[j]).value;
      ++pairs;
    }
  }
  return {sum / static_cast<double>(pairs), 0};
}

std::vector<RatingSummary> mean_ratings(std::span<const RatingRecord> ratings,
                                        RatingGrouping group_by) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<long long, std::size_t>> groups;
  for (const auto& r : ratings) {
    if (r.score < 1 || r.score > 5) {
      throw Error("rating out of range 1-5: score " + std::to_string(r.score) + " by " +
                  r.annotator + " on " + r.sentence_id);
    }
    Key key{r.language, r.set,
            group_by == RatingGrouping::language_and_annotator ? r.annotator : std::string()};
    auto& [sum, count] = groups[key];
    sum += r.score;
    ++count;
  }
  std::vector<RatingSummary> out;
  for (const auto& [key, agg] : groups) {
    RatingSummary s;
    s.language = std::get<0>(key);
    s.set = std::get<1>(key);
    if (group_by == RatingGrouping::language_and_annotator) s.annotator = std::get<2>(key);
    s.mean = static_cast<double>(agg.first) / static_cast<double>(agg.second);
    s.count = agg.second;
    out.push_back(std::move(s));
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

std::string format_percent(double m) { return fmt::format("{:.2f}", 100.0 * m); }

}  // namespace toxtrans
