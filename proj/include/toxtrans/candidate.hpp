#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace toxtrans {

enum class OriginKind { llm, custom };

/// Who produced a candidate: a translator backend or an annotator.
struct Origin {
  OriginKind kind = OriginKind::llm;
  std::string name;

  friend bool operator==(const Origin&, const Origin&) = default;
};

struct CandidateTranslation {
  std::string id;
  std::string sentence_id;
  std::string text;
  std::string target_language;
  /// Every producer of this exact text; the first one introduced it.
  std::vector<Origin> origins;
  int round_introduced = 1;

  const Origin& origin() const { return origins.front(); }
  bool llm_origin() const { return !origins.empty() && origins.front().kind == OriginKind::llm; }

  friend bool operator==(const CandidateTranslation&, const CandidateTranslation&) = default;
};

struct FinalSelection {
  std::string sentence_id;
  CandidateTranslation winner;
  int vote_count = 0;
  bool tie_broken = false;

  friend bool operator==(const FinalSelection&, const FinalSelection&) = default;
};

void to_json(nlohmann::json& j, const Origin& o);
void from_json(const nlohmann::json& j, Origin& o);
void to_json(nlohmann::json& j, const CandidateTranslation& c);
void from_json(const nlohmann::json& j, CandidateTranslation& c);
void to_json(nlohmann::json& j, const FinalSelection& f);
void from_json(const nlohmann::json& j, FinalSelection& f);

}  // namespace toxtrans
