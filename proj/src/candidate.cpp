#include "toxtrans/candidate.hpp"

#include "toxtrans/error.hpp"

namespace toxtrans {

void to_json(nlohmann::json& j, const Origin& o) {
  j = nlohmann::json{{"kind", o.kind == OriginKind::llm ? "llm" : "custom"}, {"name", o.name}};
}

void from_json(const nlohmann::json& j, Origin& o) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "llm") {
    o.kind = OriginKind::llm;
  } else if (kind == "custom") {
    o.kind = OriginKind::custom;
  } else {
    throw Error("unknown origin kind \"" + kind + "\"");
  }
  j.at("name").get_to(o.name);
}

void to_json(nlohmann::json& j, const CandidateTranslation& c) {
  j = nlohmann::json{{"id", c.id},
                     {"sentence_id", c.sentence_id},
                     {"text", c.text},
                     {"target_language", c.target_language},
                     {"origins", c.origins},
                     {"round_introduced", c.round_introduced}};
}

void from_json(const nlohmann::json& j, CandidateTranslation& c) {
  j.at("id").get_to(c.id);
  j.at("sentence_id").get_to(c.sentence_id);
  j.at("text").get_to(c.text);
  j.at("target_language").get_to(c.target_language);
  j.at("origins").get_to(c.origins);
  j.at("round_introduced").get_to(c.round_introduced);
  if (c.origins.empty()) throw Error("candidate " + c.id + " has no origin");
}

void to_json(nlohmann::json& j, const FinalSelection& f) {
  j = nlohmann::json{{"sentence_id", f.sentence_id},
                     {"winner", f.winner},
                     {"vote_count", f.vote_count},
                     {"tie_broken", f.tie_broken}};
}

void from_json(const nlohmann::json& j, FinalSelection& f) {
  j.at("sentence_id").get_to(f.sentence_id);
  j.at("winner").get_to(f.winner);
  j.at("vote_count").get_to(f.vote_count);
  j.at("tie_broken").get_to(f.tie_broken);
}

}  // namespace toxtrans
