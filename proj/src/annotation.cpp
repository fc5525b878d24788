#include "toxtrans/annotation.hpp"

#include <algorithm>
#include <limits>
#include <mutex>
#include <sstream>

#include "toxtrans/diagnostics.hpp"
#include "toxtrans/error.hpp"
#include "toxtrans/fewshot.hpp"
#include "toxtrans/parallel.hpp"
#include "toxtrans/reply.hpp"
#include "toxtrans/text.hpp"

namespace toxtrans {

std::string_view to_string(RoundStatus s) { return s == RoundStatus::open ? "open" : "closed"; }

std::string_view to_string(RatingSet s) { return s == RatingSet::machine ? "machine" : "gold"; }

RatingSet parse_rating_set(std::string_view s) {
  if (s == "machine") return RatingSet::machine;
  if (s == "gold") return RatingSet::gold;
  throw Error("unknown rating set \"" + std::string(s) + "\"");
}

void to_json(nlohmann::json& j, const Vote& v) {
  j = nlohmann::json{{"annotator", v.annotator},
                     {"sentence_id", v.sentence_id},
                     {"round", v.round_number},
                     {"selected", v.selected}};
  if (v.custom_text) j["custom_text"] = *v.custom_text;
  if (v.ranking) j["ranking"] = *v.ranking;
}

void from_json(const nlohmann::json& j, Vote& v) {
  if (!j.is_object()) throw Error("vote must be a JSON object");
  v.annotator = j.at("annotator").get<std::string>();
  v.sentence_id = j.at("sentence_id").get<std::string>();
  v.round_number = j.at("round").get<int>();
  v.selected.clear();
  for (const auto& id : j.value("selected", nlohmann::json::array())) {
    if (!v.selected.insert(id.get<std::string>()).second) {
      throw Error("candidate " + id.get<std::string>() + " selected twice");
    }
  }
  v.custom_text.reset();
  if (j.contains("custom_text") && !j["custom_text"].is_null()) {
    v.custom_text = j["custom_text"].get<std::string>();
  }
  v.ranking.reset();
  if (j.contains("ranking") && !j["ranking"].is_null()) {
    v.ranking = j["ranking"].get<std::vector<std::string>>();
  }
}

RoundConstraints constraints_for_round(int round) {
  switch (round) {
    case 1:
      return {1, 0, std::nullopt, true, false, true};
    case 2:
      return {2, 0, 2, true, false, false};
    case 3:
      return {3, 1, 1, false, true, false};
    default:
      throw Error("no round " + std::to_string(round));
  }
}

void to_json(nlohmann::json& j, const RoundConstraints& c) {
  j = nlohmann::json{{"round", c.round},
                     {"min_select", c.min_select},
                     {"max_select", c.max_select ? nlohmann::json(*c.max_select) : nlohmann::json()},
                     {"custom_allowed", c.custom_allowed},
                     {"ranking_allowed", c.ranking_allowed},
                     {"requires_selection_or_custom", c.requires_selection_or_custom}};
}

const CandidateTranslation* SentenceTask::find(std::string_view candidate_id) const {
  for (const auto& c : candidates) {
    if (c.id == candidate_id) return &c;
  }
  return nullptr;
}

void to_json(nlohmann::json& j, const SentenceTask& t) {
  j = nlohmann::json{{"sentence", t.sentence},
                     {"candidates", t.candidates},
                     {"degraded", t.degraded},
                     {"tie_broken", t.tie_broken}};
}

void from_json(const nlohmann::json& j, SentenceTask& t) {
  j.at("sentence").get_to(t.sentence);
  j.at("candidates").get_to(t.candidates);
  t.degraded = j.value("degraded", false);
  t.tie_broken = j.value("tie_broken", false);
}

const SentenceTask* RoundState::task(std::string_view sentence_id) const {
  for (const auto& t : tasks) {
    if (t.sentence.id == sentence_id) return &t;
  }
  return nullptr;
}

std::vector<const Vote*> RoundState::votes_for(std::string_view sentence_id) const {
  std::vector<const Vote*> out;
  for (const auto& [key, vote] : votes) {
    if (key.first == sentence_id) out.push_back(&vote);
  }
  return out;
}

void validate_vote(const RoundState& round, const Vote& vote) {
  if (round.status != RoundStatus::open) {
    throw Error("round " + std::to_string(round.round_number) + " is closed");
  }
  if (vote.round_number != round.round_number) {
    throw Error("vote is for round " + std::to_string(vote.round_number) + " but round " +
                std::to_string(round.round_number) + " is open");
  }
  if (vote.annotator.empty()) throw Error("vote has no annotator");
  const auto* task = round.task(vote.sentence_id);
  if (task == nullptr) {
    throw Error("sentence \"" + vote.sentence_id + "\" is not part of round " +
                std::to_string(round.round_number));
  }
  for (const auto& id : vote.selected) {
    if (task->find(id) == nullptr) {
      throw Error("unknown candidate \"" + id + "\" for sentence " + vote.sentence_id);
    }
  }
  const auto c = constraints_for_round(round.round_number);
  if (vote.custom_text) {
    if (!c.custom_allowed) {
      throw Error("custom translations are not accepted in round " + std::to_string(c.round));
    }
    if (text::trim(*vote.custom_text).empty()) throw Error("custom translation is empty");
  }
  if (c.requires_selection_or_custom && vote.selected.empty() && !vote.custom_text) {
    throw Error("a round 1 vote needs at least one selection or a custom translation");
  }
  if (c.max_select && vote.selected.size() > *c.max_select) {
    throw Error(c.round == 3 ? "exactly one candidate must be selected in round 3"
                             : "at most two candidates may be selected in round 2");
  }
  if (vote.selected.size() < c.min_select) {
    throw Error("exactly one candidate must be selected in round 3");
  }
  if (vote.ranking) {
    if (!c.ranking_allowed) throw Error("rankings are only accepted in round 3");
    std::set<std::string> ranked(vote.ranking->begin(), vote.ranking->end());
    bool complete = ranked.size() == vote.ranking->size() && ranked.size() == task->candidates.size();
    for (const auto& id : ranked) complete = complete && task->find(id) != nullptr;
    if (!complete) throw Error("ranking must order every candidate exactly once");
  }
}

namespace {

void require_votes(const RoundState& round) {
  std::vector<std::string> missing;
  for (const auto& t : round.tasks) {
    if (round.votes_for(t.sentence.id).empty()) missing.push_back(t.sentence.id);
  }
  if (!missing.empty()) {
    std::string msg = "round " + std::to_string(round.round_number) +
                      " cannot close; sentences without votes:";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }
}

std::map<std::string, int> tally(const RoundState& round, std::string_view sentence_id) {
  std::map<std::string, int> counts;
  for (const auto* v : round.votes_for(sentence_id)) {
    for (const auto& id : v->selected) ++counts[id];
  }
  return counts;
}

// Adds custom submissions of `round` for one sentence to `next`. A custom
// text equal to an existing candidate of the round carries that candidate
// (with the annotator added as an origin) rather than creating a new one.
void add_customs(const RoundState& round, const SentenceTask& task,
                 std::vector<CandidateTranslation>& next) {
  for (const auto* v : round.votes_for(task.sentence.id)) {
    if (!v->custom_text) continue;
    const std::string custom(text::trim(*v->custom_text));
    const Origin origin{OriginKind::custom, v->annotator};
    auto same = std::find_if(next.begin(), next.end(),
                             [&](const CandidateTranslation& c) { return c.text == custom; });
    if (same != next.end()) {
      same->origins.push_back(origin);
      continue;
    }
    const auto existing =
        std::find_if(task.candidates.begin(), task.candidates.end(),
                     [&](const CandidateTranslation& c) { return c.text == custom; });
    if (existing != task.candidates.end()) {
      auto carried = *existing;
      carried.origins.push_back(origin);
      next.push_back(std::move(carried));
      continue;
    }
    next.push_back({"u:" + v->annotator + ":r" + std::to_string(round.round_number),
                    task.sentence.id, custom, round.target_language, {origin}, round.round_number});
  }
}

RoundState successor(const RoundState& round) {
  RoundState next;
  next.round_number = round.round_number + 1;
  next.target_language = round.target_language;
  next.status = RoundStatus::open;
  return next;
}

}  // namespace

RoundState close_round1(const RoundState& round1) {
  if (round1.round_number != 1) throw Error("close_round1 called on round " + std::to_string(round1.round_number));
  require_votes(round1);
  RoundState next = successor(round1);
  for (const auto& task : round1.tasks) {
    const auto counts = tally(round1, task.sentence.id);
    std::vector<std::pair<int, const CandidateTranslation*>> ranked;
    for (const auto& c : task.candidates) {
      if (!c.llm_origin()) continue;
      const auto it = counts.find(c.id);
      const int n = it == counts.end() ? 0 : it->second;
      if (n > 0) ranked.emplace_back(n, &c);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second->id < b.second->id;
    });
    SentenceTask carried{task.sentence, {}, task.degraded, false};
    carried.tie_broken = ranked.size() > 2 && ranked[1].first == ranked[2].first;
    for (std::size_t i = 0; i < ranked.size() && i < 2; ++i) carried.candidates.push_back(*ranked[i].second);
    add_customs(round1, task, carried.candidates);
    if (carried.candidates.empty()) {
      next.warnings.push_back("sentence " + task.sentence.id +
                              ": no candidate carried into round 2; all round 1 candidates kept");
      carried.candidates = task.candidates;
    }
    next.tasks.push_back(std::move(carried));
  }
  return next;
}

RoundState close_round2(const RoundState& round2) {
  if (round2.round_number != 2) throw Error("close_round2 called on round " + std::to_string(round2.round_number));
  require_votes(round2);
  RoundState next = successor(round2);
  for (const auto& task : round2.tasks) {
    const auto counts = tally(round2, task.sentence.id);
    SentenceTask carried{task.sentence, {}, task.degraded, false};
    for (const auto& c : task.candidates) {
      if (counts.count(c.id)) carried.candidates.push_back(c);
    }
    add_customs(round2, task, carried.candidates);
    if (carried.candidates.empty()) {
      next.warnings.push_back("sentence " + task.sentence.id +
                              ": no round 2 selections; all candidates carried forward");
      carried.candidates = task.candidates;
    }
    next.tasks.push_back(std::move(carried));
  }
  return next;
}

std::vector<FinalSelection> close_round3(const RoundState& round3) {
  if (round3.round_number != 3) throw Error("close_round3 called on round " + std::to_string(round3.round_number));
  require_votes(round3);
  std::vector<FinalSelection> finals;
  for (const auto& task : round3.tasks) {
    const auto votes = round3.votes_for(task.sentence.id);
    const auto counts = tally(round3, task.sentence.id);
    int best = 0;
    for (const auto& [_, n] : counts) best = std::max(best, n);
    std::vector<const CandidateTranslation*> tied;
    for (const auto& c : task.candidates) {
      const auto it = counts.find(c.id);
      if (it != counts.end() && it->second == best) tied.push_back(&c);
    }
    FinalSelection f{task.sentence.id, *tied.front(), best, false};
    if (tied.size() > 1) {
      std::map<std::string, double> mean_rank;
      for (const auto* c : tied) {
        double sum = 0.0;
        int n = 0;
        for (const auto* v : votes) {
          if (!v->ranking) continue;
          const auto pos = std::find(v->ranking->begin(), v->ranking->end(), c->id);
          if (pos == v->ranking->end()) continue;
          sum += static_cast<double>(pos - v->ranking->begin() + 1);
          ++n;
        }
        mean_rank[c->id] = n > 0 ? sum / n : std::numeric_limits<double>::infinity();
      }
      std::sort(tied.begin(), tied.end(), [&](const auto* a, const auto* b) {
        if (mean_rank[a->id] != mean_rank[b->id]) return mean_rank[a->id] < mean_rank[b->id];
        return a->id < b->id;
      });
      f.winner = *tied.front();
      f.tie_broken = true;
    }
    finals.push_back(std::move(f));
  }
  return finals;
}

void to_json(nlohmann::json& j, const RatingItem& r) {
  j = nlohmann::json{{"sentence_id", r.sentence_id},
                     {"source_text", r.source_text},
                     {"translation_text", r.translation_text},
                     {"set", to_string(r.set)}};
}

void from_json(const nlohmann::json& j, RatingItem& r) {
  j.at("sentence_id").get_to(r.sentence_id);
  r.source_text = j.value("source_text", "");
  j.at("translation_text").get_to(r.translation_text);
  r.set = parse_rating_set(j.value("set", "machine"));
  if (text::trim(r.translation_text).empty()) throw Error("rating item " + r.sentence_id + " has no translation");
}

void to_json(nlohmann::json& j, const Rating& r) {
  j = nlohmann::json{{"annotator", r.annotator},
                     {"sentence_id", r.sentence_id},
                     {"translation_text", r.translation_text},
                     {"score", r.score},
                     {"set", to_string(r.set)}};
}

void from_json(const nlohmann::json& j, Rating& r) {
  if (!j.is_object()) throw Error("rating must be a JSON object");
  j.at("annotator").get_to(r.annotator);
  j.at("sentence_id").get_to(r.sentence_id);
  r.translation_text = j.value("translation_text", "");
  const auto& score = j.at("score");
  if (!score.is_number_integer()) throw Error("rating score must be an integer 1-5");
  r.score = score.get<int>();
  r.set = parse_rating_set(j.value("set", "machine"));
}

void to_json(nlohmann::json& j, const AnnotationReport& r) {
  auto agreement = nlohmann::json::array();
  for (const auto& a : r.agreement) agreement.push_back(a ? nlohmann::json(*a) : nlohmann::json());
  j = nlohmann::json{{"language", r.language},
                     {"sentences", r.sentences},
                     {"custom_submissions", r.custom_submissions},
                     {"mean_custom_per_sentence", r.mean_custom_per_sentence},
                     {"agreement", agreement},
                     {"finals_total", r.finals_total},
                     {"finals_llm", r.finals_llm},
                     {"finals_custom", r.finals_custom},
                     {"degraded", r.degraded},
                     {"warnings", r.warnings}};
  if (r.overlap) {
    j["overlap"] = {{"each_mean", r.overlap->each_mean},
                    {"each_median", r.overlap->each_median},
                    {"nearest_mean", r.overlap->nearest_mean},
                    {"nearest_median", r.overlap->nearest_median},
                    {"pairs", r.overlap->pairs}};
  } else {
    j["overlap"] = nullptr;
  }
}

void to_json(nlohmann::json& j, const TaskView& t) {
  auto candidates = nlohmann::json::array();
  for (const auto& [id, text] : t.candidates) candidates.push_back({{"id", id}, {"text", text}});
  j = nlohmann::json{{"sentence_id", t.sentence_id},
                     {"sentence_text", t.sentence_text},
                     {"round", t.round},
                     {"candidates", candidates},
                     {"constraints", t.constraints},
                     {"own_vote", t.own_vote ? nlohmann::json(*t.own_vote) : nlohmann::json()}};
}

void to_json(nlohmann::json& j, const RoundProgress& p) {
  auto sentences = nlohmann::json::array();
  for (const auto& s : p.sentences) sentences.push_back({{"sentence_id", s.sentence_id}, {"votes", s.votes}});
  j = nlohmann::json{{"round", p.round},
                     {"status", to_string(p.status)},
                     {"annotators", p.annotators},
                     {"sentences", sentences}};
}

Campaign::Campaign(std::string target_language, LogStore* log)
    : language_(std::move(target_language)), log_(log) {
  language_name(language_);
  if (log_ == nullptr) return;
  const auto name = log_name(language_);
  if (log_->exists(name)) {
    const auto replayed = log_->replay(name);
    apply_records(replayed.records);
  } else {
    log_->create(name);
  }
}

std::string Campaign::log_name(std::string_view target_language) {
  return "campaign-" + std::string(target_language);
}

void Campaign::apply_records(std::span<const nlohmann::json> records) {
  std::unique_lock lock(mu_);
  for (const auto& r : records) {
    try {
      apply(r, false);
    } catch (const std::exception& e) {
      warn("campaign " + language_ + ": skipping event that no longer applies: " + e.what());
    }
  }
}

void Campaign::commit(const nlohmann::json& event) {
  // Caller holds the writer lock. apply() validates before mutating, so an
  // event that fails is neither logged nor applied.
  apply(event, true);
}

void Campaign::check_vote(const Vote& vote) const {
  if (rounds_.empty() || rounds_.back().status != RoundStatus::open) {
    throw Error("no open round for " + language_);
  }
  validate_vote(rounds_.back(), vote);
}

void Campaign::check_rating(const Rating& r) const {
  if (!ratings_open_) throw Error("no rating campaign is open for " + language_);
  if (r.annotator.empty()) throw Error("rating has no annotator");
  if (!rating_annotators_.empty() &&
      std::find(rating_annotators_.begin(), rating_annotators_.end(), r.annotator) ==
          rating_annotators_.end()) {
    throw Error("annotator " + r.annotator + " is not part of the rating campaign");
  }
  if (r.score < 1 || r.score > 5) {
    throw Error("rating out of range 1-5: score " + std::to_string(r.score));
  }
  const auto it = std::find_if(rating_items_.begin(), rating_items_.end(), [&](const RatingItem& i) {
    return i.sentence_id == r.sentence_id && i.set == r.set;
  });
  if (it == rating_items_.end()) {
    throw Error("no " + std::string(to_string(r.set)) + " rating item for sentence " + r.sentence_id);
  }
  if (!r.translation_text.empty() && r.translation_text != it->translation_text) {
    throw Error("rated translation does not match item " + r.sentence_id);
  }
}

void Campaign::apply(const nlohmann::json& event, bool persist_event) {
  const auto type = event.at("type").get<std::string>();
  const auto persist = [&] {
    if (log_ != nullptr && persist_event) log_->append(log_name(language_), event);
  };
  if (type == "round_opened") {
    if (!rounds_.empty() && rounds_.back().status == RoundStatus::open) {
      throw Error("a round is already open for " + language_);
    }
    if (!rounds_.empty() && finals_.empty()) throw Error("the campaign for " + language_ + " is in progress");
    RoundState r1;
    r1.round_number = 1;
    r1.target_language = language_;
    r1.tasks = event.at("tasks").get<std::vector<SentenceTask>>();
    r1.warnings = event.value("warnings", std::vector<std::string>{});
    if (r1.tasks.empty()) throw Error("round 1 needs at least one sentence");
    std::set<std::string> ids;
    for (const auto& t : r1.tasks) {
      if (!ids.insert(t.sentence.id).second) throw Error("duplicate sentence " + t.sentence.id);
    }
    persist();
    rounds_.clear();
    finals_.clear();
    rounds_.push_back(std::move(r1));
  } else if (type == "vote") {
    const auto vote = event.at("vote").get<Vote>();
    check_vote(vote);
    persist();
    rounds_.back().votes.insert_or_assign({vote.sentence_id, vote.annotator}, vote);
  } else if (type == "round_closed") {
    const int n = event.at("round").get<int>();
    if (rounds_.empty() || rounds_.back().status != RoundStatus::open ||
        rounds_.back().round_number != n) {
      throw Error("round " + std::to_string(n) + " is not open for " + language_);
    }
    const auto& current = rounds_.back();
    if (n == 3) {
      auto finals = toxtrans::close_round3(current);
      persist();
      rounds_.back().status = RoundStatus::closed;
      finals_ = std::move(finals);
    } else {
      auto next = n == 1 ? toxtrans::close_round1(current) : toxtrans::close_round2(current);
      persist();
      rounds_.back().status = RoundStatus::closed;
      rounds_.push_back(std::move(next));
    }
  } else if (type == "ratings_opened") {
    if (ratings_open_) throw Error("a rating campaign is already open for " + language_);
    auto items = event.at("items").get<std::vector<RatingItem>>();
    auto annotators = event.value("annotators", std::vector<std::string>{});
    if (items.empty()) throw Error("rating campaign needs at least one item");
    std::set<std::pair<std::string, RatingSet>> keys;
    for (const auto& i : items) {
      if (!keys.emplace(i.sentence_id, i.set).second) {
        throw Error("duplicate rating item " + i.sentence_id);
      }
    }
    persist();
    rating_items_ = std::move(items);
    rating_annotators_ = std::move(annotators);
    ratings_.clear();
    ratings_open_ = true;
  } else if (type == "rating") {
    auto rating = event.at("rating").get<Rating>();
    check_rating(rating);
    persist();
    if (rating.translation_text.empty()) {
      for (const auto& i : rating_items_) {
        if (i.sentence_id == rating.sentence_id && i.set == rating.set) {
          rating.translation_text = i.translation_text;
        }
      }
    }
    const auto key = std::string(to_string(rating.set)) + ":" + rating.sentence_id;
    ratings_.insert_or_assign({rating.annotator, key}, std::move(rating));
  } else {
    throw Error("unknown campaign event \"" + type + "\"");
  }
}

RoundState Campaign::start_round1(std::span<const SourceSentence> sentences,
                                  std::span<const BackendId> translators, Gateway& gateway,
                                  std::size_t workers) {
  if (translators.size() != 3) {
    throw Error("round 1 needs exactly 3 translators, got " + std::to_string(translators.size()));
  }
  for (std::size_t i = 0; i < translators.size(); ++i) {
    for (std::size_t j = i + 1; j < translators.size(); ++j) {
      if (translators[i] == translators[j]) throw Error("translator " + translators[i].name + " listed twice");
    }
  }
  if (sentences.empty()) throw Error("round 1 needs at least one sentence");
  {
    std::shared_lock lock(mu_);
    if (!rounds_.empty() && rounds_.back().status == RoundStatus::open) {
      throw Error("a round is already open for " + language_);
    }
  }

  const std::size_t per = translators.size();
  std::vector<std::optional<std::string>> outputs(sentences.size() * per);
  std::vector<std::string> failures(outputs.size());
  parallel_for(outputs.size(), workers, [&](std::size_t idx) {
    const auto& s = sentences[idx / per];
    const auto& t = translators[idx % per];
    try {
      const auto prompt = render_forward_prompt(s.text, s.source_language, language_, {});
      const auto out = gateway.complete(t, prompt);
      outputs[idx] = parse_reply(out, prompt).translation;
    } catch (const std::exception& e) {
      failures[idx] = e.what();
    }
  });

  std::vector<SentenceTask> tasks;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    SentenceTask task{sentences[i], {}, false, false};
    for (std::size_t j = 0; j < per; ++j) {
      const auto idx = i * per + j;
      const Origin origin{OriginKind::llm, translators[j].name};
      if (!outputs[idx]) {
        task.degraded = true;
        warnings.push_back("sentence " + sentences[i].id + ": translator " + translators[j].name +
                           " failed: " + failures[idx]);
        continue;
      }
      auto same = std::find_if(task.candidates.begin(), task.candidates.end(),
                               [&](const auto& c) { return c.text == *outputs[idx]; });
      if (same != task.candidates.end()) {
        same->origins.push_back(origin);
        continue;
      }
      task.candidates.push_back({"m" + std::to_string(j + 1), sentences[i].id, *outputs[idx],
                                 language_, {origin}, 1});
    }
    if (task.candidates.empty()) {
      warnings.push_back("sentence " + sentences[i].id + ": no candidates; annotators must submit custom translations");
    }
    tasks.push_back(std::move(task));
  }
  return open_round1(std::move(tasks), std::move(warnings));
}

RoundState Campaign::open_round1(std::vector<SentenceTask> tasks, std::vector<std::string> warnings) {
  nlohmann::json event{{"type", "round_opened"},
                       {"language", language_},
                       {"round", 1},
                       {"tasks", tasks},
                       {"warnings", warnings}};
  std::unique_lock lock(mu_);
  commit(event);
  return rounds_.back();
}

void Campaign::submit_vote(const Vote& vote) {
  nlohmann::json event{{"type", "vote"}, {"vote", vote}};
  std::unique_lock lock(mu_);
  commit(event);
}

RoundState Campaign::close_round1() {
  std::unique_lock lock(mu_);
  commit({{"type", "round_closed"}, {"round", 1}});
  return rounds_.back();
}

RoundState Campaign::close_round2() {
  std::unique_lock lock(mu_);
  commit({{"type", "round_closed"}, {"round", 2}});
  return rounds_.back();
}

std::vector<FinalSelection> Campaign::close_round3() {
  std::unique_lock lock(mu_);
  commit({{"type", "round_closed"}, {"round", 3}});
  return finals_;
}

std::optional<int> Campaign::current_round_number() const {
  std::shared_lock lock(mu_);
  if (rounds_.empty()) return std::nullopt;
  return rounds_.back().round_number;
}

std::optional<RoundState> Campaign::current_round() const {
  std::shared_lock lock(mu_);
  if (rounds_.empty()) return std::nullopt;
  return rounds_.back();
}

std::vector<RoundState> Campaign::rounds() const {
  std::shared_lock lock(mu_);
  return rounds_;
}

std::vector<FinalSelection> Campaign::finals() const {
  std::shared_lock lock(mu_);
  return finals_;
}

bool Campaign::finished() const {
  std::shared_lock lock(mu_);
  return !finals_.empty();
}

std::vector<TaskView> Campaign::tasks_for(std::string_view annotator) const {
  std::shared_lock lock(mu_);
  std::vector<TaskView> out;
  if (rounds_.empty() || rounds_.back().status != RoundStatus::open) return out;
  const auto& round = rounds_.back();
  for (const auto& t : round.tasks) {
    TaskView v;
    v.sentence_id = t.sentence.id;
    v.sentence_text = t.sentence.text;
    v.round = round.round_number;
    v.constraints = constraints_for_round(round.round_number);
    for (const auto& c : t.candidates) v.candidates.emplace_back(c.id, c.text);
    if (const auto it = round.votes.find({t.sentence.id, std::string(annotator)}); it != round.votes.end()) {
      v.own_vote = it->second;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::optional<RoundProgress> Campaign::progress() const {
  std::shared_lock lock(mu_);
  if (rounds_.empty()) return std::nullopt;
  const auto& round = rounds_.back();
  RoundProgress p;
  p.round = round.round_number;
  p.status = round.status;
  std::set<std::string> annotators;
  for (const auto& [key, _] : round.votes) annotators.insert(key.second);
  p.annotators = annotators.size();
  for (const auto& t : round.tasks) p.sentences.push_back({t.sentence.id, round.votes_for(t.sentence.id).size()});
  return p;
}

std::string Campaign::export_round() const {
  std::shared_lock lock(mu_);
  if (rounds_.empty()) throw Error("no rounds for " + language_);
  const auto& round = rounds_.back();
  std::string out;
  for (const auto& t : round.tasks) {
    auto candidates = nlohmann::json::array();
    for (const auto& c : t.candidates) candidates.push_back({{"id", c.id}, {"text", c.text}});
    nlohmann::json line{{"language", language_},
                        {"round", round.round_number},
                        {"status", to_string(round.status)},
                        {"sentence_id", t.sentence.id},
                        {"sentence_text", t.sentence.text},
                        {"candidates", candidates},
                        {"constraints", constraints_for_round(round.round_number)}};
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

AnnotationReport Campaign::statistics() const {
  std::shared_lock lock(mu_);
  AnnotationReport r;
  r.language = language_;
  if (rounds_.empty()) return r;
  const auto& round1 = rounds_.front();
  r.sentences = round1.tasks.size();
  for (const auto& t : round1.tasks) {
    if (t.degraded) r.degraded.push_back(t.sentence.id);
  }
  for (const auto& round : rounds_) {
    r.warnings.insert(r.warnings.end(), round.warnings.begin(), round.warnings.end());
    if (round.round_number <= 2) {
      for (const auto& [_, v] : round.votes) r.custom_submissions += v.custom_text ? 1 : 0;
    }
    if (round.status != RoundStatus::closed) continue;
    std::vector<double> per_sentence;
    for (const auto& t : round.tasks) {
      std::vector<std::set<std::string>> selections;
      for (const auto* v : round.votes_for(t.sentence.id)) selections.push_back(v->selected);
      if (selections.size() >= 2) per_sentence.push_back(pairwise_agreement(selections).value);
    }
    if (!per_sentence.empty()) r.agreement[static_cast<std::size_t>(round.round_number - 1)] = mean(per_sentence);
  }
  if (r.sentences > 0) {
    r.mean_custom_per_sentence = static_cast<double>(r.custom_submissions) / static_cast<double>(r.sentences);
  }
  r.finals_total = finals_.size();
  std::vector<double> each;
  std::vector<double> nearest;
  for (const auto& f : finals_) {
    (f.winner.llm_origin() ? r.finals_llm : r.finals_custom) += 1;
    const auto* task = round1.task(f.sentence_id);
    if (task == nullptr) continue;
    double best = -1.0;
    for (const auto& c : task->candidates) {
      if (!c.llm_origin()) continue;
      const double o = substring_overlap(f.winner.text, c.text).value;
      each.push_back(o);
      best = std::max(best, o);
    }
    if (best >= 0.0) nearest.push_back(best);
  }
  if (!each.empty()) {
    r.overlap = OverlapSummary{mean(each), median(each), mean(nearest), median(nearest), each.size()};
  }
  return r;
}

void Campaign::open_ratings(std::vector<RatingItem> items, std::vector<std::string> annotators) {
  nlohmann::json event{{"type", "ratings_opened"}, {"items", items}, {"annotators", annotators}};
  std::unique_lock lock(mu_);
  commit(event);
}

void Campaign::submit_rating(const Rating& rating) {
  nlohmann::json event{{"type", "rating"}, {"rating", rating}};
  std::unique_lock lock(mu_);
  commit(event);
}

bool Campaign::ratings_open() const {
  std::shared_lock lock(mu_);
  return ratings_open_;
}

std::vector<RatingItem> Campaign::rating_items() const {
  std::shared_lock lock(mu_);
  return rating_items_;
}

std::vector<std::string> Campaign::rating_annotators() const {
  std::shared_lock lock(mu_);
  return rating_annotators_;
}

std::vector<Rating> Campaign::ratings() const {
  std::shared_lock lock(mu_);
  std::vector<Rating> out;
  for (const auto& [_, r] : ratings_) out.push_back(r);
  return out;
}

std::vector<RatingRecord> Campaign::rating_records() const {
  std::vector<RatingRecord> out;
  for (const auto& r : ratings()) {
    out.push_back({language_, r.annotator, r.sentence_id, r.score, std::string(to_string(r.set))});
  }
  return out;
}

std::vector<Rating> run_rating_campaign(Campaign& campaign, std::vector<RatingItem> items,
                                        std::vector<std::string> annotators,
                                        const RatingScorer& scorer) {
  campaign.open_ratings(items, annotators);
  for (const auto& a : annotators) {
    for (const auto& item : items) {
      campaign.submit_rating({a, item.sentence_id, item.translation_text, scorer(a, item), item.set});
    }
  }
  return campaign.ratings();
}

}  // namespace toxtrans
