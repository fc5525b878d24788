#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxtrans/candidate.hpp"
#include "toxtrans/corpus.hpp"
#include "toxtrans/gateway.hpp"
#include "toxtrans/metrics.hpp"
#include "toxtrans/store.hpp"

namespace toxtrans {

// Three-round curation. Round 1: annotators pick any number of the three
// zero-shot candidates and may write their own. Round 2: the two most-picked
// model candidates plus every custom one; pick at most two. Round 3: pick
// exactly one (optionally ranking all); the most-voted candidate is adopted.

enum class RoundStatus { open, closed };

std::string_view to_string(RoundStatus s);

struct Vote {
  std::string annotator;
  std::string sentence_id;
  int round_number = 1;
  std::set<std::string> selected;
  std::optional<std::string> custom_text;
  /// Round 3 only: every candidate id, best first.
  std::optional<std::vector<std::string>> ranking;

  friend bool operator==(const Vote&, const Vote&) = default;
};

void to_json(nlohmann::json& j, const Vote& v);
void from_json(const nlohmann::json& j, Vote& v);

struct RoundConstraints {
  int round = 1;
  std::size_t min_select = 0;
  std::optional<std::size_t> max_select;
  bool custom_allowed = true;
  bool ranking_allowed = false;
  /// Round 1: a vote must select something or carry a custom translation.
  bool requires_selection_or_custom = false;
};

RoundConstraints constraints_for_round(int round);
void to_json(nlohmann::json& j, const RoundConstraints& c);

struct SentenceTask {
  SourceSentence sentence;
  std::vector<CandidateTranslation> candidates;
  bool degraded = false;
  /// Set when the close that produced these candidates broke a tie.
  bool tie_broken = false;

  const CandidateTranslation* find(std::string_view candidate_id) const;
};

void to_json(nlohmann::json& j, const SentenceTask& t);
void from_json(const nlohmann::json& j, SentenceTask& t);

struct RoundState {
  int round_number = 1;
  std::string target_language;
  RoundStatus status = RoundStatus::open;
  std::vector<SentenceTask> tasks;
  /// Latest vote per (sentence id, annotator).
  std::map<std::pair<std::string, std::string>, Vote> votes;
  std::vector<std::string> warnings;

  const SentenceTask* task(std::string_view sentence_id) const;
  std::vector<const Vote*> votes_for(std::string_view sentence_id) const;
};

/// Throws Error naming the violated constraint; never mutates the round.
void validate_vote(const RoundState& round, const Vote& vote);

/// Round-2 state from a finished Round 1. Throws if any sentence has no vote.
RoundState close_round1(const RoundState& round1);
/// Round-3 state from a finished Round 2.
RoundState close_round2(const RoundState& round2);
/// Most-voted candidate per sentence; ties go to the better mean rank, then
/// the smaller candidate id.
std::vector<FinalSelection> close_round3(const RoundState& round3);

enum class RatingSet { machine, gold };

std::string_view to_string(RatingSet s);
RatingSet parse_rating_set(std::string_view s);

struct RatingItem {
  std::string sentence_id;
  std::string source_text;
  std::string translation_text;
  RatingSet set = RatingSet::machine;
};

struct Rating {
  std::string annotator;
  std::string sentence_id;
  std::string translation_text;
  int score = 0;
  RatingSet set = RatingSet::machine;

  friend bool operator==(const Rating&, const Rating&) = default;
};

void to_json(nlohmann::json& j, const RatingItem& r);
void from_json(const nlohmann::json& j, RatingItem& r);
void to_json(nlohmann::json& j, const Rating& r);
void from_json(const nlohmann::json& j, Rating& r);

struct OverlapSummary {
  double each_mean = 0.0;
  double each_median = 0.0;
  double nearest_mean = 0.0;
  double nearest_median = 0.0;
  std::size_t pairs = 0;
};

struct AnnotationReport {
  std::string language;
  std::size_t sentences = 0;
  std::size_t custom_submissions = 0;
  double mean_custom_per_sentence = 0.0;
  /// Mean pairwise Jaccard per round (index 0 = Round 1); empty when the
  /// round is not closed or no sentence had two voters.
  std::array<std::optional<double>, 3> agreement;
  std::size_t finals_total = 0;
  std::size_t finals_llm = 0;
  std::size_t finals_custom = 0;
  std::optional<OverlapSummary> overlap;
  std::vector<std::string> degraded;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const AnnotationReport& r);

/// What one annotator sees for one sentence: no origins, no other votes.
struct TaskView {
  std::string sentence_id;
  std::string sentence_text;
  int round = 1;
  std::vector<std::pair<std::string, std::string>> candidates;  // (id, text)
  RoundConstraints constraints;
  std::optional<Vote> own_vote;
};

void to_json(nlohmann::json& j, const TaskView& t);

struct SentenceProgress {
  std::string sentence_id;
  std::size_t votes = 0;
};

struct RoundProgress {
  int round = 1;
  RoundStatus status = RoundStatus::open;
  std::vector<SentenceProgress> sentences;
  std::size_t annotators = 0;
};

void to_json(nlohmann::json& j, const RoundProgress& p);

/// One language's curation campaign plus its rating campaign. Every mutation
/// is validated, appended to the event log, then applied, under a single
/// writer lock; reads see committed state only. Constructing a campaign over
/// an existing log replays it.
class Campaign {
 public:
  Campaign(std::string target_language, LogStore* log = nullptr);

  Campaign(const Campaign&) = delete;
  Campaign& operator=(const Campaign&) = delete;

  static std::string log_name(std::string_view target_language);

  const std::string& language() const { return language_; }

  /// Generates one zero-shot candidate per translator for every sentence and
  /// opens Round 1. A backend failure leaves the sentence degraded.
  RoundState start_round1(std::span<const SourceSentence> sentences,
                          std::span<const BackendId> translators, Gateway& gateway,
                          std::size_t workers = 4);
  /// Opens Round 1 with already generated candidates.
  RoundState open_round1(std::vector<SentenceTask> tasks, std::vector<std::string> warnings = {});

  void submit_vote(const Vote& vote);

  RoundState close_round1();
  RoundState close_round2();
  std::vector<FinalSelection> close_round3();

  /// Number of the latest round, and whether it is still open.
  std::optional<int> current_round_number() const;
  std::optional<RoundState> current_round() const;
  std::vector<RoundState> rounds() const;
  std::vector<FinalSelection> finals() const;
  bool finished() const;

  std::vector<TaskView> tasks_for(std::string_view annotator) const;
  std::optional<RoundProgress> progress() const;
  /// One JSON line per sentence of the current round, origins hidden.
  std::string export_round() const;

  AnnotationReport statistics() const;

  void open_ratings(std::vector<RatingItem> items, std::vector<std::string> annotators);
  void submit_rating(const Rating& rating);
  bool ratings_open() const;
  std::vector<RatingItem> rating_items() const;
  std::vector<std::string> rating_annotators() const;
  std::vector<Rating> ratings() const;
  std::vector<RatingRecord> rating_records() const;

  /// Applies already-committed events (used for replay).
  void apply_records(std::span<const nlohmann::json> records);

 private:
  void commit(const nlohmann::json& event);
  void apply(const nlohmann::json& event, bool persist);
  void check_vote(const Vote& vote) const;
  void check_rating(const Rating& rating) const;

  std::string language_;
  LogStore* log_;
  mutable std::shared_mutex mu_;
  std::vector<RoundState> rounds_;
  std::vector<FinalSelection> finals_;
  bool ratings_open_ = false;
  std::vector<RatingItem> rating_items_;
  std::vector<std::string> rating_annotators_;
  std::map<std::pair<std::string, std::string>, Rating> ratings_;  // (annotator, item key)
};

using RatingScorer = std::function<int(const std::string& annotator, const RatingItem& item)>;

/// Opens the rating campaign, collects one score per (annotator, item) from
/// `scorer`, and returns the committed ratings.
std::vector<Rating> run_rating_campaign(Campaign& campaign, std::vector<RatingItem> items,
                                        std::vector<std::string> annotators,
                                        const RatingScorer& scorer);

}  // namespace toxtrans
