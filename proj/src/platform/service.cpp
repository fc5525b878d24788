#include "toxtrans/platform/service.hpp"

#include <algorithm>
#include <functional>

#include "toxtrans/error.hpp"
#include "toxtrans/metrics.hpp"

namespace toxtrans::platform {

using nlohmann::json;

namespace {

// A rejected request; `status` becomes the HTTP status.
struct Rejection : Error {
  Rejection(int s, const std::string& msg) : Error(msg), status(s) {}
  int status;
};

std::string param(const ApiRequest& r, const std::string& name) {
  const auto it = r.query.find(name);
  return it == r.query.end() ? std::string() : it->second;
}

json parse_body(const ApiRequest& r) {
  json j;
  try {
    j = json::parse(r.body);
  } catch (const json::exception& e) {
    throw Rejection(400, std::string("malformed JSON body: ") + e.what());
  }
  if (!j.is_object()) throw Rejection(400, "request body must be a JSON object");
  return j;
}

ApiResponse error_response(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

json summaries_json(const std::vector<RatingSummary>& rows) {
  auto out = json::array();
  for (const auto& s : rows) {
    json row{{"language", s.language}, {"set", s.set}, {"mean", s.mean}, {"count", s.count}};
    if (s.annotator) row["annotator"] = *s.annotator;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

AnnotationService::AnnotationService(Workspace& workspace, std::optional<std::string> token)
    : ws_(workspace), token_(std::move(token)) {
  if (token_ && token_->empty()) throw Error("auth token must not be empty");
}

std::string AnnotationService::language_for(const std::string& requested, const std::string& annotator) const {
  const auto* a = annotator.empty() ? nullptr : ws_.annotator(annotator);
  if (!requested.empty()) {
    if (!ws_.has_language(requested)) throw Rejection(400, "language " + requested + " is not configured");
    if (a != nullptr && !a->language.empty() && a->language != requested) {
      throw Rejection(403, "annotator " + annotator + " is assigned to " + a->language);
    }
    return requested;
  }
  if (a != nullptr && !a->language.empty()) return a->language;
  if (ws_.config().languages.size() == 1) return ws_.config().languages.front();
  throw Rejection(400, "language is required");
}

ApiSession AnnotationService::session(const std::string& annotator, const std::string& language) const {
  if (annotator.empty()) throw Rejection(400, "annotator is required");
  ApiSession s{annotator, annotator, language_for(language, annotator)};
  if (const auto* known = ws_.annotator(annotator)) {
    s.display_name = known->display_name;
  } else if (!ws_.config().annotators.empty()) {
    throw Rejection(403, "unknown annotator " + annotator);
  }
  return s;
}

ApiResponse AnnotationService::handle(const ApiRequest& request) {
  using Handler = ApiResponse (AnnotationService::*)(const ApiRequest&);
  static const std::map<std::pair<std::string, std::string>, Handler> routes{
      {{"GET", "/api/rounds/current"}, &AnnotationService::current_round},
      {{"GET", "/api/tasks"}, &AnnotationService::tasks},
      {{"POST", "/api/votes"}, &AnnotationService::post_vote},
      {{"GET", "/api/ratings/items"}, &AnnotationService::rating_items},
      {{"POST", "/api/ratings"}, &AnnotationService::post_rating},
      {{"GET", "/api/progress"}, &AnnotationService::progress},
      {{"GET", "/api/stats/annotation"}, &AnnotationService::annotation_stats},
      {{"GET", "/api/stats/ratings"}, &AnnotationService::rating_stats},
  };
  if (token_) {
    const auto it = request.headers.find(std::string(kTokenHeader));
    if (it == request.headers.end() || it->second != *token_) {
      return error_response(401, "missing or wrong X-Auth-Token");
    }
  }
  const auto route = routes.find({request.method, request.path});
  if (route == routes.end()) {
    const bool known_path = std::any_of(routes.begin(), routes.end(),
                                        [&](const auto& r) { return r.first.second == request.path; });
    return known_path ? error_response(405, "method not allowed")
                      : error_response(404, "no such endpoint " + request.path);
  }
  try {
    return (this->*route->second)(request);
  } catch (const Rejection& e) {
    return error_response(e.status, e.what());
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
}

ApiResponse AnnotationService::current_round(const ApiRequest& r) {
  const auto lang = language_for(param(r, "language"), param(r, "annotator"));
  auto& campaign = ws_.campaign(lang);
  const auto round = campaign.current_round();
  json body{{"language", lang}, {"finished", campaign.finished()}, {"ratings_open", campaign.ratings_open()}};
  if (!round) {
    body["round"] = nullptr;
    return {200, body};
  }
  body["round"] = round->round_number;
  body["status"] = to_string(round->status);
  body["constraints"] = constraints_for_round(round->round_number);
  body["sentences"] = round->tasks.size();
  return {200, body};
}

ApiResponse AnnotationService::tasks(const ApiRequest& r) {
  const auto s = session(param(r, "annotator"), param(r, "language"));
  auto& campaign = ws_.campaign(s.language);
  const auto round = campaign.current_round();
  json body{{"language", s.language}, {"annotator", s.annotator}, {"display_name", s.display_name}};
  body["round"] = round && round->status == RoundStatus::open ? json(round->round_number) : json();
  body["tasks"] = campaign.tasks_for(s.annotator);
  return {200, body};
}

ApiResponse AnnotationService::post_vote(const ApiRequest& r) {
  auto j = parse_body(r);
  const auto s = session(j.value("annotator", ""), j.value("language", ""));
  j.erase("language");
  Vote vote;
  try {
    vote = j.get<Vote>();
  } catch (const json::exception& e) {
    throw Rejection(400, std::string("malformed vote: ") + e.what());
  }
  ws_.campaign(s.language).submit_vote(vote);
  return {200, {{"accepted", true}, {"language", s.language}, {"vote", vote}}};
}

ApiResponse AnnotationService::rating_items(const ApiRequest& r) {
  const auto s = session(param(r, "annotator"), param(r, "language"));
  auto& campaign = ws_.campaign(s.language);
  std::map<std::pair<std::string, std::string>, int> own;
  for (const auto& rating : campaign.ratings()) {
    if (rating.annotator == s.annotator) own[{std::string(to_string(rating.set)), rating.sentence_id}] = rating.score;
  }
  auto items = json::array();
  for (const auto& item : campaign.rating_items()) {
    json row = item;
    const auto it = own.find({std::string(to_string(item.set)), item.sentence_id});
    row["own_score"] = it == own.end() ? json() : json(it->second);
    items.push_back(std::move(row));
  }
  return {200, {{"language", s.language}, {"open", campaign.ratings_open()}, {"items", items}}};
}

ApiResponse AnnotationService::post_rating(const ApiRequest& r) {
  const auto j = parse_body(r);
  const auto s = session(j.value("annotator", ""), j.value("language", ""));
  Rating rating;
  try {
    rating = j.get<Rating>();
  } catch (const json::exception& e) {
    throw Rejection(400, std::string("malformed rating: ") + e.what());
  }
  ws_.campaign(s.language).submit_rating(rating);
  return {200, {{"accepted", true}, {"language", s.language}, {"rating", rating}}};
}

ApiResponse AnnotationService::progress(const ApiRequest& r) {
  const auto lang = language_for(param(r, "language"), param(r, "annotator"));
  auto& campaign = ws_.campaign(lang);
  json body{{"language", lang}};
  const auto p = campaign.progress();
  body["round"] = p ? json(*p) : json();
  const auto items = campaign.rating_items();
  const auto ratings = campaign.ratings();
  std::map<std::string, std::size_t> per_annotator;
  for (const auto& rating : ratings) ++per_annotator[rating.annotator];
  body["ratings"] = {{"open", campaign.ratings_open()},
                     {"items", items.size()},
                     {"submitted", ratings.size()},
                     {"per_annotator", per_annotator}};
  return {200, body};
}

ApiResponse AnnotationService::annotation_stats(const ApiRequest& r) {
  const auto lang = language_for(param(r, "language"), param(r, "annotator"));
  return {200, json(ws_.campaign(lang).statistics())};
}

ApiResponse AnnotationService::rating_stats(const ApiRequest& r) {
  std::vector<std::string> langs;
  if (const auto l = param(r, "language"); !l.empty()) {
    langs.push_back(language_for(l, ""));
  } else {
    langs = ws_.config().languages;
  }
  std::vector<RatingRecord> records;
  for (const auto& l : langs) {
    const auto part = ws_.campaign(l).rating_records();
    records.insert(records.end(), part.begin(), part.end());
  }
  return {200,
          {{"by_language", summaries_json(mean_ratings(records, RatingGrouping::language))},
           {"by_annotator", summaries_json(mean_ratings(records, RatingGrouping::language_and_annotator))}}};
}

}  // namespace toxtrans::platform
