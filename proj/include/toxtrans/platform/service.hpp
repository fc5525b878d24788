#pragma once

#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "toxtrans/platform/workspace.hpp"

namespace toxtrans::platform {

inline constexpr std::string_view kTokenHeader = "x-auth-token";

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  /// Header names in lower case.
  std::map<std::string, std::string> headers;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

/// The JSON API behind the annotation UI, independent of the transport.
/// Responses to an annotator never include other annotators' votes.
///
///   GET  /api/rounds/current   ?language=
///   GET  /api/tasks            ?annotator=&language=
///   POST /api/votes
///   GET  /api/ratings/items    ?annotator=&language=
///   POST /api/ratings
///   GET  /api/progress         ?language=
///   GET  /api/stats/annotation ?language=
///   GET  /api/stats/ratings    ?language=
class AnnotationService {
 public:
  /// With a token, every request must carry it in the X-Auth-Token header.
  AnnotationService(Workspace& workspace, std::optional<std::string> token = std::nullopt);

  ApiResponse handle(const ApiRequest& request);

 private:
  ApiResponse current_round(const ApiRequest& r);
  ApiResponse tasks(const ApiRequest& r);
  ApiResponse post_vote(const ApiRequest& r);
  ApiResponse rating_items(const ApiRequest& r);
  ApiResponse post_rating(const ApiRequest& r);
  ApiResponse progress(const ApiRequest& r);
  ApiResponse annotation_stats(const ApiRequest& r);
  ApiResponse rating_stats(const ApiRequest& r);

  ApiSession session(const std::string& annotator, const std::string& language) const;
  std::string language_for(const std::string& requested, const std::string& annotator) const;

  Workspace& ws_;
  std::optional<std::string> token_;
};

}  // namespace toxtrans::platform
