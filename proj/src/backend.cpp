#include "toxtrans/backend.hpp"

#include <cmath>

#include "toxtrans/error.hpp"

namespace toxtrans {

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::translator ? "translator" : "embedder";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "translator") return BackendKind::translator;
  if (s == "embedder") return BackendKind::embedder;
  throw Error("unknown backend kind \"" + std::string(s) + "\"");
}

EmbeddingVector EmbeddingVector::make(std::vector<double> values, BackendId source) {
  if (values.empty()) throw Error("embedding has dimension 0");
  bool any_nonzero = false;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error("embedding contains a non-finite entry");
    if (v != 0.0) any_nonzero = true;
  }
  if (!any_nonzero) throw Error("zero embedding vector from backend " + source.name);
  return EmbeddingVector(std::move(values), std::move(source));
}

}  // namespace toxtrans
