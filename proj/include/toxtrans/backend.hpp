#pragma once

#include <compare>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace toxtrans {

enum class BackendKind { translator, embedder };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view s);

struct BackendId {
  std::string name;
  BackendKind kind = BackendKind::translator;

  friend auto operator<=>(const BackendId&, const BackendId&) = default;
};

/// A dense embedding. Construct through make() so that the invariants hold:
/// non-empty, all entries finite, not the zero vector.
class EmbeddingVector {
 public:
  static EmbeddingVector make(std::vector<double> values, BackendId source);

  std::span<const double> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  const BackendId& source_backend() const { return source_; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  EmbeddingVector(std::vector<double> values, BackendId source)
      : values_(std::move(values)), source_(std::move(source)) {}

  std::vector<double> values_;
  BackendId source_;
};

}  // namespace toxtrans
