#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace cirfuse {

/// Working-precision vector for everything derived from stored embeddings
/// (means, centered queries, projected coordinates).
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Modality { Image, Text };

std::string_view modality_name(Modality m) noexcept;
Modality parse_modality(std::string_view name);

/// Raw vectors must have unit L2 norm within this tolerance on ingest.
inline constexpr double kUnitNormTolerance = 1e-3;

/// Immutable id-keyed matrix of raw (uncentered, unit-norm) embeddings.
class EmbeddingSet {
 public:
  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  EmbeddingSet() = default;

  /// Validates every invariant; throws Error on the first violation.
  EmbeddingSet(Modality modality, std::size_t dim, std::vector<std::string> ids, RowMatrix rows);

  Modality modality() const noexcept { return modality_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const RowMatrix& matrix() const noexcept { return rows_; }
  auto row(std::size_t i) const { return rows_.row(static_cast<Eigen::Index>(i)); }

  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;  // throws UnknownId

  /// Row for `id` widened to double; throws UnknownId.
  Vector lookup(std::string_view id) const;
  Vector row_vector(std::size_t i) const;

  /// New set holding the given ids in the given order.
  EmbeddingSet subset(std::span<const std::string> ids) const;

 private:
  Modality modality_ = Modality::Image;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  RowMatrix rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Sidecar manifest path: same basename with a ".json" extension.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

EmbeddingSet load_embedding_set(const std::filesystem::path& path);
void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);

}  // namespace cirfuse
