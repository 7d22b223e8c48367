#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "cirfuse/embedding_store.hpp"
#include "cirfuse/json_io.hpp"
#include "cirfuse/projection.hpp"

namespace cirfuse {

/// Modality means for centering plus the empirical minimum similarities
/// used to min-normalize scores.
struct CalibrationStats {
  Vector mu_image;
  Vector mu_text;
  double s_v_min = -1.0;
  double s_t_min = -1.0;
  bool projected = false;
  std::optional<std::string> projection_fingerprint;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mu_image.size()); }

  /// Throws NonNegativeMin or DimMismatch when the invariants fail.
  void validate() const;
};

struct MinStats {
  double s_v_min;
  double s_t_min;
};

Vector compute_mean(const EmbeddingSet& set);
Vector center(const Vector& v, const Vector& mu);

/// Exhaustive pairwise minima after centering. The image minimum runs over
/// ordered pairs i != j (projected when `proj` is given); the text minimum
/// runs over every (text, image) pair and is never projected.
MinStats compute_min_stats(const EmbeddingSet& images, const EmbeddingSet& texts,
                           const Vector& mu_image, const Vector& mu_text,
                           const ProjectionOperator* proj = nullptr);

Json stats_to_json(const CalibrationStats& stats);
CalibrationStats stats_from_json(const Json& doc);
void save_stats(const CalibrationStats& stats, const std::filesystem::path& path,
                const Json& provenance = nullptr);
CalibrationStats load_stats(const std::filesystem::path& path);

}  // namespace cirfuse
