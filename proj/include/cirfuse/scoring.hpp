#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cirfuse/calibration.hpp"
#include "cirfuse/embedding_store.hpp"
#include "cirfuse/json_io.hpp"
#include "cirfuse/projection.hpp"
#include "cirfuse/query_expansion.hpp"

namespace cirfuse {

enum class FusionMode {
  BasicHarris,
  TextOnly,
  ImageOnly,
  Sum,
  Product,
  WeightedSum,
  WeightedProduct,
};

std::string_view fusion_mode_name(FusionMode mode) noexcept;
FusionMode parse_fusion_mode(std::string_view name);

struct FusionConfig {
  FusionMode mode = FusionMode::BasicHarris;
  double harris_lambda = 0.1;
  /// Mixing weight for the weighted modes: 0 is text only, 1 is image only.
  double weight = 0.5;
};

/// Ablation switches. Projection needs centering and Harris needs
/// min-normalized scores.
struct ComponentToggles {
  bool centering = true;
  bool min_norm = true;
  bool harris = true;
  bool contextualization = true;
  bool projection = true;
  bool query_expansion = false;
};

struct EngineConfig {
  ComponentToggles toggles;
  double alpha = 0.2;
  int k = 250;
  double harris_lambda = 0.1;
  double beta = 0.1;
  std::size_t k_neighbors = 10;
  std::size_t n_phrases = 100;
  std::uint64_t rng_seed = 0;
  unsigned threads = 1;

  /// Throws ConfigDependencyViolation or InvalidArgument.
  void validate() const;
  Json to_json() const;
};

struct ScoredItem {
  std::string id;
  double s_v = 0.0;
  double s_t = 0.0;
  double s_v_norm = 0.0;
  double s_t_norm = 0.0;
  double fused = 0.0;
};

/// <x_raw, w> - c: projected image similarity via the query-side identity.
double score_image(const Vector& x_raw, const QuerySideOperator& op);
/// <x_raw - mu_image, q_text_centered>.
double score_text(const Vector& x_raw, const Vector& mu_image, const Vector& q_text_centered);
/// (s - s_min) / |s_min|: s_min maps to 0 and 0 maps to 1.
double min_normalize(double s, double s_min);
/// s_v * s_t - lambda * (s_v + s_t)^2.
double harris_fuse(double s_v_norm, double s_t_norm, double lambda);
/// Baseline rules. WeightedProduct takes min-normalized (nonnegative) scores.
double baseline_fuse(double s_v, double s_t, const FusionConfig& cfg);
/// Dispatches on cfg.mode, BasicHarris included.
double fuse(double s_v, double s_t, const FusionConfig& cfg);

/// Descending by fused score, ties by ascending id.
void sort_ranking(std::vector<ScoredItem>& items);

/// Centered image and text query, ready for scoring.
struct QueryBundle {
  Vector image;  // centered, possibly expanded
  Vector text;   // centered, possibly contextualized
  std::optional<ExpansionResult> expansion;
};

/// Immutable scorer: configuration plus the calibration and projection it
/// was validated against. Safe to share across threads.
class Engine {
 public:
  Engine(EngineConfig config, std::optional<CalibrationStats> stats,
         std::optional<ProjectionOperator> projection);

  const EngineConfig& config() const noexcept { return config_; }
  const std::optional<CalibrationStats>& stats() const noexcept { return stats_; }
  const std::optional<ProjectionOperator>& projection() const noexcept { return projection_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Zero when centering is disabled.
  const Vector& mu_image() const noexcept { return mu_image_; }
  const Vector& mu_text() const noexcept { return mu_text_; }

  /// Centers the raw image query and, when enabled, expands it over `database`.
  QueryBundle make_query(const Vector& q_image_raw, const Vector& q_text_centered,
                         const EmbeddingSet& database) const;

  std::vector<ScoredItem> rank(const QueryBundle& query, const EmbeddingSet& database,
                               const FusionConfig& fusion) const;

  /// Fingerprint of config, stats and projection, echoed into reports.
  std::string fingerprint() const;

 private:
  EngineConfig config_;
  std::optional<CalibrationStats> stats_;
  std::optional<ProjectionOperator> projection_;
  std::size_t dim_ = 0;
  Vector mu_image_;
  Vector mu_text_;
};

void write_ranking_jsonl(std::span<const ScoredItem> items, const std::filesystem::path& path);
void write_ranking_csv(std::span<const ScoredItem> items, const std::filesystem::path& path);
Json scored_item_to_json(const ScoredItem& item);

}  // namespace cirfuse
