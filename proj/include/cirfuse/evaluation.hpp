#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cirfuse/contextualization.hpp"
#include "cirfuse/embedder.hpp"
#include "cirfuse/embedding_store.hpp"
#include "cirfuse/json_io.hpp"
#include "cirfuse/scoring.hpp"

namespace cirfuse {

using IdSet = std::unordered_set<std::string>;

// ---------------------------------------------------------------- metrics

/// Mean over positives of precision at each positive's rank. Positives
/// missing from the ranking contribute zero.
double average_precision(std::span<const std::string> ranked_ids, const IdSet& positives);
double mean_average_precision(std::span<const double> aps);
/// Mean of per-instance mAPs, each instance weighted equally.
double macro_map(const std::map<std::string, double>& per_instance);

enum class RecallConvention {
  HitRate,   // 1 if any positive is in the top k (single-target benchmarks)
  Fraction,  // |positives in top k| / min(|positives|, k)
};

double recall_at_k(std::span<const std::string> ranked_ids, const IdSet& positives, std::size_t k,
                   RecallConvention convention);
/// AP truncated at rank k with denominator min(|positives|, k).
double map_at_k(std::span<const std::string> ranked_ids, const IdSet& positives, std::size_t k);

// --------------------------------------------------------------- manifest

struct ManifestQuery {
  std::string query_id;
  std::string image_query_id;
  std::string text_query;
  std::optional<std::string> text_embedding_id;
  std::vector<std::string> positives;
};

struct ManifestInstance {
  std::string instance_id;
  std::vector<std::string> database;
  std::vector<ManifestQuery> queries;
};

struct DatasetManifest {
  std::vector<ManifestInstance> instances;
  RecallConvention recall_convention = RecallConvention::Fraction;

  /// Positives within the database, query images held out, unique ids.
  void validate() const;
};

DatasetManifest manifest_from_json(const Json& doc);
Json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// ------------------------------------------------------------- benchmark

/// Where query embeddings come from. Text queries with a
/// text_embedding_id are read from `texts`; the others are embedded
/// through `embedder`, contextualized with `context_terms` when the engine
/// has contextualization enabled.
struct QuerySources {
  const EmbeddingSet* images = nullptr;
  const EmbeddingSet* texts = nullptr;
  Embedder* embedder = nullptr;
  std::vector<std::string> context_terms;
};

/// Resolves the centered text query for a manifest entry, memoized.
class TextQueryResolver {
 public:
  TextQueryResolver(const Engine& engine, const QuerySources& sources);
  Vector resolve(const ManifestQuery& query);

 private:
  const Engine& engine_;
  const QuerySources& sources_;
  ContextCache cache_;
};

struct EvaluationReport {
  std::map<std::string, double> per_query_ap;
  std::map<std::string, double> per_instance_map;
  double macro_map = 0.0;
  double micro_map = 0.0;
  std::map<std::size_t, double> recall_at;
  std::map<std::size_t, double> map_at;
  Json config_echo;

  Json to_json() const;
};

inline const std::vector<std::size_t> kDefaultCutoffs = {1, 5, 10, 50};

EvaluationReport run_benchmark(const DatasetManifest& manifest, const Engine& engine,
                               const QuerySources& sources, const FusionConfig& fusion,
                               std::span<const std::size_t> cutoffs = kDefaultCutoffs);

struct SweepPoint {
  double weight;
  double map;
};

struct SweepResult {
  std::vector<SweepPoint> curve;
  /// Peak of the curve minus the best endpoint; never negative.
  double composition_gain = 0.0;
  double peak_weight = 0.0;
};

/// Evenly spaced weights in [0, 1] (both endpoints included), scored by
/// macro-mAP. `mode` must be weighted_sum or weighted_product.
SweepResult modality_sweep(const DatasetManifest& manifest, const Engine& engine,
                           const QuerySources& sources, FusionMode mode, std::size_t steps);

void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path);

}  // namespace cirfuse
