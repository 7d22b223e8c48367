#pragma once

#include <string>
#include <vector>

#include "cirfuse/embedding_store.hpp"
#include "cirfuse/projection.hpp"

namespace cirfuse {

struct ExpansionConfig {
  std::size_t k_neighbors = 10;
  double beta = 0.1;
};

struct ExpansionResult {
  Vector query;                       // expanded centered query
  std::vector<std::string> neighbors; // selected database ids, best first
  std::vector<double> similarities;   // [query itself, neighbors...]
  std::vector<double> weights;        // softmax of beta * similarities, same order
};

/// Softmax-weighted mean of the centered query and its top k_neighbors
/// database rows, ranked by (projected, when `proj` is given) similarity
/// to the query. Ties go to the smaller id.
ExpansionResult expand_query(const Vector& q_centered, const EmbeddingSet& database,
                             const Vector& mu_image, const ProjectionOperator* proj,
                             const ExpansionConfig& cfg);

}  // namespace cirfuse
