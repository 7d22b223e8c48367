#include "cirfuse/query_expansion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cirfuse/error.hpp"

namespace cirfuse {

ExpansionResult expand_query(const Vector& q_centered, const EmbeddingSet& database,
                             const Vector& mu_image, const ProjectionOperator* proj,
                             const ExpansionConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
  if (q_centered.size() != mu_image.size()) {
    throw Error(ErrorCode::DimMismatch, "query and image mean differ in length");
  }

  ExpansionResult out;
  if (cfg.k_neighbors == 0) {
    out.query = q_centered;
    out.similarities = {proj ? project(q_centered, *proj).squaredNorm() : q_centered.squaredNorm()};
    out.weights = {1.0};
    return out;
  }
  if (database.empty()) throw Error(ErrorCode::EmptyDatabase, "query expansion needs a database");
  if (database.dim() != static_cast<std::size_t>(q_centered.size())) {
    throw Error(ErrorCode::DimMismatch, "database dim differs from query length");
  }

  // Similarity of every row to the query in the scoring space, using the
  // query-side form so rows stay raw.
  QuerySideOperator op;
  if (proj) {
    op = query_side_operator_centered(q_centered, mu_image, *proj);
  } else {
    op.w = q_centered;
    op.c = mu_image.dot(q_centered);
  }
  const std::size_t n = database.size();
  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) sims[i] = op.score(database.row(i));

  const std::size_t k = std::min(cfg.k_neighbors, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& ids = database.ids();
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return ids[a] < ids[b];
                    });

  out.similarities.reserve(k + 1);
  out.similarities.push_back(proj ? project(q_centered, *proj).squaredNorm() : q_centered.squaredNorm());
  for (std::size_t j = 0; j < k; ++j) {
    out.neighbors.push_back(ids[order[j]]);
    out.similarities.push_back(sims[order[j]]);
  }

  const double peak = *std::max_element(out.similarities.begin(), out.similarities.end());
  out.weights.resize(out.similarities.size());
  double total = 0.0;
  for (std::size_t j = 0; j < out.weights.size(); ++j) {
    out.weights[j] = std::exp(cfg.beta * (out.similarities[j] - peak));
    total += out.weights[j];
  }
  for (auto& w : out.weights) w /= total;

  out.query = out.weights[0] * q_centered;
  for (std::size_t j = 0; j < k; ++j) {
    out.query += out.weights[j + 1] * (database.row_vector(order[j]) - mu_image);
  }
  return out;
}

}  // namespace cirfuse
