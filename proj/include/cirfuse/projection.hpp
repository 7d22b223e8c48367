#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cirfuse/embedding_store.hpp"
#include "cirfuse/json_io.hpp"

namespace cirfuse {

enum class Polarity { Positive, Negative };

/// Embedded text corpus. Positive corpora hold object terms, negative
/// corpora hold style/context terms whose variance should be suppressed.
struct CorpusEmbeddings {
  std::vector<std::string> terms;
  EmbeddingSet embeddings;
  Polarity polarity = Polarity::Positive;

  CorpusEmbeddings() = default;
  CorpusEmbeddings(std::vector<std::string> terms, EmbeddingSet embeddings, Polarity polarity);

  /// Terms are taken from the set's ids.
  static CorpusEmbeddings from_set(EmbeddingSet embeddings, Polarity polarity);

  std::size_t size() const noexcept { return terms.size(); }
  bool empty() const noexcept { return terms.empty(); }
};

/// (1 - alpha) * C+ - alpha * C-, where C± is the mean outer product of the
/// corpus embeddings centered with `mu_text`. An empty negative corpus
/// contributes a zero matrix. The result is exactly symmetric.
Matrix build_contrastive_covariance(const CorpusEmbeddings& positive,
                                    const CorpusEmbeddings& negative, const Vector& mu_text,
                                    double alpha);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]; unit norm, first nonzero entry positive
};

/// Eigenpairs of a symmetric matrix in canonical order: eigenvalue
/// descending, exact ties ordered lexicographically by eigenvector.
SymmetricEigen eigendecompose_symmetric(const Matrix& c);

/// Top eigenvectors of a contrastive covariance, restricted to strictly
/// positive eigenvalues.
struct ProjectionOperator {
  Matrix basis;        // k_effective x d, orthonormal rows
  Vector eigenvalues;  // k_effective, positive, descending
  double alpha = 0.0;
  int k_requested = 0;
  int k_effective = 0;
  std::string fingerprint;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(basis.cols()); }
};

/// Fingerprint over the float32-rounded content, so an operator and its
/// saved copy carry the same value.
std::string projection_fingerprint(const Matrix& basis, const Vector& eigenvalues, double alpha,
                                   int k_requested);

/// Keeps min(k, #positive eigenvalues) leading eigenvectors of `c`.
ProjectionOperator build_projection(const Matrix& c, int k, double alpha);

/// Reduced coordinates basis * v of an already centered vector.
Vector project(const Vector& centered, const ProjectionOperator& op);

/// Query-side form of projected similarity: for a raw database row x,
/// <x, w> - c equals <P^T (x - mu), P^T (q - mu)>, so the stored rows are
/// never centered or projected.
struct QuerySideOperator {
  Vector w;
  double c = 0.0;

  template <typename Row>
  double score(const Row& raw_row) const {
    return raw_row.template cast<double>().dot(w.transpose()) - c;
  }
};

QuerySideOperator query_side_operator(const Vector& q_raw, const Vector& mu_image,
                                      const ProjectionOperator& op);

/// Same identity for an already centered (possibly expanded) query.
QuerySideOperator query_side_operator_centered(const Vector& q_centered, const Vector& mu_image,
                                               const ProjectionOperator& op);

void save_projection(const ProjectionOperator& op, const std::filesystem::path& path,
                     const Json& provenance = nullptr);
ProjectionOperator load_projection(const std::filesystem::path& path);

}  // namespace cirfuse
