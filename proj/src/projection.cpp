#include "cirfuse/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "cirfuse/error.hpp"
#include "cirfuse/fingerprint.hpp"
#include "cirfuse/json_io.hpp"

namespace cirfuse {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'J', '1'};
constexpr double kSymmetryTolerance = 1e-8;
constexpr double kSignTolerance = 1e-12;

void check_dim(const Vector& v, std::size_t dim, const char* what) {
  if (static_cast<std::size_t>(v.size()) != dim) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + " has length " +
                                            std::to_string(v.size()) + ", expected " +
                                            std::to_string(dim));
  }
}

// Mean outer product of rows centered with mu.
Matrix centered_second_moment(const EmbeddingSet& set, const Vector& mu) {
  Matrix centered = set.matrix().cast<double>();
  centered.rowwise() -= mu.transpose();
  Matrix m = centered.transpose() * centered;
  m /= static_cast<double>(set.size());
  return m;
}

void sign_normalize(Eigen::Ref<Vector> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > kSignTolerance) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

std::vector<float> to_f32(const double* data, std::size_t n) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(data[i]);
  return out;
}

// Row-major float32 copy of the basis, as stored on disk.
std::vector<float> basis_f32(const Matrix& basis) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = basis;
  return to_f32(rm.data(), static_cast<std::size_t>(rm.size()));
}

}  // namespace

CorpusEmbeddings::CorpusEmbeddings(std::vector<std::string> t, EmbeddingSet e, Polarity p)
    : terms(std::move(t)), embeddings(std::move(e)), polarity(p) {
  if (terms.size() != embeddings.size()) {
    throw Error(ErrorCode::DimMismatch, "corpus has " + std::to_string(terms.size()) +
                                            " terms but " + std::to_string(embeddings.size()) +
                                            " embeddings");
  }
}

CorpusEmbeddings CorpusEmbeddings::from_set(EmbeddingSet embeddings, Polarity polarity) {
  auto terms = embeddings.ids();
  return CorpusEmbeddings(std::move(terms), std::move(embeddings), polarity);
}

Matrix build_contrastive_covariance(const CorpusEmbeddings& positive,
                                    const CorpusEmbeddings& negative, const Vector& mu_text,
                                    double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (positive.empty()) throw Error(ErrorCode::EmptyPositiveCorpus, "positive corpus is empty");
  const std::size_t d = positive.embeddings.dim();
  check_dim(mu_text, d, "text mean");
  if (!negative.empty() && negative.embeddings.dim() != d) {
    throw Error(ErrorCode::DimMismatch, "negative corpus dim " +
                                            std::to_string(negative.embeddings.dim()) +
                                            " differs from positive corpus dim " + std::to_string(d));
  }

  Matrix c = (1.0 - alpha) * centered_second_moment(positive.embeddings, mu_text);
  if (!negative.empty()) c -= alpha * centered_second_moment(negative.embeddings, mu_text);
  const Matrix sym = 0.5 * (c + c.transpose());
  return sym;
}

SymmetricEigen eigendecompose_symmetric(const Matrix& c) {
  if (c.rows() != c.cols()) throw Error(ErrorCode::NotSymmetric, "matrix is not square");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  const double asym = c.size() == 0 ? 0.0 : (c - c.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    throw Error(ErrorCode::NotSymmetric, "max asymmetry " + std::to_string(asym));
  }
  const Matrix sym = 0.5 * (c + c.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NoConvergence, "symmetric eigensolver did not converge");
  }

  const Eigen::Index d = sym.rows();
  Matrix vecs = solver.eigenvectors();
  for (Eigen::Index i = 0; i < d; ++i) sign_normalize(vecs.col(i));
  const Vector& vals = solver.eigenvalues();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (vals[a] != vals[b]) return vals[a] > vals[b];
    const auto va = vecs.col(a);
    const auto vb = vecs.col(b);
    return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
  });

  SymmetricEigen out;
  out.values.resize(d);
  out.vectors.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.values[i] = vals[order[static_cast<std::size_t>(i)]];
    out.vectors.col(i) = vecs.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::string projection_fingerprint(const Matrix& basis, const Vector& eigenvalues, double alpha,
                                   int k_requested) {
  Fnv1a h;
  h.update("PRJ1");
  h.update_value(static_cast<std::uint32_t>(basis.cols()));
  h.update_value(static_cast<std::uint32_t>(basis.rows()));
  h.update_value(alpha);
  h.update_value(static_cast<std::int32_t>(k_requested));
  const auto vals = to_f32(eigenvalues.data(), static_cast<std::size_t>(eigenvalues.size()));
  h.update(std::as_bytes(std::span<const float>(vals)));
  const auto rows = basis_f32(basis);
  h.update(std::as_bytes(std::span<const float>(rows)));
  return h.hex();
}

ProjectionOperator build_projection(const Matrix& c, int k, double alpha) {
  if (k < 1) throw Error(ErrorCode::InvalidK, "k must be at least 1");
  const SymmetricEigen eig = eigendecompose_symmetric(c);

  Eigen::Index positive = 0;
  while (positive < eig.values.size() && eig.values[positive] > 0.0) ++positive;
  if (positive == 0) {
    throw Error(ErrorCode::NoPositiveEigenvalues, "contrastive covariance has no positive eigenvalue");
  }
  const Eigen::Index keep = std::min<Eigen::Index>(k, positive);

  ProjectionOperator op;
  op.basis = eig.vectors.leftCols(keep).transpose();
  op.eigenvalues = eig.values.head(keep);
  op.alpha = alpha;
  op.k_requested = k;
  op.k_effective = static_cast<int>(keep);
  op.fingerprint = projection_fingerprint(op.basis, op.eigenvalues, alpha, k);
  return op;
}

Vector project(const Vector& centered, const ProjectionOperator& op) {
  check_dim(centered, op.dim(), "vector");
  return op.basis * centered;
}

QuerySideOperator query_side_operator_centered(const Vector& q_centered, const Vector& mu_image,
                                               const ProjectionOperator& op) {
  check_dim(q_centered, op.dim(), "query");
  check_dim(mu_image, op.dim(), "image mean");
  QuerySideOperator out;
  out.w = op.basis.transpose() * (op.basis * q_centered);
  out.c = mu_image.dot(out.w);
  return out;
}

QuerySideOperator query_side_operator(const Vector& q_raw, const Vector& mu_image,
                                      const ProjectionOperator& op) {
  check_dim(q_raw, op.dim(), "query");
  check_dim(mu_image, op.dim(), "image mean");
  return query_side_operator_centered(q_raw - mu_image, mu_image, op);
}

void save_projection(const ProjectionOperator& op, const std::filesystem::path& path,
                     const Json& provenance) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(kMagic, 4);
    const auto d = static_cast<std::uint32_t>(op.dim());
    const auto k = static_cast<std::uint32_t>(op.k_effective);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    out.write(reinterpret_cast<const char*>(&k), sizeof k);
    const auto vals = to_f32(op.eigenvalues.data(), static_cast<std::size_t>(op.eigenvalues.size()));
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(float)));
    const auto rows = basis_f32(op.basis);
    out.write(reinterpret_cast<const char*>(rows.data()),
              static_cast<std::streamsize>(rows.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
  Json meta = {{"alpha", op.alpha},
               {"k_requested", op.k_requested},
               {"k_effective", op.k_effective},
               {"fingerprint", op.fingerprint}};
  if (!provenance.is_null()) meta["provenance"] = provenance;
  write_json_file(meta, sidecar_path(path));
}

ProjectionOperator load_projection(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, path.string() + " is not a PRJ1 file");
  }
  std::uint32_t d = 0, k = 0;
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  in.read(reinterpret_cast<char*>(&k), sizeof k);
  if (!in) throw Error(ErrorCode::IoError, "truncated header in " + path.string());

  std::vector<float> vals(k);
  std::vector<float> rows(static_cast<std::size_t>(k) * d);
  in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(rows.data()), static_cast<std::streamsize>(rows.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::IoError, "truncated payload in " + path.string());

  const Json meta = read_json_file(sidecar_path(path));
  ProjectionOperator op;
  try {
    op.alpha = meta.at("alpha").get<double>();
    op.k_requested = meta.at("k_requested").get<int>();
    op.k_effective = meta.at("k_effective").get<int>();
    op.fingerprint = meta.at("fingerprint").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, sidecar_path(path).string() + ": " + e.what());
  }
  if (op.k_effective != static_cast<int>(k)) {
    throw Error(ErrorCode::DimMismatch, "sidecar k_effective disagrees with header");
  }
  op.eigenvalues = Eigen::Map<const Eigen::VectorXf>(vals.data(), k).cast<double>();
  op.basis = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                 rows.data(), k, d)
                 .cast<double>();
  const auto recomputed = projection_fingerprint(op.basis, op.eigenvalues, op.alpha, op.k_requested);
  if (recomputed != op.fingerprint) {
    throw Error(ErrorCode::FingerprintMismatch,
                "projection content hash " + recomputed + " does not match sidecar " + op.fingerprint);
  }
  return op;
}

}  // namespace cirfuse
