#include <doctest.h>

#include "cirfuse/calibration.hpp"
#include "cirfuse/error.hpp"
#include "cirfuse/projection.hpp"
#include "test_support.hpp"

using namespace cirfuse;
using namespace cirfuse::testing;

namespace {

CorpusEmbeddings corpus_of(const std::vector<Vector>& rows, Polarity p, const std::string& prefix) {
  return CorpusEmbeddings::from_set(make_set(Modality::Text, rows, prefix), p);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("two-term corpus with alpha 0 gives a rank-one covariance") {
  const Vector e1 = Vector::Unit(2, 0);
  const auto pos = corpus_of({e1, -e1}, Polarity::Positive, "p");
  const Matrix c = build_contrastive_covariance(pos, {}, Vector::Zero(2), 0.0);
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  CHECK((c - expected).norm() < 1e-12);

  const auto op = build_projection(c, 5, 0.0);
  CHECK(op.k_requested == 5);
  CHECK(op.k_effective == 1);
  CHECK(std::abs(op.basis(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("negative corpus suppresses its direction") {
  const Vector e1 = Vector::Unit(2, 0), e2 = Vector::Unit(2, 1);
  const auto pos = corpus_of({e1, -e1, e2, -e2}, Polarity::Positive, "p");
  const auto neg = corpus_of({e2, -e2}, Polarity::Negative, "n");
  const Matrix c = build_contrastive_covariance(pos, neg, Vector::Zero(2), 0.5);
  // 0.5 * diag(0.5, 0.5) - 0.5 * diag(0, 1)
  CHECK(c(0, 0) == doctest::Approx(0.25));
  CHECK(c(1, 1) == doctest::Approx(-0.25));
  const auto op = build_projection(c, 2, 0.5);
  CHECK(op.k_effective == 1);
  CHECK(std::abs(op.basis(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("covariance argument checks") {
  const auto pos = corpus_of({Vector::Unit(3, 0)}, Polarity::Positive, "p");
  CHECK(code_of([&] { build_contrastive_covariance({}, {}, Vector::Zero(3), 0.2); }) ==
        ErrorCode::EmptyPositiveCorpus);
  CHECK(code_of([&] { build_contrastive_covariance(pos, {}, Vector::Zero(3), 1.5); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { build_contrastive_covariance(pos, {}, Vector::Zero(3), -0.1); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("negative definite covariance has no projection") {
  const Matrix c = -Matrix::Identity(3, 3);
  CHECK(code_of([&] { build_projection(c, 2, 1.0); }) == ErrorCode::NoPositiveEigenvalues);
  CHECK(code_of([&] { build_projection(Matrix::Identity(3, 3), 0, 0.0); }) == ErrorCode::InvalidK);
}

TEST_CASE("eigendecomposition of random symmetric matrices") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_symmetric(12, rng);
    const auto eig = eigendecompose_symmetric(a);
    for (Eigen::Index i = 0; i < 12; ++i) {
      const Vector v = eig.vectors.col(i);
      CHECK((a * v - eig.values[i] * v).norm() < 1e-9);
      CHECK(v.norm() == doctest::Approx(1.0));
      if (i > 0) CHECK(eig.values[i - 1] >= eig.values[i]);
      Eigen::Index first = 0;
      while (std::abs(v[first]) <= 1e-12) ++first;
      CHECK(v[first] > 0.0);
    }
    CHECK((eig.vectors.transpose() * eig.vectors - Matrix::Identity(12, 12)).norm() < 1e-9);
    CHECK(eig.values.sum() == doctest::Approx(a.trace()));
  }
}

TEST_CASE("asymmetric input is rejected") {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 1) = 0.5;
  CHECK(code_of([&] { eigendecompose_symmetric(a); }) == ErrorCode::NotSymmetric);
}

TEST_CASE("basis rows are orthonormal and k is clamped to positive eigenvalues") {
  std::mt19937_64 rng(37);
  const Matrix a = random_symmetric(10, rng);
  const auto eig = eigendecompose_symmetric(a);
  int positive = 0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) positive += eig.values[i] > 0.0 ? 1 : 0;
  const auto op = build_projection(a, 10, 0.3);
  CHECK(op.k_effective == positive);
  CHECK((op.basis * op.basis.transpose() - Matrix::Identity(positive, positive)).norm() < 1e-9);
  CHECK(op.eigenvalues.minCoeff() > 0.0);
}

TEST_CASE("alpha 0 matches the PCA subspace of the positive corpus") {
  std::mt19937_64 rng(41);
  const std::size_t d = 16;
  // Anisotropic corpus: most variance in the first four coordinates.
  std::vector<Vector> rows;
  for (int i = 0; i < 200; ++i) {
    Vector v = random_gaussian(d, rng);
    v.head(4) *= 5.0;
    rows.push_back(v.normalized());
  }
  const auto pos = corpus_of(rows, Polarity::Positive, "p");
  const Vector mu = compute_mean(pos.embeddings);
  const auto op = build_projection(build_contrastive_covariance(pos, {}, mu, 0.0), 4, 0.0);

  Matrix data(200, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < 200; ++i) data.row(i) = pos.embeddings.row_vector(static_cast<std::size_t>(i)).transpose();
  const Matrix oracle = pca_subspace_oracle(data, mu, 4);
  CHECK(principal_angle_sines(op.basis, oracle).maxCoeff() < 1e-6);
}

TEST_CASE("increasing alpha never increases k_effective") {
  std::mt19937_64 rng(43);
  std::vector<Vector> prow, nrow;
  for (int i = 0; i < 20; ++i) prow.push_back(random_unit(8, rng));
  for (int i = 0; i < 20; ++i) nrow.push_back(random_unit(8, rng));
  const auto pos = corpus_of(prow, Polarity::Positive, "p");
  const auto neg = corpus_of(nrow, Polarity::Negative, "n");
  const Vector mu = compute_mean(pos.embeddings);
  int prev = 1 << 30;
  for (double alpha : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95}) {
    int k = 0;
    try {
      k = build_projection(build_contrastive_covariance(pos, neg, mu, alpha), 8, alpha).k_effective;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoPositiveEigenvalues);
    }
    CHECK(k <= prev);
    prev = k;
  }
}

TEST_CASE("query-side operator equals projected centered similarity") {
  std::mt19937_64 rng(47);
  const std::size_t d = 12;
  const auto op = build_projection(random_symmetric(d, rng) + 3.0 * Matrix::Identity(12, 12), 5, 0.2);
  const Vector mu = 0.1 * random_unit(d, rng);
  const auto db = random_set(Modality::Image, 25, d, rng, "db");
  const Vector q = random_unit(d, rng);
  const auto qs = query_side_operator(q, mu, op);
  const Vector pq = project(q - mu, op);
  for (std::size_t i = 0; i < db.size(); ++i) {
    const double direct = project(db.row_vector(i) - mu, op).dot(pq);
    CHECK(qs.score(db.row(i)) == doctest::Approx(direct).epsilon(1e-9));
  }
  const auto qc = query_side_operator_centered(q - mu, mu, op);
  CHECK((qc.w - qs.w).norm() < 1e-12);
  CHECK(qc.c == doctest::Approx(qs.c));
}

TEST_CASE("projection save and load preserve the fingerprint") {
  std::mt19937_64 rng(53);
  TempDir dir;
  const auto op = build_projection(random_symmetric(6, rng) + 2.0 * Matrix::Identity(6, 6), 3, 0.2);
  save_projection(op, dir / "p.prj", Json{{"note", "x"}});
  const auto loaded = load_projection(dir / "p.prj");
  CHECK(loaded.fingerprint == op.fingerprint);
  CHECK(loaded.k_effective == op.k_effective);
  CHECK(loaded.k_requested == 3);
  CHECK(loaded.alpha == doctest::Approx(0.2));
  CHECK((loaded.basis - op.basis).cwiseAbs().maxCoeff() < 1e-6);

  auto bytes = read_bytes(dir / "p.prj");
  bytes[bytes.size() - 1] ^= 0x40;
  write_text(dir / "p.prj", bytes);
  CHECK(code_of([&] { load_projection(dir / "p.prj"); }) == ErrorCode::FingerprintMismatch);
}
