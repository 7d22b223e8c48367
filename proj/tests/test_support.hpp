#pragma once

// Shared fixtures for the unit and acceptance suites: random generators,
// temp directories, a deterministic stub embedder, the planted-structure
// benchmark and brute-force oracles that never call library code paths
// they are used to check.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "cirfuse/embedder.hpp"
#include "cirfuse/embedding_store.hpp"
#include "cirfuse/evaluation.hpp"
#include "cirfuse/fingerprint.hpp"

namespace cirfuse::testing {

namespace fs = std::filesystem;

inline Vector random_gaussian(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = n(rng);
  return v;
}

inline Vector random_unit(std::size_t d, std::mt19937_64& rng) { return random_gaussian(d, rng).normalized(); }

inline Matrix random_symmetric(std::size_t d, std::mt19937_64& rng) {
  Matrix a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return 0.5 * (a + a.transpose());
}

inline std::string numbered(const std::string& prefix, std::size_t i, int width = 4) {
  std::ostringstream s;
  s << prefix << std::setw(width) << std::setfill('0') << i;
  return s.str();
}

/// Rows are rounded to float; ids default to prefix0000, prefix0001, ...
inline EmbeddingSet make_set(Modality m, const std::vector<Vector>& rows, const std::string& prefix = "x",
                             std::vector<std::string> ids = {}) {
  const std::size_t d = rows.empty() ? 8 : static_cast<std::size_t>(rows.front().size());
  if (ids.empty()) {
    for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back(numbered(prefix, i));
  }
  EmbeddingSet::RowMatrix mat(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) mat.row(static_cast<Eigen::Index>(i)) = rows[i].transpose().cast<float>();
  return EmbeddingSet(m, d, std::move(ids), std::move(mat));
}

inline EmbeddingSet random_set(Modality m, std::size_t n, std::size_t d, std::mt19937_64& rng,
                               const std::string& prefix = "x") {
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(random_unit(d, rng));
  return make_set(m, rows, prefix);
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("cirfuse_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Deterministic embedder: fixed vectors for registered strings, a
/// hash-seeded random unit vector otherwise. Counts calls.
class StubEmbedder final : public Embedder {
 public:
  explicit StubEmbedder(std::size_t dim) : dim_(dim) {}

  void set(const std::string& input, Vector v) { table_[input] = std::move(v); }

  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed_text(std::span<const std::string> inputs) override {
    ++calls;
    std::vector<Vector> out;
    for (const auto& s : inputs) out.push_back(vector_for("t:" + s, s));
    return out;
  }
  std::vector<Vector> embed_image(std::span<const std::string> payloads) override {
    ++calls;
    std::vector<Vector> out;
    for (const auto& s : payloads) out.push_back(vector_for("i:" + s, s));
    return out;
  }
  std::string describe() const override { return "stub"; }

  int calls = 0;

 private:
  Vector vector_for(const std::string& key, const std::string& raw) const {
    if (auto it = table_.find(raw); it != table_.end()) return it->second;
    Fnv1a h;
    h.update(key);
    std::mt19937_64 rng(h.digest());
    return random_unit(dim_, rng);
  }

  std::size_t dim_;
  std::map<std::string, Vector> table_;
};

// --------------------------------------------------------------- oracles

/// AP straight from the definition: for each positive, count positives at
/// or above its rank by rescanning the prefix.
inline double brute_force_ap(const std::vector<std::string>& ranked, const std::vector<std::string>& positives) {
  double total = 0.0;
  for (const auto& p : positives) {
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r] != p) continue;
      std::size_t hits = 0;
      for (std::size_t j = 0; j <= r; ++j) {
        for (const auto& q : positives) hits += ranked[j] == q ? 1 : 0;
      }
      total += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return total / static_cast<double>(positives.size());
}

/// Top-k principal subspace (rows orthonormal) of the rows of `data`
/// centered with `mu`, from the SVD of the data matrix.
inline Matrix pca_subspace_oracle(const Matrix& data, const Vector& mu, int k) {
  Matrix centered = data;
  centered.rowwise() -= mu.transpose();
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  return svd.matrixV().leftCols(k).transpose();
}

/// Sines of the principal angles between the row spaces of two matrices
/// with orthonormal rows, largest first.
inline Vector principal_angle_sines(const Matrix& a, const Matrix& b) {
  const Matrix residual = a - (a * b.transpose()) * b;  // a's rows minus their projection onto span(b)
  Eigen::JacobiSVD<Matrix> svd(residual);
  return svd.singularValues();
}

// ------------------------------------------------------- planted benchmark

/// One instance, one composed query. Ten composed positives sit above the
/// margin in both modalities; fifty visual-hard and fifty textual-hard
/// negatives exceed it in exactly one; the rest are easy negatives.
struct PlantedBenchmark {
  EmbeddingSet images;     // database rows plus the query image
  EmbeddingSet texts;      // the text query
  EmbeddingSet calib_texts;
  DatasetManifest manifest;
  Vector mu_image;
  Vector mu_text;
  std::vector<std::string> database_ids;
  std::vector<std::string> positive_ids;
  double margin = 0.2;
};

inline PlantedBenchmark make_planted(std::uint64_t seed, std::size_t d = 64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  // e0: image direction, e1: text direction, e2/e3: mean offsets, rest: noise.
  const auto e = [d](Eigen::Index i) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(d));
    v[i] = 1.0;
    return v;
  };
  const double c_img = 0.3, c_txt = 0.2;

  PlantedBenchmark out;
  out.mu_image = c_img * e(2);
  out.mu_text = c_txt * e(3);

  const auto noise_dir = [&]() {
    Vector n = random_gaussian(d, rng);
    n.head(4).setZero();
    return n.normalized();
  };
  const auto row = [&](double a, double b) {
    const double r2 = 1.0 - a * a - b * b - c_img * c_img;
    return Vector(a * e(0) + b * e(1) + c_img * e(2) + std::sqrt(r2) * noise_dir());
  };

  std::vector<Vector> rows;
  std::vector<std::string> ids;
  const auto add = [&](const std::string& prefix, std::size_t count, double alo, double ahi, double blo,
                       double bhi) {
    for (std::size_t i = 0; i < count; ++i) {
      rows.push_back(row(range(alo, ahi), range(blo, bhi)));
      ids.push_back(numbered(prefix, i, 3));
    }
  };
  add("pos_", 10, 0.45, 0.55, 0.45, 0.55);
  add("vis_", 50, 0.75, 0.85, -0.10, 0.10);
  add("txt_", 50, -0.10, 0.10, 0.75, 0.85);
  add("easy_", 140, -0.15, 0.15, -0.15, 0.15);
  out.database_ids = ids;
  for (std::size_t i = 0; i < 10; ++i) out.positive_ids.push_back(ids[i]);

  rows.push_back(std::sqrt(1.0 - c_img * c_img) * e(0) + c_img * e(2));
  ids.push_back("query_image");
  out.images = make_set(Modality::Image, rows, "", ids);

  std::vector<Vector> text_rows{std::sqrt(1.0 - c_txt * c_txt) * e(1) + c_txt * e(3)};
  std::vector<std::string> text_ids{"query_text"};
  out.texts = make_set(Modality::Text, text_rows, "", text_ids);

  std::vector<Vector> calib;
  for (int i = 0; i < 64; ++i) calib.push_back(random_unit(d, rng));
  out.calib_texts = make_set(Modality::Text, calib, "calib_");

  ManifestQuery q{"q0", "query_image", "planted", "query_text", out.positive_ids};
  out.manifest.instances.push_back({"planted", out.database_ids, {q}});
  return out;
}

}  // namespace cirfuse::testing
