#include "cirfuse/calibration.hpp"

#include <limits>

#include "cirfuse/error.hpp"

namespace cirfuse {

namespace {

Matrix centered_rows(const EmbeddingSet& set, const Vector& mu) {
  Matrix m = set.matrix().cast<double>();
  m.rowwise() -= mu.transpose();
  return m;
}

Vector json_vector(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void CalibrationStats::validate() const {
  if (mu_image.size() != mu_text.size()) {
    throw Error(ErrorCode::DimMismatch, "image and text means differ in length");
  }
  if (!(s_v_min < 0.0)) {
    throw Error(ErrorCode::NonNegativeMin, "s_v_min must be negative, got " + std::to_string(s_v_min));
  }
  if (!(s_t_min < 0.0)) {
    throw Error(ErrorCode::NonNegativeMin, "s_t_min must be negative, got " + std::to_string(s_t_min));
  }
}

Vector compute_mean(const EmbeddingSet& set) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "cannot take the mean of an empty set");
  return set.matrix().cast<double>().colwise().mean().transpose();
}

Vector center(const Vector& v, const Vector& mu) {
  if (v.size() != mu.size()) {
    throw Error(ErrorCode::DimMismatch, "cannot center a length-" + std::to_string(v.size()) +
                                            " vector with a length-" + std::to_string(mu.size()) +
                                            " mean");
  }
  return v - mu;
}

MinStats compute_min_stats(const EmbeddingSet& images, const EmbeddingSet& texts,
                           const Vector& mu_image, const Vector& mu_text,
                           const ProjectionOperator* proj) {
  if (images.size() < 2) {
    throw Error(ErrorCode::EmptySet, "image calibration set needs at least two rows");
  }
  if (texts.empty()) throw Error(ErrorCode::EmptySet, "text calibration set is empty");
  const auto d = static_cast<Eigen::Index>(images.dim());
  if (texts.dim() != images.dim() || mu_image.size() != d || mu_text.size() != d) {
    throw Error(ErrorCode::DimMismatch, "calibration inputs disagree on dimension");
  }
  if (proj && static_cast<Eigen::Index>(proj->dim()) != d) {
    throw Error(ErrorCode::DimMismatch, "projection was built for dimension " +
                                            std::to_string(proj->dim()));
  }

  const Matrix x = centered_rows(images, mu_image);
  const Matrix t = centered_rows(texts, mu_text);

  const Matrix xv = proj ? Matrix(x * proj->basis.transpose()) : x;
  const Matrix gram = xv * xv.transpose();
  double s_v = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      if (i != j && gram(i, j) < s_v) s_v = gram(i, j);
    }
  }
  const double s_t = (t * x.transpose()).minCoeff();

  if (!(s_v < 0.0) || !(s_t < 0.0)) {
    throw Error(ErrorCode::NonNegativeMin,
                "calibration minima must be negative (s_v_min=" + std::to_string(s_v) +
                    ", s_t_min=" + std::to_string(s_t) + "); calibration set is not diverse enough");
  }
  return {s_v, s_t};
}

Json stats_to_json(const CalibrationStats& stats) {
  const auto as_list = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  Json j = {{"dim", stats.dim()},
            {"mu_image", as_list(stats.mu_image)},
            {"mu_text", as_list(stats.mu_text)},
            {"s_v_min", stats.s_v_min},
            {"s_t_min", stats.s_t_min},
            {"projected", stats.projected}};
  j["projection_fingerprint"] =
      stats.projection_fingerprint ? Json(*stats.projection_fingerprint) : Json(nullptr);
  return j;
}

CalibrationStats stats_from_json(const Json& doc) {
  CalibrationStats stats;
  try {
    stats.mu_image = json_vector(doc.at("mu_image"));
    stats.mu_text = json_vector(doc.at("mu_text"));
    stats.s_v_min = doc.at("s_v_min").get<double>();
    stats.s_t_min = doc.at("s_t_min").get<double>();
    stats.projected = doc.at("projected").get<bool>();
    const auto& fp = doc.at("projection_fingerprint");
    if (!fp.is_null()) stats.projection_fingerprint = fp.get<std::string>();
    if (doc.at("dim").get<std::size_t>() != stats.dim()) {
      throw Error(ErrorCode::DimMismatch, "stats dim field disagrees with mean length");
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("calibration stats: ") + e.what());
  }
  if (stats.projected && !stats.projection_fingerprint) {
    throw Error(ErrorCode::ParseError, "projected stats must carry a projection fingerprint");
  }
  stats.validate();
  return stats;
}

void save_stats(const CalibrationStats& stats, const std::filesystem::path& path,
                const Json& provenance) {
  Json doc = stats_to_json(stats);
  if (!provenance.is_null()) doc["provenance"] = provenance;
  write_json_file(doc, path);
}

CalibrationStats load_stats(const std::filesystem::path& path) {
  return stats_from_json(read_json_file(path));
}

}  // namespace cirfuse
