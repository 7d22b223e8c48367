#include "cirfuse/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "cirfuse/error.hpp"
#include "cirfuse/fingerprint.hpp"
#include "parallel.hpp"

namespace cirfuse {

namespace {

void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": lengths " + std::to_string(a.size()) +
                                            " and " + std::to_string(b.size()));
  }
}

}  // namespace

std::string_view fusion_mode_name(FusionMode mode) noexcept {
  switch (mode) {
    case FusionMode::BasicHarris: return "basic_harris";
    case FusionMode::TextOnly: return "text_only";
    case FusionMode::ImageOnly: return "image_only";
    case FusionMode::Sum: return "sum";
    case FusionMode::Product: return "product";
    case FusionMode::WeightedSum: return "weighted_sum";
    case FusionMode::WeightedProduct: return "weighted_product";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto mode : {FusionMode::BasicHarris, FusionMode::TextOnly, FusionMode::ImageOnly,
                    FusionMode::Sum, FusionMode::Product, FusionMode::WeightedSum,
                    FusionMode::WeightedProduct}) {
    if (fusion_mode_name(mode) == name) return mode;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown fusion mode '" + std::string(name) + "'");
}

void EngineConfig::validate() const {
  if (toggles.projection && !toggles.centering) {
    throw Error(ErrorCode::ConfigDependencyViolation, "projection requires centering");
  }
  if (toggles.harris && !toggles.min_norm) {
    throw Error(ErrorCode::ConfigDependencyViolation, "harris requires min_norm");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  if (k < 1) throw Error(ErrorCode::InvalidK, "k must be at least 1");
  if (!(beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
  if (n_phrases < 1) throw Error(ErrorCode::InvalidArgument, "n_phrases must be at least 1");
  if (threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be at least 1");
}

Json EngineConfig::to_json() const {
  return {{"toggles",
           {{"centering", toggles.centering},
            {"min_norm", toggles.min_norm},
            {"harris", toggles.harris},
            {"contextualization", toggles.contextualization},
            {"projection", toggles.projection},
            {"query_expansion", toggles.query_expansion}}},
          {"alpha", alpha},
          {"k", k},
          {"harris_lambda", harris_lambda},
          {"beta", beta},
          {"k_neighbors", k_neighbors},
          {"n_phrases", n_phrases},
          {"rng_seed", rng_seed}};
}

double score_image(const Vector& x_raw, const QuerySideOperator& op) {
  require_same_length(x_raw, op.w, "score_image");
  return x_raw.dot(op.w) - op.c;
}

double score_text(const Vector& x_raw, const Vector& mu_image, const Vector& q_text_centered) {
  require_same_length(x_raw, mu_image, "score_text");
  require_same_length(x_raw, q_text_centered, "score_text");
  return (x_raw - mu_image).dot(q_text_centered);
}

double min_normalize(double s, double s_min) {
  if (!(s_min < 0.0)) {
    throw Error(ErrorCode::NonNegativeMinStat, "min statistic must be negative, got " + std::to_string(s_min));
  }
  return (s - s_min) / std::abs(s_min);
}

double harris_fuse(double s_v_norm, double s_t_norm, double lambda) {
  const double sum = s_v_norm + s_t_norm;
  return s_v_norm * s_t_norm - lambda * sum * sum;
}

double baseline_fuse(double s_v, double s_t, const FusionConfig& cfg) {
  const bool weighted = cfg.mode == FusionMode::WeightedSum || cfg.mode == FusionMode::WeightedProduct;
  if (weighted && !(cfg.weight >= 0.0 && cfg.weight <= 1.0)) {
    throw Error(ErrorCode::InvalidWeight, "mixing weight must lie in [0, 1], got " + std::to_string(cfg.weight));
  }
  switch (cfg.mode) {
    case FusionMode::TextOnly: return s_t;
    case FusionMode::ImageOnly: return s_v;
    case FusionMode::Sum: return s_v + s_t;
    case FusionMode::Product: return s_v * s_t;
    case FusionMode::WeightedSum: return (1.0 - cfg.weight) * s_t + cfg.weight * s_v;
    case FusionMode::WeightedProduct:
      if (s_v < 0.0 || s_t < 0.0) {
        throw Error(ErrorCode::NegativeInputForGeometricBlend,
                    "weighted_product needs nonnegative (min-normalized) scores");
      }
      return std::pow(s_t, 1.0 - cfg.weight) * std::pow(s_v, cfg.weight);
    case FusionMode::BasicHarris: break;
  }
  throw Error(ErrorCode::InvalidArgument, "basic_harris is not a baseline rule");
}

double fuse(double s_v, double s_t, const FusionConfig& cfg) {
  if (cfg.mode == FusionMode::BasicHarris) return harris_fuse(s_v, s_t, cfg.harris_lambda);
  return baseline_fuse(s_v, s_t, cfg);
}

void sort_ranking(std::vector<ScoredItem>& items) {
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.fused != b.fused) return a.fused > b.fused;
    return a.id < b.id;
  });
}

Engine::Engine(EngineConfig config, std::optional<CalibrationStats> stats,
               std::optional<ProjectionOperator> projection)
    : config_(std::move(config)), stats_(std::move(stats)), projection_(std::move(projection)) {
  config_.validate();
  const auto& t = config_.toggles;
  if ((t.centering || t.min_norm) && !stats_) {
    throw Error(ErrorCode::InvalidArgument, "centering and min_norm need calibration stats");
  }
  if (t.projection && !projection_) {
    throw Error(ErrorCode::InvalidArgument, "projection is enabled but no projection operator was given");
  }
  if (stats_) {
    stats_->validate();
    dim_ = stats_->dim();
  }
  if (projection_) {
    if (dim_ != 0 && projection_->dim() != dim_) {
      throw Error(ErrorCode::DimMismatch, "projection dim " + std::to_string(projection_->dim()) +
                                              " differs from stats dim " + std::to_string(dim_));
    }
    dim_ = projection_->dim();
  }
  if (t.min_norm) {
    if (t.projection) {
      if (!stats_->projected || stats_->projection_fingerprint != projection_->fingerprint) {
        throw Error(ErrorCode::FingerprintMismatch,
                    "min statistics were not measured under projection " + projection_->fingerprint);
      }
    } else if (stats_->projected) {
      throw Error(ErrorCode::FingerprintMismatch,
                  "min statistics were measured in projected space but projection is disabled");
    }
  }
  if (t.centering) {
    mu_image_ = stats_->mu_image;
    mu_text_ = stats_->mu_text;
  } else if (dim_ != 0) {
    mu_image_ = Vector::Zero(static_cast<Eigen::Index>(dim_));
    mu_text_ = Vector::Zero(static_cast<Eigen::Index>(dim_));
  }
}

QueryBundle Engine::make_query(const Vector& q_image_raw, const Vector& q_text_centered,
                               const EmbeddingSet& database) const {
  if (q_image_raw.size() != q_text_centered.size()) {
    throw Error(ErrorCode::DimMismatch, "image and text queries differ in length");
  }
  if (dim_ != 0 && static_cast<std::size_t>(q_image_raw.size()) != dim_) {
    throw Error(ErrorCode::DimMismatch, "query length " + std::to_string(q_image_raw.size()) +
                                            " differs from engine dim " + std::to_string(dim_));
  }
  const Vector mu = mu_image_.size() ? mu_image_ : Vector::Zero(q_image_raw.size());
  QueryBundle q;
  q.image = q_image_raw - mu;
  q.text = q_text_centered;
  if (config_.toggles.query_expansion) {
    ExpansionConfig ecfg{config_.k_neighbors, config_.beta};
    auto result = expand_query(q.image, database, mu,
                               config_.toggles.projection ? &*projection_ : nullptr, ecfg);
    q.image = result.query;
    q.expansion = std::move(result);
  }
  return q;
}

std::vector<ScoredItem> Engine::rank(const QueryBundle& query, const EmbeddingSet& database,
                                     const FusionConfig& fusion) const {
  const auto d = query.image.size();
  if (query.text.size() != d || (!database.empty() && database.dim() != static_cast<std::size_t>(d))) {
    throw Error(ErrorCode::DimMismatch, "query and database dimensions disagree");
  }
  const Vector mu = mu_image_.size() ? mu_image_ : Vector::Zero(d);

  QuerySideOperator image_op;
  if (config_.toggles.projection) {
    image_op = query_side_operator_centered(query.image, mu, *projection_);
  } else {
    image_op.w = query.image;
    image_op.c = mu.dot(query.image);
  }
  const double text_c = mu.dot(query.text);

  FusionConfig effective = fusion;
  if (!config_.toggles.harris) effective.harris_lambda = 0.0;
  // Validates the mode/weight pair even for an empty database.
  if ((effective.mode == FusionMode::WeightedSum || effective.mode == FusionMode::WeightedProduct) &&
      !(effective.weight >= 0.0 && effective.weight <= 1.0)) {
    throw Error(ErrorCode::InvalidWeight, "mixing weight must lie in [0, 1]");
  }

  const bool norm = config_.toggles.min_norm;
  const double sv_min = norm ? stats_->s_v_min : 0.0;
  const double st_min = norm ? stats_->s_t_min : 0.0;

  std::vector<ScoredItem> items(database.size());
  detail::parallel_for(database.size(), config_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = database.row(i).cast<double>();
      ScoredItem& item = items[i];
      item.id = database.ids()[i];
      item.s_v = row.dot(image_op.w.transpose()) - image_op.c;
      item.s_t = row.dot(query.text.transpose()) - text_c;
      item.s_v_norm = norm ? min_normalize(item.s_v, sv_min) : item.s_v;
      item.s_t_norm = norm ? min_normalize(item.s_t, st_min) : item.s_t;
      item.fused = fuse(item.s_v_norm, item.s_t_norm, effective);
    }
  });
  sort_ranking(items);
  return items;
}

std::string Engine::fingerprint() const {
  Fnv1a h;
  h.update(config_.to_json().dump());
  if (stats_) h.update(stats_to_json(*stats_).dump());
  if (projection_) h.update(projection_->fingerprint);
  return h.hex();
}

Json scored_item_to_json(const ScoredItem& item) {
  return {{"id", item.id},         {"s_v", item.s_v},           {"s_t", item.s_t},
          {"s_v_norm", item.s_v_norm}, {"s_t_norm", item.s_t_norm}, {"fused", item.fused}};
}

void write_ranking_jsonl(std::span<const ScoredItem> items, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& item : items) out << scored_item_to_json(item).dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_ranking_csv(std::span<const ScoredItem> items, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "id,fused\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& item : items) out << item.id << ',' << item.fused << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace cirfuse
