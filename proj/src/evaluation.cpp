#include "cirfuse/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "cirfuse/error.hpp"
#include "cirfuse/fingerprint.hpp"

namespace cirfuse {

// ---------------------------------------------------------------- metrics

double average_precision(std::span<const std::string> ranked_ids, const IdSet& positives) {
  if (positives.empty()) throw Error(ErrorCode::NoPositives, "average precision needs at least one positive");
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < ranked_ids.size(); ++r) {
    if (positives.contains(ranked_ids[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(positives.size());
}

double mean_average_precision(std::span<const double> aps) {
  if (aps.empty()) throw Error(ErrorCode::EmptyInput, "mAP of an empty list");
  return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

double macro_map(const std::map<std::string, double>& per_instance) {
  if (per_instance.empty()) throw Error(ErrorCode::EmptyInput, "macro-mAP over zero instances");
  double sum = 0.0;
  for (const auto& [_, m] : per_instance) sum += m;
  return sum / static_cast<double>(per_instance.size());
}

double recall_at_k(std::span<const std::string> ranked_ids, const IdSet& positives, std::size_t k,
                   RecallConvention convention) {
  if (k < 1) throw Error(ErrorCode::InvalidK, "recall cutoff must be at least 1");
  if (positives.empty()) throw Error(ErrorCode::NoPositives, "recall needs at least one positive");
  const auto top = std::min(k, ranked_ids.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < top; ++r) hits += positives.contains(ranked_ids[r]) ? 1 : 0;
  if (convention == RecallConvention::HitRate) return hits > 0 ? 1.0 : 0.0;
  return static_cast<double>(hits) / static_cast<double>(std::min(positives.size(), k));
}

double map_at_k(std::span<const std::string> ranked_ids, const IdSet& positives, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidK, "mAP cutoff must be at least 1");
  if (positives.empty()) throw Error(ErrorCode::NoPositives, "mAP@k needs at least one positive");
  const auto top = std::min(k, ranked_ids.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < top; ++r) {
    if (positives.contains(ranked_ids[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(positives.size(), k));
}

// --------------------------------------------------------------- manifest

void DatasetManifest::validate() const {
  const auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::ManifestInvariantViolation, msg);
  };
  std::set<std::string> instance_ids;
  std::set<std::string> query_ids;
  for (const auto& inst : instances) {
    if (!instance_ids.insert(inst.instance_id).second) fail("duplicate instance id '" + inst.instance_id + "'");
    const IdSet db(inst.database.begin(), inst.database.end());
    if (db.size() != inst.database.size()) fail("instance '" + inst.instance_id + "' lists a database id twice");
    for (const auto& q : inst.queries) {
      if (!query_ids.insert(q.query_id).second) fail("duplicate query id '" + q.query_id + "'");
      if (db.contains(q.image_query_id)) {
        fail("query '" + q.query_id + "': image query '" + q.image_query_id + "' is in its own database");
      }
      if (q.positives.empty()) fail("query '" + q.query_id + "' has no positives");
      for (const auto& p : q.positives) {
        if (!db.contains(p)) fail("query '" + q.query_id + "': positive '" + p + "' is not in the database");
      }
    }
  }
}

DatasetManifest manifest_from_json(const Json& doc) {
  DatasetManifest m;
  try {
    const auto conv = doc.value("recall_convention", std::string("fraction"));
    if (conv == "hit_rate") {
      m.recall_convention = RecallConvention::HitRate;
    } else if (conv != "fraction") {
      throw Error(ErrorCode::ParseError, "unknown recall_convention '" + conv + "'");
    }
    for (const auto& ji : doc.at("instances")) {
      ManifestInstance inst;
      inst.instance_id = ji.at("instance_id").get<std::string>();
      inst.database = ji.at("database").get<std::vector<std::string>>();
      for (const auto& jq : ji.at("queries")) {
        ManifestQuery q;
        q.query_id = jq.at("query_id").get<std::string>();
        q.image_query_id = jq.at("image_query_id").get<std::string>();
        q.text_query = jq.value("text_query", std::string{});
        if (jq.contains("text_embedding_id") && !jq.at("text_embedding_id").is_null()) {
          q.text_embedding_id = jq.at("text_embedding_id").get<std::string>();
        }
        q.positives = jq.at("positives").get<std::vector<std::string>>();
        inst.queries.push_back(std::move(q));
      }
      m.instances.push_back(std::move(inst));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

Json manifest_to_json(const DatasetManifest& manifest) {
  Json instances = Json::array();
  for (const auto& inst : manifest.instances) {
    Json queries = Json::array();
    for (const auto& q : inst.queries) {
      Json jq = {{"query_id", q.query_id},
                 {"image_query_id", q.image_query_id},
                 {"text_query", q.text_query},
                 {"positives", q.positives}};
      if (q.text_embedding_id) jq["text_embedding_id"] = *q.text_embedding_id;
      queries.push_back(std::move(jq));
    }
    instances.push_back(
        {{"instance_id", inst.instance_id}, {"database", inst.database}, {"queries", std::move(queries)}});
  }
  return {{"recall_convention",
           manifest.recall_convention == RecallConvention::HitRate ? "hit_rate" : "fraction"},
          {"instances", std::move(instances)}};
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path));
}

// ------------------------------------------------------------- benchmark

TextQueryResolver::TextQueryResolver(const Engine& engine, const QuerySources& sources)
    : engine_(engine), sources_(sources) {}

Vector TextQueryResolver::resolve(const ManifestQuery& query) {
  const auto d = static_cast<Eigen::Index>(sources_.images->dim());
  const Vector mu = engine_.mu_text().size() ? engine_.mu_text() : Vector::Zero(d);

  if (query.text_embedding_id) {
    if (!sources_.texts || !sources_.texts->find(*query.text_embedding_id)) {
      throw Error(ErrorCode::MissingEmbedding, "query '" + query.query_id + "': text embedding '" +
                                                   *query.text_embedding_id + "' not found");
    }
    return passthrough_text(sources_.texts->lookup(*query.text_embedding_id), mu);
  }
  if (!sources_.embedder) {
    throw Error(ErrorCode::EmbedderUnavailable,
                "query '" + query.query_id + "' has no text embedding id and no embedder is configured");
  }
  if (engine_.config().toggles.contextualization) {
    ContextualizationConfig cfg{engine_.config().n_phrases, engine_.config().rng_seed};
    return cache_.get_or_compute(query.text_query, sources_.context_terms, *sources_.embedder, mu, cfg);
  }
  const std::vector<std::string> one{query.text_query};
  return passthrough_text(sources_.embedder->embed_text(one).front(), mu);
}

namespace {

struct QueryOutcome {
  double ap = 0.0;
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> map_k;
};

template <typename Map>
double mean_of(const Map& values) {
  double sum = 0.0;
  for (const auto& [_, v] : values) sum += v;
  return sum / static_cast<double>(values.size());
}

Json fusion_to_json(const FusionConfig& f) {
  return {{"mode", fusion_mode_name(f.mode)}, {"harris_lambda", f.harris_lambda}, {"weight", f.weight}};
}

}  // namespace

EvaluationReport run_benchmark(const DatasetManifest& manifest, const Engine& engine,
                               const QuerySources& sources, const FusionConfig& fusion,
                               std::span<const std::size_t> cutoffs) {
  if (!sources.images) throw Error(ErrorCode::InvalidArgument, "benchmark needs an image embedding set");
  manifest.validate();
  if (manifest.instances.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no instances");
  for (auto k : cutoffs) {
    if (k < 1) throw Error(ErrorCode::InvalidK, "cutoffs must be at least 1");
  }

  TextQueryResolver resolver(engine, sources);
  std::map<std::string, QueryOutcome> outcomes;
  EvaluationReport report;

  for (const auto& inst : manifest.instances) {
    for (const auto& id : inst.database) {
      if (!sources.images->find(id)) {
        throw Error(ErrorCode::MissingEmbedding,
                    "instance '" + inst.instance_id + "': database image '" + id + "' not found");
      }
    }
    const EmbeddingSet database = sources.images->subset(inst.database);

    std::vector<double> instance_aps;
    for (const auto& q : inst.queries) {
      if (!sources.images->find(q.image_query_id)) {
        throw Error(ErrorCode::MissingEmbedding,
                    "query '" + q.query_id + "': image '" + q.image_query_id + "' not found");
      }
      const Vector q_image = sources.images->lookup(q.image_query_id);
      const Vector q_text = resolver.resolve(q);
      const auto bundle = engine.make_query(q_image, q_text, database);
      const auto ranking = engine.rank(bundle, database, fusion);

      std::vector<std::string> ranked;
      ranked.reserve(ranking.size());
      for (const auto& item : ranking) ranked.push_back(item.id);
      const IdSet positives(q.positives.begin(), q.positives.end());

      QueryOutcome o;
      o.ap = average_precision(ranked, positives);
      for (auto k : cutoffs) {
        o.recall[k] = recall_at_k(ranked, positives, k, manifest.recall_convention);
        o.map_k[k] = map_at_k(ranked, positives, k);
      }
      instance_aps.push_back(o.ap);
      outcomes.emplace(q.query_id, std::move(o));
    }
    if (!instance_aps.empty()) {
      report.per_instance_map[inst.instance_id] = mean_average_precision(instance_aps);
    }
  }
  if (outcomes.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no queries");

  // Aggregates iterate the id-sorted maps, so the summation order (and the
  // resulting bits) do not depend on manifest order.
  for (const auto& [id, o] : outcomes) report.per_query_ap[id] = o.ap;
  report.macro_map = macro_map(report.per_instance_map);
  report.micro_map = mean_of(report.per_query_ap);
  for (auto k : cutoffs) {
    double r = 0.0, m = 0.0;
    for (const auto& [_, o] : outcomes) {
      r += o.recall.at(k);
      m += o.map_k.at(k);
    }
    report.recall_at[k] = r / static_cast<double>(outcomes.size());
    report.map_at[k] = m / static_cast<double>(outcomes.size());
  }
  report.config_echo = {{"engine", engine.config().to_json()},
                        {"engine_fingerprint", engine.fingerprint()},
                        {"fusion", fusion_to_json(fusion)},
                        {"manifest_fingerprint", content_hash(manifest_to_json(manifest).dump())}};
  return report;
}

Json EvaluationReport::to_json() const {
  Json recall = Json::object();
  for (const auto& [k, v] : recall_at) recall[std::to_string(k)] = v;
  Json map_k = Json::object();
  for (const auto& [k, v] : map_at) map_k[std::to_string(k)] = v;
  return {{"per_query_ap", per_query_ap},
          {"per_instance_map", per_instance_map},
          {"macro_map", macro_map},
          {"micro_map", micro_map},
          {"recall_at", recall},
          {"map_at", map_k},
          {"config_echo", config_echo}};
}

SweepResult modality_sweep(const DatasetManifest& manifest, const Engine& engine,
                           const QuerySources& sources, FusionMode mode, std::size_t steps) {
  if (mode != FusionMode::WeightedSum && mode != FusionMode::WeightedProduct) {
    throw Error(ErrorCode::InvalidArgument, "sweep mode must be weighted_sum or weighted_product");
  }
  if (steps < 2) throw Error(ErrorCode::InvalidArgument, "sweep needs at least two steps");

  SweepResult out;
  for (std::size_t i = 0; i < steps; ++i) {
    // Exact endpoints: i = 0 gives 0.0 and i = steps - 1 gives 1.0.
    const double w = static_cast<double>(i) / static_cast<double>(steps - 1);
    FusionConfig fusion{mode, engine.config().harris_lambda, w};
    const auto report = run_benchmark(manifest, engine, sources, fusion, {});
    out.curve.push_back({w, report.macro_map});
  }
  const auto peak = std::max_element(out.curve.begin(), out.curve.end(),
                                     [](const SweepPoint& a, const SweepPoint& b) { return a.map < b.map; });
  out.peak_weight = peak->weight;
  out.composition_gain = peak->map - std::max(out.curve.front().map, out.curve.back().map);
  return out;
}

void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "w,map\n";
  char buf[64];
  for (const auto& p : sweep.curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.weight, p.map);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace cirfuse
