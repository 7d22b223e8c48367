#include "cirfuse/cli.hpp"

#include <cstdlib>
#include <memory>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "cirfuse/calibration.hpp"
#include "cirfuse/contextualization.hpp"
#include "cirfuse/embedder.hpp"
#include "cirfuse/embedding_store.hpp"
#include "cirfuse/error.hpp"
#include "cirfuse/evaluation.hpp"
#include "cirfuse/fingerprint.hpp"
#include "cirfuse/json_io.hpp"
#include "cirfuse/projection.hpp"
#include "cirfuse/scoring.hpp"

namespace cirfuse {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string images, texts, pos_corpus, neg_corpus, mean_images;
  std::string stats, projection, manifest, embedder, out;
  std::string fusion = "basic_harris";
  std::string text, text_id, query_image, query_images;
  std::size_t dim = 0;
  double weight = 0.5;
  std::size_t steps = 11;
  EngineConfig engine;
};

// Input files and their content hashes, echoed into every output.
class Provenance {
 public:
  void add(const std::string& role, const std::string& path) {
    if (path.empty()) return;
    inputs_[role] = file_fingerprint(path);
  }
  Json to_json(const std::string& command, const Json& config) const {
    return {{"command", command}, {"config", config}, {"inputs", inputs_}};
  }

 private:
  Json inputs_ = Json::object();
};

std::string embedder_endpoint(const Options& o) {
  if (!o.embedder.empty()) return o.embedder;
  if (const char* env = std::getenv(kEmbedderEnvVar)) return env;
  return {};
}

std::unique_ptr<Embedder> open_embedder(const Options& o, std::size_t dim) {
  const auto endpoint = embedder_endpoint(o);
  if (endpoint.empty()) {
    throw Error(ErrorCode::EmbedderUnavailable,
                std::string("no embedder configured (use --embedder or ") + kEmbedderEnvVar + ")");
  }
  EmbedderConfig cfg;
  cfg.endpoint = endpoint;
  cfg.dim = o.dim ? o.dim : dim;
  return make_embedder(cfg);
}

bool is_embedding_file(const std::string& path) { return fs::path(path).extension() == ".emb"; }

// Corpus from an embedding file (ids are the terms) or a term list
// embedded through the configured embedder.
CorpusEmbeddings load_corpus(const Options& o, const std::string& path, Polarity polarity,
                             std::size_t dim, Provenance& prov, const std::string& role) {
  prov.add(role, path);
  if (is_embedding_file(path)) return CorpusEmbeddings::from_set(load_embedding_set(path), polarity);

  std::vector<std::string> terms;
  std::set<std::string> seen;
  for (auto& t : load_terms(path)) {
    if (seen.insert(t).second) terms.push_back(std::move(t));
  }
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "--dim is required to embed a term list");
  auto embedder = open_embedder(o, dim);
  const auto vectors = embedder->embed_text(terms);
  EmbeddingSet::RowMatrix rows(static_cast<Eigen::Index>(terms.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose().cast<float>();
  }
  EmbeddingSet set(Modality::Text, dim, terms, std::move(rows));
  return CorpusEmbeddings(std::move(terms), std::move(set), polarity);
}

std::vector<std::string> corpus_terms(const std::string& path) {
  if (path.empty()) return {};
  if (is_embedding_file(path)) {
    const Json manifest = read_json_file(sidecar_path(path));
    return manifest.at("ids").get<std::vector<std::string>>();
  }
  return load_terms(path);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidArgument, std::string(flag) + " is required");
}

std::optional<CalibrationStats> maybe_stats(const Options& o, Provenance& prov) {
  if (o.stats.empty()) return std::nullopt;
  prov.add("stats", o.stats);
  return load_stats(o.stats);
}

std::optional<ProjectionOperator> maybe_projection(const Options& o, Provenance& prov) {
  if (o.projection.empty() || !o.engine.toggles.projection) return std::nullopt;
  prov.add("projection", o.projection);
  return load_projection(o.projection);
}

Json fusion_json(const FusionConfig& f) {
  return {{"mode", fusion_mode_name(f.mode)}, {"harris_lambda", f.harris_lambda}, {"weight", f.weight}};
}

FusionConfig fusion_from(const Options& o) {
  return {parse_fusion_mode(o.fusion), o.engine.harris_lambda, o.weight};
}

// ---------------------------------------------------------------- commands

int cmd_stats(const Options& o, std::ostream& log) {
  require(o.images, "--images");
  require(o.texts, "--texts");
  require(o.pos_corpus, "--pos-corpus");
  require(o.out, "--out");
  Provenance prov;
  prov.add("images", o.images);
  prov.add("texts", o.texts);
  prov.add("mean_images", o.mean_images);

  const auto images = load_embedding_set(o.images);
  const auto texts = load_embedding_set(o.texts);
  const auto corpus = load_corpus(o, o.pos_corpus, Polarity::Positive, images.dim(), prov, "pos_corpus");

  CalibrationStats stats;
  stats.mu_image = compute_mean(o.mean_images.empty() ? images : load_embedding_set(o.mean_images));
  stats.mu_text = compute_mean(corpus.embeddings);

  std::optional<ProjectionOperator> proj;
  if (!o.projection.empty()) {
    prov.add("projection", o.projection);
    proj = load_projection(o.projection);
  }
  const auto mins = compute_min_stats(images, texts, stats.mu_image, stats.mu_text, proj ? &*proj : nullptr);
  stats.s_v_min = mins.s_v_min;
  stats.s_t_min = mins.s_t_min;
  stats.projected = proj.has_value();
  if (proj) stats.projection_fingerprint = proj->fingerprint;

  save_stats(stats, o.out, prov.to_json("stats", Json::object()));
  log << "s_v_min=" << stats.s_v_min << " s_t_min=" << stats.s_t_min
      << (stats.projected ? " (projected)" : "") << " -> " << o.out << '\n';
  return 0;
}

int cmd_projection(const Options& o, std::ostream& log) {
  require(o.pos_corpus, "--pos-corpus");
  require(o.out, "--out");
  Provenance prov;
  const auto pos = load_corpus(o, o.pos_corpus, Polarity::Positive, o.dim, prov, "pos_corpus");
  CorpusEmbeddings neg;
  if (!o.neg_corpus.empty()) {
    neg = load_corpus(o, o.neg_corpus, Polarity::Negative, pos.embeddings.dim(), prov, "neg_corpus");
  }
  Vector mu_text;
  if (!o.stats.empty()) {
    prov.add("stats", o.stats);
    mu_text = load_stats(o.stats).mu_text;
  } else {
    mu_text = compute_mean(pos.embeddings);
  }
  const Matrix c = build_contrastive_covariance(pos, neg, mu_text, o.engine.alpha);
  const auto op = build_projection(c, o.engine.k, o.engine.alpha);
  save_projection(op, o.out,
                  prov.to_json("projection", {{"alpha", o.engine.alpha}, {"k", o.engine.k}}));
  log << "k_effective=" << op.k_effective << " of " << op.k_requested << " fingerprint=" << op.fingerprint
      << " -> " << o.out << '\n';
  return 0;
}

int cmd_contextualize(const Options& o, std::ostream& log) {
  require(o.text, "--text");
  require(o.stats, "--stats");
  require(o.out, "--out");
  Provenance prov;
  prov.add("stats", o.stats);
  const auto stats = load_stats(o.stats);
  auto embedder = open_embedder(o, stats.dim());

  Vector q;
  if (o.engine.toggles.contextualization) {
    require(o.pos_corpus, "--pos-corpus");
    prov.add("pos_corpus", o.pos_corpus);
    const auto terms = corpus_terms(o.pos_corpus);
    q = contextualize(o.text, terms, *embedder, stats.mu_text,
                      {o.engine.n_phrases, o.engine.rng_seed});
  } else {
    const std::vector<std::string> one{o.text};
    q = passthrough_text(embedder->embed_text(one).front(), stats.mu_text);
  }
  Json doc = {{"query", o.text},
              {"centered", true},
              {"vector", std::vector<double>(q.data(), q.data() + q.size())},
              {"provenance", prov.to_json("contextualize", {{"contextualization", o.engine.toggles.contextualization},
                                                            {"n_phrases", o.engine.n_phrases},
                                                            {"rng_seed", o.engine.rng_seed},
                                                            {"embedder", embedder->describe()}})}};
  write_json_file(doc, o.out);
  log << "contextualized '" << o.text << "' -> " << o.out << '\n';
  return 0;
}

int cmd_search(const Options& o, std::ostream& log) {
  require(o.images, "--images");
  require(o.query_image, "--query-image");
  require(o.out, "--out");
  Provenance prov;
  prov.add("images", o.images);
  prov.add("query_images", o.query_images);
  const auto all = load_embedding_set(o.images);
  auto stats = maybe_stats(o, prov);
  auto proj = maybe_projection(o, prov);
  const Engine engine(o.engine, std::move(stats), std::move(proj));
  const FusionConfig fusion = fusion_from(o);

  const Vector q_image = o.query_images.empty() ? all.lookup(o.query_image)
                                                : load_embedding_set(o.query_images).lookup(o.query_image);
  const auto d = static_cast<Eigen::Index>(all.dim());
  const Vector mu_text = engine.mu_text().size() ? engine.mu_text() : Vector::Zero(d);

  Vector q_text;
  if (!o.text_id.empty()) {
    require(o.texts, "--texts");
    prov.add("texts", o.texts);
    q_text = passthrough_text(load_embedding_set(o.texts).lookup(o.text_id), mu_text);
  } else {
    require(o.text, "--text");
    auto embedder = open_embedder(o, all.dim());
    if (o.engine.toggles.contextualization) {
      require(o.pos_corpus, "--pos-corpus");
      prov.add("pos_corpus", o.pos_corpus);
      q_text = contextualize(o.text, corpus_terms(o.pos_corpus), *embedder, mu_text,
                             {o.engine.n_phrases, o.engine.rng_seed});
    } else {
      const std::vector<std::string> one{o.text};
      q_text = passthrough_text(embedder->embed_text(one).front(), mu_text);
    }
  }

  // The query image never ranks against itself.
  std::vector<std::string> db_ids;
  for (const auto& id : all.ids()) {
    if (id != o.query_image) db_ids.push_back(id);
  }
  const auto database = all.subset(db_ids);
  const auto bundle = engine.make_query(q_image, q_text, database);
  const auto ranking = engine.rank(bundle, database, fusion);

  const fs::path out(o.out);
  if (out.extension() == ".csv") {
    write_ranking_csv(ranking, out);
  } else {
    write_ranking_jsonl(ranking, out);
  }
  Json config = {{"engine", o.engine.to_json()},
                 {"fusion", fusion_json(fusion)},
                 {"engine_fingerprint", engine.fingerprint()},
                 {"query_image", o.query_image},
                 {"text", o.text},
                 {"text_id", o.text_id}};
  if (bundle.expansion) config["expansion_neighbors"] = bundle.expansion->neighbors;
  write_json_file(prov.to_json("search", config), fs::path(o.out + ".meta.json"));
  log << "ranked " << ranking.size() << " items -> " << o.out << '\n';
  return 0;
}

struct BenchmarkInputs {
  DatasetManifest manifest;
  EmbeddingSet images;
  std::optional<EmbeddingSet> texts;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<Engine> engine;
  QuerySources sources;
  Provenance prov;
};

std::unique_ptr<BenchmarkInputs> load_benchmark(const Options& o) {
  require(o.manifest, "--manifest");
  require(o.images, "--images");
  require(o.out, "--out");
  auto in = std::make_unique<BenchmarkInputs>();
  in->prov.add("manifest", o.manifest);
  in->prov.add("images", o.images);
  in->manifest = load_manifest(o.manifest);
  in->images = load_embedding_set(o.images);
  if (!o.texts.empty()) {
    in->prov.add("texts", o.texts);
    in->texts = load_embedding_set(o.texts);
  }
  auto stats = maybe_stats(o, in->prov);
  auto proj = maybe_projection(o, in->prov);
  in->engine = std::make_unique<Engine>(o.engine, std::move(stats), std::move(proj));

  if (!embedder_endpoint(o).empty()) in->embedder = open_embedder(o, in->images.dim());
  in->sources.images = &in->images;
  in->sources.texts = in->texts ? &*in->texts : nullptr;
  in->sources.embedder = in->embedder.get();
  if (o.engine.toggles.contextualization && !o.pos_corpus.empty()) {
    in->prov.add("pos_corpus", o.pos_corpus);
    in->sources.context_terms = corpus_terms(o.pos_corpus);
  }
  return in;
}

int cmd_evaluate(const Options& o, std::ostream& log) {
  auto in = load_benchmark(o);
  const FusionConfig fusion = fusion_from(o);
  auto report = run_benchmark(in->manifest, *in->engine, in->sources, fusion);
  report.config_echo["provenance"] = in->prov.to_json("evaluate", Json::object());
  write_json_file(report.to_json(), o.out);
  log << "macro-mAP=" << report.macro_map << " micro-mAP=" << report.micro_map << " over "
      << report.per_query_ap.size() << " queries -> " << o.out << '\n';
  return 0;
}

int cmd_sweep(const Options& o, std::ostream& log) {
  auto in = load_benchmark(o);
  const auto mode = parse_fusion_mode(o.fusion == "basic_harris" ? "weighted_sum" : o.fusion);
  const auto sweep = modality_sweep(in->manifest, *in->engine, in->sources, mode, o.steps);
  write_sweep_csv(sweep, o.out);
  Json meta = in->prov.to_json("sweep", {{"engine", o.engine.to_json()},
                                         {"engine_fingerprint", in->engine->fingerprint()},
                                         {"mode", fusion_mode_name(mode)},
                                         {"steps", o.steps}});
  meta["composition_gain"] = sweep.composition_gain;
  meta["peak_weight"] = sweep.peak_weight;
  write_json_file(meta, fs::path(o.out + ".meta.json"));
  log << "composition gain=" << sweep.composition_gain << " at w=" << sweep.peak_weight << " -> " << o.out
      << '\n';
  return 0;
}

void add_engine_flags(CLI::App& cmd, Options& o) {
  auto& e = o.engine;
  auto& t = e.toggles;
  cmd.add_option("--alpha", e.alpha, "contrastive weight of the negative corpus")->capture_default_str();
  cmd.add_option("--k", e.k, "requested projection rank")->capture_default_str();
  cmd.add_option("--lambda", e.harris_lambda, "Harris penalty weight")->capture_default_str();
  cmd.add_option("--beta", e.beta, "query expansion temperature")->capture_default_str();
  cmd.add_option("--expand-k", e.k_neighbors, "query expansion neighbor count")->capture_default_str();
  cmd.add_option("--n-phrases", e.n_phrases, "contextualization phrase count")->capture_default_str();
  cmd.add_option("--seed", e.rng_seed, "contextualization RNG seed")->capture_default_str();
  cmd.add_option("--threads", e.threads, "worker thread cap")->capture_default_str();
  cmd.add_option("--centering", t.centering, "subtract modality means")->capture_default_str();
  cmd.add_option("--min-norm", t.min_norm, "min-based score normalization")->capture_default_str();
  cmd.add_option("--harris", t.harris, "Harris penalty in basic_harris fusion")->capture_default_str();
  cmd.add_option("--context", t.contextualization, "contextualize text queries")->capture_default_str();
  cmd.add_option("--proj", t.projection, "semantic projection of image scores")->capture_default_str();
  cmd.add_option("--expand", t.query_expansion, "image query expansion")->capture_default_str();
}

void add_io_flags(CLI::App& cmd, Options& o) {
  cmd.add_option("--images", o.images, "image embedding set (.emb)");
  cmd.add_option("--texts", o.texts, "text embedding set (.emb)");
  cmd.add_option("--pos-corpus", o.pos_corpus, "object corpus: term list or .emb");
  cmd.add_option("--neg-corpus", o.neg_corpus, "style corpus: term list or .emb");
  cmd.add_option("--stats", o.stats, "calibration stats JSON");
  cmd.add_option("--projection", o.projection, "projection operator (.prj)");
  cmd.add_option("--manifest", o.manifest, "benchmark manifest JSON");
  cmd.add_option("--embedder", o.embedder, "embedder endpoint: http://host:port or offline:<dir>");
  cmd.add_option("--dim", o.dim, "embedding dimension when it cannot be inferred");
  cmd.add_option("--fusion", o.fusion, "fusion mode")->capture_default_str();
  cmd.add_option("--weight", o.weight, "mixing weight for weighted fusion modes")->capture_default_str();
  cmd.add_option("--steps", o.steps, "sweep grid size")->capture_default_str();
  cmd.add_option("--out", o.out, "output path");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
  Options o;
  CLI::App app{"Composed image retrieval by late fusion of refined similarities", "cirfuse"};
  app.require_subcommand(1);

  auto* stats = app.add_subcommand("stats", "compute modality means and min-similarity statistics");
  stats->add_option("--mean-images", o.mean_images, "image set for the image mean (defaults to --images)");
  auto* projection = app.add_subcommand("projection", "build the contrastive projection operator");
  auto* ctx = app.add_subcommand("contextualize", "embed a contextualized text query");
  auto* search = app.add_subcommand("search", "rank a database for one composed query");
  search->add_option("--query-image", o.query_image, "id of the image query");
  search->add_option("--query-images", o.query_images, "set holding the image query (defaults to --images)");
  search->add_option("--text-id", o.text_id, "id of a precomputed text query in --texts");
  auto* evaluate = app.add_subcommand("evaluate", "run a benchmark manifest and write a report");
  auto* sweep = app.add_subcommand("sweep", "sweep the modality mixing weight");
  for (auto* cmd : {stats, projection, ctx, search, evaluate, sweep}) {
    add_io_flags(*cmd, o);
    add_engine_flags(*cmd, o);
  }
  ctx->add_option("--text", o.text, "raw text query");
  search->add_option("--text", o.text, "raw text query");

  std::vector<const char*> argv{"cirfuse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << Json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }

  try {
    o.engine.validate();
    if (*stats) return cmd_stats(o, log);
    if (*projection) return cmd_projection(o, log);
    if (*ctx) return cmd_contextualize(o, log);
    if (*search) return cmd_search(o, log);
    if (*evaluate) return cmd_evaluate(o, log);
    if (*sweep) return cmd_sweep(o, log);
  } catch (const Error& e) {
    err << Json{{"error", error_code_name(e.code())}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << Json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 3;
  }
  return 1;
}

}  // namespace cirfuse
