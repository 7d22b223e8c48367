#include <doctest.h>

#include "cirfuse/calibration.hpp"
#include "cirfuse/error.hpp"
#include "cirfuse/evaluation.hpp"
#include "test_support.hpp"

using namespace cirfuse;
using namespace cirfuse::testing;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

using Ids = std::vector<std::string>;

}  // namespace

TEST_CASE("average precision worked examples") {
  CHECK(average_precision(Ids{"a", "b"}, {"a"}) == doctest::Approx(1.0));
  CHECK(average_precision(Ids{"a", "b"}, {"b"}) == doctest::Approx(0.5));
  // Positives at ranks 1 and 3: (1 + 2/3) / 2.
  CHECK(average_precision(Ids{"a", "x", "b"}, {"a", "b"}) == doctest::Approx(5.0 / 6.0));
  // A positive missing from the ranking contributes zero.
  CHECK(average_precision(Ids{"a", "x"}, {"a", "z"}) == doctest::Approx(0.5));
  CHECK(code_of([] { average_precision(Ids{"a"}, {}); }) == ErrorCode::NoPositives);
}

TEST_CASE("average precision matches brute force") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    Ids ranked;
    for (std::size_t i = 0; i < n; ++i) ranked.push_back(numbered("r", i));
    std::shuffle(ranked.begin(), ranked.end(), rng);
    Ids pos;
    for (const auto& id : ranked) {
      if (rng() % 3 == 0) pos.push_back(id);
    }
    if (pos.empty()) pos.push_back(ranked[rng() % n]);
    const double ap = average_precision(ranked, IdSet(pos.begin(), pos.end()));
    CHECK(ap == doctest::Approx(brute_force_ap(ranked, pos)).epsilon(1e-12));
    CHECK(ap > 0.0);
    CHECK(ap <= 1.0);
  }
}

TEST_CASE("perfect ranking has AP 1") {
  const Ids ranked{"p1", "p2", "p3", "n1", "n2"};
  CHECK(average_precision(ranked, {"p1", "p2", "p3"}) == doctest::Approx(1.0));
}

TEST_CASE("map aggregates") {
  const std::vector<double> aps{1.0, 0.5};
  CHECK(mean_average_precision(aps) == doctest::Approx(0.75));
  CHECK(code_of([] { mean_average_precision(std::vector<double>{}); }) == ErrorCode::EmptyInput);
  // Macro weights instances equally regardless of their query counts.
  CHECK(macro_map({{"a", 0.9}, {"b", 0.1}}) == doctest::Approx(0.5));
}

TEST_CASE("recall and map at k") {
  const Ids ranked{"n1", "p1", "n2", "p2", "p3"};
  const IdSet pos{"p1", "p2", "p3"};
  CHECK(recall_at_k(ranked, pos, 1, RecallConvention::HitRate) == 0.0);
  CHECK(recall_at_k(ranked, pos, 2, RecallConvention::HitRate) == 1.0);
  CHECK(recall_at_k(ranked, pos, 2, RecallConvention::Fraction) == doctest::Approx(1.0 / 2.0));
  CHECK(recall_at_k(ranked, pos, 4, RecallConvention::Fraction) == doctest::Approx(2.0 / 3.0));
  CHECK(recall_at_k(ranked, pos, 5, RecallConvention::Fraction) == doctest::Approx(1.0));
  // Ranks 2 and 4 within k = 4: (1/2 + 2/4) / min(3, 4).
  CHECK(map_at_k(ranked, pos, 4) == doctest::Approx(1.0 / 3.0));
  // k = 2: (1/2) / min(3, 2).
  CHECK(map_at_k(ranked, pos, 2) == doctest::Approx(0.25));
  CHECK(map_at_k(ranked, pos, 5) == doctest::Approx(average_precision(ranked, pos)));
  CHECK(code_of([&] { map_at_k(ranked, pos, 0); }) == ErrorCode::InvalidK);
}

TEST_CASE("manifest invariants") {
  DatasetManifest m;
  m.instances.push_back({"i0", {"a", "b", "c"}, {{"q0", "qimg", "red", std::nullopt, {"a"}}}});
  CHECK_NOTHROW(m.validate());

  SUBCASE("positive outside the database") {
    m.instances[0].queries[0].positives = {"z"};
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::ManifestInvariantViolation);
  }
  SUBCASE("query image in its own database") {
    m.instances[0].queries[0].image_query_id = "b";
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::ManifestInvariantViolation);
  }
  SUBCASE("no positives") {
    m.instances[0].queries[0].positives.clear();
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::ManifestInvariantViolation);
  }
  SUBCASE("duplicate database id") {
    m.instances[0].database.push_back("a");
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::ManifestInvariantViolation);
  }
}

TEST_CASE("manifest JSON round-trip") {
  DatasetManifest m;
  m.recall_convention = RecallConvention::HitRate;
  m.instances.push_back({"i0", {"a", "b"}, {{"q0", "qimg", "red", std::string("t0"), {"a"}}}});
  TempDir dir;
  write_json_file(manifest_to_json(m), dir / "m.json");
  const auto back = load_manifest(dir / "m.json");
  CHECK(back.recall_convention == RecallConvention::HitRate);
  REQUIRE(back.instances.size() == 1);
  CHECK(back.instances[0].database == m.instances[0].database);
  CHECK(back.instances[0].queries[0].text_embedding_id == std::optional<std::string>("t0"));
  CHECK(back.instances[0].queries[0].text_query == "red");
}

namespace {

struct PlantedEngine {
  PlantedBenchmark bench;
  CalibrationStats stats;
};

PlantedEngine planted_unprojected() {
  PlantedEngine p{make_planted(101), {}};
  p.stats.mu_image = p.bench.mu_image;
  p.stats.mu_text = p.bench.mu_text;
  const auto db = p.bench.images.subset(p.bench.database_ids);
  const auto mins = compute_min_stats(db, p.bench.calib_texts, p.stats.mu_image, p.stats.mu_text);
  p.stats.s_v_min = mins.s_v_min;
  p.stats.s_t_min = mins.s_t_min;
  return p;
}

EngineConfig plain_config() {
  EngineConfig c;
  c.toggles.projection = false;
  c.toggles.contextualization = false;
  return c;
}

}  // namespace

TEST_CASE("planted benchmark: harris ranks composed positives first") {
  auto p = planted_unprojected();
  const Engine engine(plain_config(), p.stats, std::nullopt);
  const QuerySources src{&p.bench.images, &p.bench.texts, nullptr, {}};
  const auto report = run_benchmark(p.bench.manifest, engine, src, {});
  CHECK(report.per_query_ap.at("q0") == doctest::Approx(1.0));
  CHECK(report.macro_map == doctest::Approx(1.0));
  CHECK(report.recall_at.at(10) == doctest::Approx(1.0));

  FusionConfig text_only{FusionMode::TextOnly};
  const auto t = run_benchmark(p.bench.manifest, engine, src, text_only);
  CHECK(t.macro_map < 0.5);
}

TEST_CASE("benchmark report is deterministic and echoes its configuration") {
  auto p = planted_unprojected();
  const Engine engine(plain_config(), p.stats, std::nullopt);
  const QuerySources src{&p.bench.images, &p.bench.texts, nullptr, {}};
  const auto a = run_benchmark(p.bench.manifest, engine, src, {}).to_json();
  const auto b = run_benchmark(p.bench.manifest, engine, src, {}).to_json();
  CHECK(a.dump() == b.dump());
  CHECK(a["config_echo"]["engine_fingerprint"] == engine.fingerprint());
}

TEST_CASE("missing precomputed text embedding") {
  auto p = planted_unprojected();
  p.bench.manifest.instances[0].queries[0].text_embedding_id = "nope";
  const Engine engine(plain_config(), p.stats, std::nullopt);
  const QuerySources src{&p.bench.images, &p.bench.texts, nullptr, {}};
  CHECK(code_of([&] { run_benchmark(p.bench.manifest, engine, src, {}); }) == ErrorCode::MissingEmbedding);
  p.bench.manifest.instances[0].queries[0].text_embedding_id.reset();
  CHECK(code_of([&] { run_benchmark(p.bench.manifest, engine, src, {}); }) == ErrorCode::EmbedderUnavailable);
}

TEST_CASE("text queries without precomputed embeddings go through the embedder") {
  auto p = planted_unprojected();
  p.bench.manifest.instances[0].queries[0].text_embedding_id.reset();
  StubEmbedder emb(64);
  emb.set("planted", p.bench.texts.lookup("query_text"));
  const Engine engine(plain_config(), p.stats, std::nullopt);
  const QuerySources src{&p.bench.images, &p.bench.texts, &emb, {}};
  const auto report = run_benchmark(p.bench.manifest, engine, src, {});
  CHECK(report.macro_map == doctest::Approx(1.0));
  CHECK(emb.calls == 1);
}

TEST_CASE("modality sweep has an interior peak on planted data") {
  auto p = planted_unprojected();
  auto cfg = plain_config();
  const Engine engine(cfg, p.stats, std::nullopt);
  const QuerySources src{&p.bench.images, &p.bench.texts, nullptr, {}};
  const auto sweep = modality_sweep(p.bench.manifest, engine, src, FusionMode::WeightedSum, 11);
  REQUIRE(sweep.curve.size() == 11);
  CHECK(sweep.curve.front().weight == 0.0);
  CHECK(sweep.curve.back().weight == 1.0);
  CHECK(sweep.composition_gain > 0.0);
  CHECK(sweep.peak_weight > 0.0);
  CHECK(sweep.peak_weight < 1.0);

  const auto two = modality_sweep(p.bench.manifest, engine, src, FusionMode::WeightedSum, 2);
  REQUIRE(two.curve.size() == 2);
  CHECK(two.composition_gain == 0.0);

  TempDir dir;
  write_sweep_csv(two, dir / "s.csv");
  CHECK(read_bytes(dir / "s.csv").starts_with("w,map\n0,"));
}
