import math

import numpy as np
import pytest

import cirfuse


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return (x / np.linalg.norm(x, axis=1, keepdims=True)).astype(np.float32)


def test_embedding_set_round_trip(tmp_path):
    rows = unit_rows(np.random.default_rng(0), 5, 8)
    s = cirfuse.EmbeddingSet("image", [f"img{i}" for i in range(5)], rows)
    cirfuse.save_embedding_set(s, tmp_path / "a.emb")
    back = cirfuse.load_embedding_set(tmp_path / "a.emb")
    assert len(back) == 5
    assert back.dim == 8
    assert back.modality == "image"
    assert np.array_equal(back.matrix, rows)
    assert np.allclose(back.lookup("img3"), rows[3])


def test_errors_carry_codes():
    rows = np.array([[2.0, 0.0]], dtype=np.float32)
    with pytest.raises(cirfuse.CirfuseError, match="NotUnitNorm") as excinfo:
        cirfuse.EmbeddingSet("image", ["x"], rows)
    assert excinfo.value.code == "NotUnitNorm"
    with pytest.raises(cirfuse.CirfuseError, match="NonNegativeMinStat"):
        cirfuse.min_normalize(0.1, 0.0)


def test_fusion():
    assert cirfuse.harris_fuse(1.0, 1.0, 0.1) == pytest.approx(0.6)
    assert cirfuse.harris_fuse(1.4, 0.1, 0.1) == pytest.approx(-0.085)
    assert cirfuse.min_normalize(-0.077, -0.077) == 0.0
    assert cirfuse.min_normalize(0.0, -0.117) == 1.0
    assert cirfuse.fuse(0.3, 0.7, "weighted_sum", weight=0.0) == pytest.approx(0.7)


def test_metrics():
    assert cirfuse.average_precision(["a", "x", "b"], ["a", "b"]) == pytest.approx(5 / 6)
    assert cirfuse.recall_at_k(["n", "p"], ["p"], 1, hit_rate=True) == 0.0
    assert cirfuse.map_at_k(["n1", "p1", "n2", "p2", "p3"], ["p1", "p2", "p3"], 2) == pytest.approx(0.25)


def test_projection_and_stats():
    rng = np.random.default_rng(1)
    corpus = cirfuse.EmbeddingSet("text", [f"t{i}" for i in range(40)], unit_rows(rng, 40, 12))
    mu_t = cirfuse.compute_mean(corpus)
    op = cirfuse.build_projection(corpus, None, mu_t, alpha=0.0, k=4)
    assert op.k_effective == 4
    assert np.allclose(op.basis @ op.basis.T, np.eye(4), atol=1e-9)

    images = cirfuse.EmbeddingSet("image", [f"i{i}" for i in range(20)], unit_rows(rng, 20, 12))
    mu_v = cirfuse.compute_mean(images)
    s_v, s_t = cirfuse.compute_min_stats(images, corpus, mu_v, mu_t, op)
    assert s_v < 0 and s_t < 0


def test_rank_three_items():
    r = math.sqrt(0.03)
    rows = np.array([[0, 0, 1, 0], [0.4, -0.9, r, 0], [-0.9, 0.4, 0, r]], dtype=np.float32)
    db = cirfuse.EmbeddingSet("image", ["x1", "x2", "x3"], rows)
    stats = cirfuse.CalibrationStats()
    stats.mu_image = np.zeros(4)
    stats.mu_text = np.zeros(4)
    stats.s_v_min = -1.0
    stats.s_t_min = -1.0
    ranked = cirfuse.rank(np.eye(4)[0], np.eye(4)[1], db, stats=stats)
    assert [item.id for item in ranked][0] == "x1"
    assert ranked[0].fused == pytest.approx(0.6)


def test_query_expansion_noop():
    rng = np.random.default_rng(2)
    db = cirfuse.EmbeddingSet("image", [f"d{i}" for i in range(10)], unit_rows(rng, 10, 6))
    q = rng.standard_normal(6)
    expanded, neighbors, weights = cirfuse.expand_query(q, db, np.zeros(6), k_neighbors=0)
    assert np.array_equal(expanded, q)
    assert neighbors == []
    assert weights == [1.0]
    _, neighbors, weights = cirfuse.expand_query(q, db, np.zeros(6), k_neighbors=3)
    assert len(neighbors) == 3
    assert sum(weights) == pytest.approx(1.0)


def test_cli_entry_point(tmp_path):
    code, log, _ = cirfuse.run_cli(["--help"])
    assert code == 0
    assert "evaluate" in log
    code, _, err = cirfuse.run_cli(["search", "--images", str(tmp_path / "none.emb"), "--query-image", "q",
                                    "--out", str(tmp_path / "o.jsonl"), "--proj", "false", "--context", "false",
                                    "--centering", "false", "--min-norm", "false", "--harris", "false"])
    assert code == 2
    assert '"IoError"' in err
