#!/usr/bin/env python3
"""Smoke test for the fusecal_py extension module.

Builds nothing itself: it locates the cdylib produced by
`cargo build -p fusecal-py [--release]`, links it into a temp directory
under the importable name, and exercises the main types and operations.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def import_fusecal():
    candidates = [
        REPO_ROOT / "target" / "release" / "libfusecal_py.so",
        REPO_ROOT / "target" / "debug" / "libfusecal_py.so",
        REPO_ROOT / "target" / "release" / "libfusecal_py.dylib",
        REPO_ROOT / "target" / "debug" / "libfusecal_py.dylib",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit(
            "no built extension found; run `cargo build -p fusecal-py` first"
        )
    newest = max(built, key=lambda p: p.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="fusecal_py_"))
    # CPython loads .so on darwin as well.
    shutil.copy2(newest, stage / "fusecal_py.so")
    sys.path.insert(0, str(stage))
    import fusecal_py

    return fusecal_py


def main():
    fc = import_fusecal()

    # Similarity basics.
    assert fc.cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0
    assert fc.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert abs(fc.cosine_similarity([1.0, 1.0], [1.0, 0.0]) - math.sqrt(0.5)) < 1e-12
    assert fc.local_match_count([0.9, 0.3, 0.6], 0.5) == 2
    assert fc.local_match_count([0.5], 0.5) == 0  # strict threshold

    # Catalogs and matrices.
    db = fc.ItemCatalog("database", [("d0", "A"), ("d1", "B"), ("d2", "A")])
    queries = fc.ItemCatalog("query", [("q0", "A"), ("q1", "B")])
    assert len(db) == 3 and db.identity(2) == "A"
    q_emb = fc.EmbeddingMatrix([[1.0, 0.1], [0.1, 1.0]])
    db_emb = fc.EmbeddingMatrix([[1.0, 0.0], [0.0, 1.0], [0.9, 0.2]])
    global_scores = fc.global_score_matrix(q_emb, db_emb)
    assert global_scores.kind == "raw_global"
    assert global_scores.shape == (2, 3)

    # Local scores from match records.
    records = fc.MatchRecordSet(2, 3)
    for conf in (0.8, 0.9, 0.7):
        records.add(0, 0, conf)
    records.add(0, 1, 0.2)
    records.add(1, 1, 0.95)
    local_scores = fc.local_score_matrix(records, 0.5, 2, 3)
    assert local_scores.get(0, 0) == 3.0
    assert local_scores.get(0, 1) == 0.0

    # Calibration preserves ranking.
    pairs = fc.build_pair_labels(global_scores, queries, db, [0, 1])
    assert len(pairs) == 6
    calibrator, warnings = fc.fit_calibrator("isotonic_pchip", pairs)
    assert not calibrator.is_decreasing
    calibrated = calibrator.apply(global_scores)
    assert calibrated.kind == "calibrated"
    raw_rank = [max(range(3), key=lambda d: global_scores.get(q, d)) for q in range(2)]
    cal_rank = [max(range(3), key=lambda d: calibrated.get(q, d)) for q in range(2)]
    assert raw_rank == cal_rank

    # Calibrator JSON round trip is value-exact.
    clone = fc.Calibrator.from_json(calibrator.to_json())
    assert clone.to_json() == calibrator.to_json()

    # Fusion and retrieval.
    cal_local, _ = fc.fit_calibrator(
        "isotonic_pchip", fc.build_pair_labels(local_scores, queries, db, [0, 1])
    )
    fused = fc.fuse(
        [("global", calibrated), ("local", cal_local.apply(local_scores))]
    )
    assert fused.kind == "fused"
    predictions = fc.rank_top1(fused, db)
    accuracy = fc.top1_accuracy([p[0] for p in predictions], queries, db)
    assert accuracy == 1.0, f"expected perfect toy accuracy, got {accuracy}"

    # Shortlist with full budget agrees with direct ranking.
    shortlist, evals = fc.shortlist_rerank(calibrated, fused, 3, db)
    assert evals == 3
    assert [p[0] for p in shortlist] == [p[0] for p in predictions]

    # End-to-end over generated files.
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        paths = fc.generate_synthetic(
            str(tmp / "data"), identities=10, items=6, dims=8, seed=7
        )
        summary = fc.run_config(paths["config"], str(tmp / "out"))
        assert 0.0 <= summary["fused_accuracy"] <= 1.0
        assert "global_cos" in summary["per_score_accuracy"]
        assert (tmp / "out" / "report.json").exists()
        assert (tmp / "out" / "predictions.csv").exists()

        # Zero-shot reuse of the fitted calibrators on a second dataset.
        paths_b = fc.generate_synthetic(
            str(tmp / "data_b"), identities=10, items=6, dims=8, seed=8
        )
        zs = fc.run_config(
            paths_b["config"],
            str(tmp / "out_zs"),
            mu=0.5,
            zero_shot=str(tmp / "out" / "calibrators"),
        )
        assert 0.0 <= zs["fused_accuracy"] <= 1.0

    print("fusecal_py smoke test: OK")


if __name__ == "__main__":
    main()
