"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -s` to see them
stream). Tolerances are pinned here and nowhere else.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from kgbench.cli import main
from kgbench.geometry import kl_mean, linear_cka, log_minmax, svd_diff, MatrixPair
from kgbench.kg import load_kg
from kgbench.metrics import (
    AnswerRecord,
    EvalConfig,
    FailureKind,
    FailureThresholds,
    MetricReport,
    PlasticityCurve,
    ccr,
    classify_failures,
    collapse_point,
    rr,
    spread_proxies,
)
from kgbench.probes import MCQItem, Phase, validate_item
from kgbench.bench import load_bundle_interventions, load_bundle_key
from oracles import ccr_rr_counting, hsic_cka


@contextlib.contextmanager
def criterion(name: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.perf_counter() - start:.2f}s)")
        raise
    print(f"ACCEPTANCE {name}: PASS ({time.perf_counter() - start:.2f}s)")


def test_ccr_rr_oracle_equivalence():
    with criterion("ccr-rr-oracle-equivalence"):
        start = time.perf_counter()
        rng = random.Random(20250101)
        for _ in range(1000):
            n = rng.randint(1, 32)
            related = [f"p{i}" for i in range(n)]
            pre_map = {p: rng.randrange(4) for p in related}
            post_map = {p: rng.randrange(4) for p in related}
            pre = [
                AnswerRecord(p, "m", Phase.PRE, c) for p, c in pre_map.items()
            ]
            post = [
                AnswerRecord(p, "m", Phase.POST, c) for p, c in post_map.items()
            ]
            got_ccr = ccr(pre, post, related)
            got_rr = rr(pre, post, related)
            want_ccr, want_rr = ccr_rr_counting(pre_map, post_map, related)
            assert got_ccr == want_ccr, (n, got_ccr, want_ccr)
            assert got_rr == want_rr, (n, got_rr, want_rr)
            assert got_ccr + got_rr == 1.0, (n, got_ccr, got_rr)
        assert time.perf_counter() - start < 5.0


def test_spread_proxies_exact_grid():
    with criterion("spread-proxies-grid"):
        for i in range(101):
            a = i / 100
            over, under = spread_proxies(0.5, a, "edit")
            assert over == 1.0 - a and under is None
            over, under = spread_proxies(0.5, a, "unlearn")
            assert over is None and under == a


def test_geometry_suite():
    with criterion("geometry-suite"):
        start = time.perf_counter()
        rng = np.random.default_rng(77)

        for shape in ((4, 4), (16, 8), (32, 32), (64, 32), (64, 64)):
            w = rng.standard_normal(shape)
            for c in (0.5, 2.0, 10.0):
                report = svd_diff(MatrixPair("w", w, c * w))
                assert all(abs(r - c) < 1e-9 for r in report.scaling_ratios), shape
                assert report.left_alignment >= 1 - 1e-9
                assert report.right_alignment >= 1 - 1e-9

        for _ in range(20):
            m, n = int(rng.integers(3, 40)), int(rng.integers(3, 40))
            pair = MatrixPair("r", rng.standard_normal((m, n)), rng.standard_normal((m, n)))
            assert svd_diff(pair).recon_residual < 1e-6

        x = rng.standard_normal((10, 6))
        assert abs(linear_cka(x, x) - 1.0) <= 1e-12
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        assert abs(linear_cka(x, x @ q) - 1.0) <= 1e-9

        for _ in range(100):
            n = int(rng.integers(5, 12))
            a = rng.standard_normal((n, int(rng.integers(2, 6))))
            b = rng.standard_normal((n, int(rng.integers(2, 6))))
            assert abs(linear_cka(a, b) - hsic_cka(a.tolist(), b.tolist())) <= 1e-9

        assert time.perf_counter() - start < 30.0


def test_log_minmax_normalization():
    with criterion("log-minmax-normalization"):
        out = log_minmax([1.0, 10.0, 100.0], eps=1e-12)
        assert abs(out[0] - 0.0) <= 1e-9
        assert abs(out[1] - 0.5) <= 1e-9
        assert abs(out[2] - 1.0) <= 1e-9

        rng = np.random.default_rng(99)
        checked = 0
        while checked < 1000:
            series = (rng.random(int(rng.integers(2, 16))) * float(rng.integers(1, 10_000))).tolist()
            if len(set(series)) != len(series) or len(set(series)) < 2:
                continue
            out = log_minmax(series, eps=1e-8)
            assert out.index(max(out)) == series.index(max(series))
            assert out.index(min(out)) == series.index(min(series))
            checked += 1


def test_kl_mean_analytic_and_nonnegative():
    with criterion("kl-mean-analytic"):
        value = kl_mean([(1.0, 0.0, 0.0, 0.0)], [(0.25, 0.25, 0.25, 0.25)], smoothing=0.0)
        assert abs(value - math.log(4.0)) <= 1e-9

        rng = np.random.default_rng(123)
        for _ in range(1000):
            p = tuple(rng.dirichlet(np.ones(4)))
            q = tuple(rng.dirichlet(np.ones(4)))
            assert kl_mean([p], [q]) >= 0.0


def _digest_tree(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_generator_integrity(tmp_path, fixtures_dir, capsys):
    with criterion("generator-integrity"):
        start = time.perf_counter()
        config = str(fixtures_dir / "mock_config.json")

        code = main(["mock-run", "--config", config, "--out", str(tmp_path / "run_a")])
        out_doc = json.loads(capsys.readouterr().out)
        assert code == 0 and out_doc["ok"] is True

        checks = {c["name"]: c["ok"] for c in out_doc["checks"]}
        for required in (
            "counts-match-config",
            "faithful-pre-on-pre-direct",
            "faithful-pre-on-post-direct",
            "faithful-post-on-post-direct",
            "faithful-post-on-pre-direct",
            "conflict-rate-faithful-pre-post",
            "conflict-rate-faithful-post-post",
        ):
            assert checks.get(required) is True, required

        code = main(["mock-run", "--config", config, "--out", str(tmp_path / "run_b")])
        capsys.readouterr()
        assert code == 0
        assert _digest_tree(tmp_path / "run_a") == _digest_tree(tmp_path / "run_b")

        bench = tmp_path / "run_a" / "bench"
        key = load_bundle_key(bench)
        specs = load_bundle_interventions(bench)
        kg = load_kg(fixtures_dir / "kg_physics.json")
        assert key
        for rec in key.values():
            item = MCQItem.from_record(rec)
            qc = validate_item(item, kg, specs[f"{rec['domain']}/{rec['branch']}"])
            assert qc.ok, (rec["probe_id"], qc.failures)

        summary = json.loads((bench / "summary.json").read_text())
        assert summary["planned"]["training_samples"] == summary["emitted"]["training_samples"]
        assert summary["planned"]["eval_items"] == summary["emitted"]["eval_items"]
        assert time.perf_counter() - start < 60.0


def test_collapse_detection():
    with criterion("collapse-detection"):
        scales = [1, 10, 100, 1000, 10000]

        def curve(values):
            return PlasticityCurve(
                branch="leaf", domain="d", mode="edit",
                scale_points=tuple(zip(scales, values)),
            )

        cfg = EvalConfig(collapse_delta=0.1, reverse_floor=0.8)
        assert collapse_point(curve([0.2, 0.5, 0.5, 0.3, 0.3]), curve([0.9] * 5), cfg) == 1000
        assert collapse_point(curve([0.1, 0.2, 0.3, 0.4, 0.5]), curve([0.9] * 5), cfg) is None
        assert collapse_point(curve([0.2, 0.5, 0.5, 0.3, 0.3]), curve([0.4] * 5), cfg) is None


def test_failure_classifier_six_bundles():
    with criterion("failure-classifier-bundles"):
        t = FailureThresholds()
        bundles = {
            FailureKind.UNDER_FORGETTING: MetricReport(
                mode="unlearn", rr=min(2 * t.t_rr, 1.0), ccr=0.0, conflict_rate=0.0
            ),
            FailureKind.OVER_SPREADING: MetricReport(
                mode="edit", ccr=min(2 * t.t_ccr, 1.0), rr=0.4, conflict_rate=0.0
            ),
            FailureKind.CONFLICT_EMERGENCE: MetricReport(
                mode="edit", ccr=0.0, rr=1.0, conflict_rate=min(2 * t.t_cf, 1.0)
            ),
            FailureKind.KNOWLEDGE_DRIFT: MetricReport(
                mode="edit", ccr=0.0, conflict_rate=0.0,
                aux={"ood_accuracy": 0.8 - 2 * t.t_ood},
            ),
            FailureKind.INSTRUCTION_FOLLOWING_DROP: MetricReport(
                mode="edit", ccr=0.0, conflict_rate=0.0,
                aux={"judge_score": 0.8 - 2 * t.t_if},
            ),
            FailureKind.HALLUCINATION_INCREASE: MetricReport(
                mode="edit", ccr=0.0, conflict_rate=0.0,
                aux={"truthfulness_accuracy": 0.8 - 2 * t.t_h},
            ),
        }
        baselines = {"ood_accuracy": 0.8, "judge_score": 0.8, "truthfulness_accuracy": 0.8}
        for kind, report in bundles.items():
            out = classify_failures(report, baselines, t)
            assert [f.kind for f in out] == [kind], (kind, out)
            assert out[0].severity == pytest.approx(1.0)
