from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lads.bench import (
    BenchmarkRow,
    Direction,
    TaskBundle,
    append_rows,
    discover_bundles,
    load_bundle,
    metric_direction,
    normalize_score,
    nps_record,
    read_quartiles,
    read_rows,
    resolve_metric,
    run_benchmark,
    summarize,
)
from lads.errors import NegativeLossScore, UnknownMetric

from conftest import make_gateway
from synth import (
    PLANNER_RESPONSE,
    REFLECTION_RESPONSE,
    good_codegen_response,
    make_binary_frame,
    write_csv,
)


class TestNormalize:
    def test_zero_loss_is_one(self):
        assert normalize_score(0.0, Direction.SMALLER_BETTER) == 1.0

    def test_quarter_loss(self):
        assert normalize_score(0.25, Direction.SMALLER_BETTER) == pytest.approx(0.8)

    def test_larger_better_pass_through(self):
        assert normalize_score(0.780, Direction.LARGER_BETTER) == 0.780

    def test_negative_loss_rejected(self):
        with pytest.raises(NegativeLossScore):
            normalize_score(-0.1, Direction.SMALLER_BETTER)

    def test_negative_larger_better_passes_through(self):
        assert normalize_score(-0.3, Direction.LARGER_BETTER) == -0.3

    @given(st.floats(min_value=0, max_value=1e9, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_range_and_formula(self, s):
        out = normalize_score(s, Direction.SMALLER_BETTER)
        assert 0 < out <= 1
        assert out == pytest.approx(1.0 / (1.0 + s), abs=1e-12)

    @given(
        st.floats(min_value=0, max_value=1e6, allow_nan=False),
        st.floats(min_value=1e-9, max_value=1e6, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotonicity(self, s, delta):
        assert normalize_score(s, Direction.SMALLER_BETTER) > normalize_score(
            s + delta, Direction.SMALLER_BETTER
        )


class TestRegistry:
    def test_directions_frozen(self):
        larger = ["accuracy", "auc", "r2-score", "f1"]
        smaller = ["rmse", "rmsle", "logloss", "mae"]
        for name in larger:
            assert metric_direction(name) == Direction.LARGER_BETTER
        for name in smaller:
            assert metric_direction(name) == Direction.SMALLER_BETTER

    def test_aliases(self):
        assert resolve_metric("ROC AUC") == "auc"
        assert resolve_metric("r2") == "r2-score"
        assert resolve_metric("Accuracy") == "accuracy"
        assert resolve_metric("made-up-metric") is None

    def test_unknown_metric_raises(self):
        with pytest.raises(UnknownMetric):
            metric_direction("vibes")

    def test_nps_record_invariants(self):
        rec = nps_record(0.25, Direction.SMALLER_BETTER)
        assert rec.nps == pytest.approx(0.8)
        rec2 = nps_record(0.774, Direction.LARGER_BETTER)
        assert rec2.nps == 0.774


PUBLISHED_SCORES = [0.745, 0.798, 0.886, 0.774, 0.836, 0.883, 0.905, 0.886]
PUBLISHED_DATASETS = [
    "Titanic", "Sp. Titanic", "House Prices", "Monsters",
    "Ac. Success", "Bank Churm", "Ob. Risk", "Plate Defect",
]


def published_rows(tool="LAMA+LLM"):
    return [
        BenchmarkRow(
            dataset=ds, tool=tool, metric_name="accuracy", raw_score=s, nps=s,
            timestamp="2025-01-01T00:00:00+00:00",
        )
        for ds, s in zip(PUBLISHED_DATASETS, PUBLISHED_SCORES)
    ]


class TestSummarize:
    def test_published_average_reproduced(self):
        summary = summarize(published_rows())
        mean, n = summary.tool_means["LAMA+LLM"]
        assert n == 8
        assert abs(mean - 0.839) <= 0.0005

    def test_single_row_mean(self):
        rows = [BenchmarkRow("d", "t", "auc", 0.5, 0.5, "ts")]
        assert summarize(rows).tool_means["t"] == (0.5, 1)

    def test_failed_cell_excluded_and_annotated(self):
        rows = published_rows()[:2] + [
            BenchmarkRow("Broken", "LAMA+LLM", "auc", None, None, "ts")
        ]
        summary = summarize(rows)
        mean, n = summary.tool_means["LAMA+LLM"]
        assert n == 2
        assert mean == pytest.approx((0.745 + 0.798) / 2)
        rendered = summary.render()
        assert "-" in rendered.splitlines()[3]  # the Broken row renders "-"
        assert "(n=2)" in rendered

    def test_render_has_avg_row(self):
        rendered = summarize(published_rows()).render()
        assert rendered.splitlines()[0].startswith("dataset")
        assert rendered.splitlines()[-1].startswith("Avg score")
        assert "0.839" in rendered.splitlines()[-1]

    def test_quartile_columns(self):
        quartiles = {ds: (0.7, 0.75, 0.8) for ds in PUBLISHED_DATASETS}
        rendered = summarize(published_rows(), quartiles=quartiles).render()
        assert "Q25" in rendered.splitlines()[0]
        assert "0.750" in rendered

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError):
            summarize([])


class TestCsv:
    def test_append_and_reread_round_trip(self, tmp_path):
        path = tmp_path / "benchmark_results.csv"
        rows = published_rows()[:3] + [BenchmarkRow("x", "t", "rmse", None, None, "ts")]
        append_rows(path, rows[:2])
        append_rows(path, rows[2:])  # append-only: header written once
        back = read_rows(path)
        assert back == rows

    def test_header_schema(self, tmp_path):
        path = tmp_path / "b.csv"
        append_rows(path, published_rows()[:1])
        assert path.read_text().splitlines()[0] == "dataset,tool,metric_name,raw_score,nps,timestamp"

    def test_quartile_file(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("dataset,q25,q50,q75\nTitanic,0.766,0.775,0.778\n")
        assert read_quartiles(path) == {"Titanic": (0.766, 0.775, 0.778)}


def make_bundle_dir(root, name, frame, metric="auc", description="predict Purchased"):
    bundle = root / name
    bundle.mkdir(parents=True)
    write_csv(frame, bundle / "train.csv")
    n = len(frame)
    write_csv(frame.drop(columns=["Purchased"]).head(20), bundle / "test.csv")
    write_csv(frame[["row_key", "Purchased"]].head(20), bundle / "sample_submission.csv")
    (bundle / "description.txt").write_text(description)
    (bundle / "bundle.json").write_text(json.dumps({"name": name, "metric": metric}))
    return bundle


class TestBundles:
    def test_load_bundle(self, tmp_path):
        make_bundle_dir(tmp_path, "demo", make_binary_frame(40))
        bundle = load_bundle(tmp_path / "demo")
        assert bundle.name == "demo"
        assert bundle.metric_name == "auc"
        assert bundle.train_path.exists()

    def test_unknown_metric_rejected(self, tmp_path):
        make_bundle_dir(tmp_path, "demo", make_binary_frame(40), metric="vibes")
        with pytest.raises(UnknownMetric):
            load_bundle(tmp_path / "demo")

    def test_discover(self, tmp_path):
        make_bundle_dir(tmp_path, "a", make_binary_frame(40))
        make_bundle_dir(tmp_path, "b", make_binary_frame(40, seed=9))
        assert [b.name for b in discover_bundles(tmp_path)] == ["a", "b"]


class TestRunBenchmark:
    def _scripted_gateway(self, config):
        # enough exchanges for reflect on any bundle plus codegen on any skeleton
        gateway, provider = make_gateway(config)
        provider.add(REFLECTION_RESPONSE, template_id="reflection")
        provider.add(PLANNER_RESPONSE, template_id="planner")
        return gateway, provider

    def test_two_bundles_two_tools(self, tmp_path, config):
        import dataclasses

        config = dataclasses.replace(config, workdir_root=tmp_path / "sessions")
        root = tmp_path / "bundles"
        make_bundle_dir(root, "alpha", make_binary_frame(60, seed=1))
        make_bundle_dir(root, "beta", make_binary_frame(60, seed=2))
        csv_path = tmp_path / "benchmark_results.csv"

        # codegen responses must match each bundle's skeleton; the offline
        # provider handles arbitrary skeletons, so use it for bench cells
        from lads.gateway import LLMGateway
        from lads.offline import OfflineProvider

        gateway = LLMGateway(provider=OfflineProvider(), config=config)
        rows = run_benchmark(
            discover_bundles(root), ["codegen", "stub"], seed=7,
            gateway=gateway, config=config, csv_path=csv_path,
        )
        assert len(rows) == 4
        assert read_rows(csv_path) == rows
        assert all(r.raw_score is not None for r in rows)
        for row in rows:
            direction = metric_direction(row.metric_name)
            assert row.nps == pytest.approx(normalize_score(row.raw_score, direction))

    def test_rerun_same_seed_identical_modulo_timestamp(self, tmp_path, config):
        import dataclasses

        from lads.gateway import LLMGateway
        from lads.offline import OfflineProvider

        config = dataclasses.replace(config, workdir_root=tmp_path / "sessions")
        root = tmp_path / "bundles"
        make_bundle_dir(root, "alpha", make_binary_frame(60, seed=1))
        runs = []
        for attempt in range(2):
            gateway = LLMGateway(provider=OfflineProvider(), config=config)
            rows = run_benchmark(
                discover_bundles(root), ["codegen", "stub"], seed=5,
                gateway=gateway, config=config, csv_path=tmp_path / f"out-{attempt}.csv",
            )
            runs.append([(r.dataset, r.tool, r.metric_name, r.raw_score, r.nps) for r in rows])
        assert runs[0] == runs[1]

    def test_failed_cell_records_empty_raw_score(self, tmp_path, config):
        import dataclasses

        config = dataclasses.replace(config, workdir_root=tmp_path / "sessions")
        root = tmp_path / "bundles"
        make_bundle_dir(root, "alpha", make_binary_frame(60, seed=1))
        csv_path = tmp_path / "benchmark_results.csv"
        gateway, _ = make_gateway(config)  # no exchanges: every cell fails loudly
        rows = run_benchmark(
            discover_bundles(root), ["codegen"], seed=7,
            gateway=gateway, config=config, csv_path=csv_path,
        )
        assert len(rows) == 1
        assert rows[0].raw_score is None and rows[0].nps is None
        assert "-" in summarize(rows).render()
