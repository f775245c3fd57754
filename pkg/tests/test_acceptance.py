"""Acceptance suite: one test per shipping criterion, offline only.

Each test prints an ACCEPTANCE <name>: PASS/FAIL line (see conftest) and
pins its tolerance inline."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import lads.codegen as codegen_mod
from lads.automl import AutoMLConfig, BackendParams, run_automl
from lads.bench import (
    Direction,
    discover_bundles,
    normalize_score,
    read_rows,
    run_benchmark,
    summarize,
)
from lads.codegen import (
    BackendKind,
    CodeArtifact,
    VerdictStatus,
    assemble_skeleton,
    check_protected,
    fill_user_region,
    run_codegen,
)
from lads.errors import InvalidConfig, LoopBudgetExhausted
from lads.gateway import LLMGateway, normalize_token
from lads.intake import profile, split_indices
from lads.offline import OfflineProvider
from lads.reflection import parse_reflection
from lads.reporting import export_inference, missing_report_sections
from lads.sandbox import execute, parse_metrics, prepare_workdir
from lads.session import run_turn, start_session

from conftest import make_gateway
from synth import (
    GOOD_MODEL_FILL,
    PLANNER_RESPONSE,
    REFLECTION_RESPONSE,
    REPORTER_RESPONSE,
    broken_codegen_response,
    good_codegen_response,
    make_binary_frame,
)
from test_automl import ROUTER_FIXTURE
from test_bench import make_bundle_dir
from test_codegen import build_mutants
from test_sandbox import _hash_tree, adversarial_scripts


def test_eq1_normalization_suite():
    """normalize_score matches direct formula evaluation to 1e-12 on 1e4 inputs."""
    started = time.monotonic()
    rng = np.random.RandomState(123)
    losses = rng.uniform(0, 1e6, 10_000)
    for s in losses:
        assert abs(normalize_score(float(s), Direction.SMALLER_BETTER) - 1.0 / (1.0 + s)) <= 1e-12
    gains = rng.uniform(-10, 10, 10_000)
    for s in gains:
        assert normalize_score(float(s), Direction.LARGER_BETTER) == s
    # spot values
    assert normalize_score(0.0, Direction.SMALLER_BETTER) == 1.0
    assert abs(normalize_score(0.25, Direction.SMALLER_BETTER) - 0.8) <= 1e-12
    assert normalize_score(0.780, Direction.LARGER_BETTER) == 0.780
    assert time.monotonic() - started < 1.0


def test_published_table_average():
    """summarize reproduces the published eight-score average 0.839 +- 0.0005."""
    started = time.monotonic()
    from test_bench import published_rows

    mean, n = summarize(published_rows()).tool_means["LAMA+LLM"]
    assert n == 8
    assert abs(mean - 0.839) <= 0.0005
    assert time.monotonic() - started < 1.0


@pytest.fixture
def acceptance_config(tmp_path):
    from lads.config import Config

    return Config(provider="scripted", workdir_root=tmp_path / "sessions", exec_timeout=90.0)


def _wire_codegen_turn(provider, state, config, codegen_response=None):
    provider.add("BUILD", template_id="dispatch")
    provider.add("NO", template_id="automl_router")
    provider.add(REFLECTION_RESPONSE, template_id="reflection")
    provider.add(PLANNER_RESPONSE, template_id="planner")
    reflection = parse_reflection(REFLECTION_RESPONSE, profile(state.dataset))
    skeleton = assemble_skeleton(
        reflection, BackendKind.GENERIC, state.dataset_csv, config=config, id_column="row_key"
    )
    provider.add(
        codegen_response or good_codegen_response(skeleton.body), template_id="codegen"
    )
    provider.add(REPORTER_RESPONSE, template_id="reporter")
    return skeleton


def test_end_to_end_offline_build(acceptance_config, tmp_path):
    """Scripted provider + seeded 200-row binary dataset: one CODEGEN BUILD
    turn yields VALID artifact, submission, six-section report, inference
    package, in under 120 s."""
    started = time.monotonic()
    config = acceptance_config
    csv_path = tmp_path / "train.csv"
    make_binary_frame(n=200, seed=7).to_csv(csv_path, index=False)

    gateway, provider = make_gateway(config)
    state = start_session("predict Purchased", dataset_path=csv_path, config=config)
    _wire_codegen_turn(provider, state, config)
    result = run_turn(gateway, state, config=config)

    pipeline = state.artifacts[-1]
    assert pipeline.validated and pipeline.verdict.status is VerdictStatus.VALID
    assert result.predictions is not None and result.predictions.exists()
    assert result.code is not None
    assert missing_report_sections(result.report) == []
    inference_dir = pipeline.workdir.parent / "inference"
    assert (inference_dir / "predict.py").exists()
    assert (inference_dir / "model_artifact").exists()
    assert provider.calls > 0  # scripted mode, zero network activity
    assert time.monotonic() - started < 120.0


def test_self_repair_reaches_valid_at_generation_one(acceptance_config, tmp_path, monkeypatch):
    """Broken generation 0 (undefined name) + scripted fix: VALID at
    generation 1 with exactly 2 sandbox executions."""
    config = acceptance_config
    csv_path = tmp_path / "train.csv"
    frame = make_binary_frame(n=200, seed=7)
    frame.to_csv(csv_path, index=False)

    executions = {"n": 0}
    real_execute = codegen_mod.execute

    def counting(*args, **kwargs):
        executions["n"] += 1
        return real_execute(*args, **kwargs)

    monkeypatch.setattr(codegen_mod, "execute", counting)

    gateway, provider = make_gateway(config)
    reflection = parse_reflection(REFLECTION_RESPONSE, profile_from_csv(csv_path, config))
    skeleton = assemble_skeleton(
        reflection, BackendKind.GENERIC, csv_path, config=config, id_column="row_key"
    )
    provider.add(broken_codegen_response(skeleton.body), template_id="codegen")
    provider.add(good_codegen_response(skeleton.body), template_id="fix_solution")

    pipeline = run_codegen(
        gateway, reflection, frame, csv_path, tmp_path / "loop", config=config
    )
    assert pipeline.validated
    assert pipeline.artifact.generation == 1
    assert executions["n"] == 2


def profile_from_csv(csv_path, config):
    from lads.intake import load

    return profile(load(csv_path, config=config), config=config)


def test_loop_budget_exhaustion(acceptance_config, tmp_path, monkeypatch):
    """All-broken scripted fixture terminates with LoopBudgetExhausted after
    exactly max_fix_iterations improve cycles (default 5)."""
    config = acceptance_config
    assert config.max_fix_iterations == 5
    csv_path = tmp_path / "train.csv"
    frame = make_binary_frame(n=200, seed=7)
    frame.to_csv(csv_path, index=False)

    improves = {"n": 0}
    real_improve = codegen_mod.improve

    def counting(*args, **kwargs):
        improves["n"] += 1
        return real_improve(*args, **kwargs)

    monkeypatch.setattr(codegen_mod, "improve", counting)

    gateway, provider = make_gateway(config)
    reflection = parse_reflection(REFLECTION_RESPONSE, profile_from_csv(csv_path, config))
    skeleton = assemble_skeleton(
        reflection, BackendKind.GENERIC, csv_path, config=config, id_column="row_key"
    )
    provider.add(broken_codegen_response(skeleton.body), template_id="codegen")
    provider.add(broken_codegen_response(skeleton.body), template_id="fix_solution")

    with pytest.raises(LoopBudgetExhausted) as err:
        run_codegen(gateway, reflection, frame, csv_path, tmp_path / "loop", config=config)
    assert improves["n"] == config.max_fix_iterations
    assert err.value.best is not None and err.value.best.validated is False


def test_router_protocol_twelve_queries(acceptance_config):
    """12-query fixture (4 per wire token) resolves 12/12 through the
    scripted provider; the token normalizer survives case and punctuation."""
    from lads.automl import route

    gateway, provider = make_gateway(acceptance_config)
    for query, response, _ in ROUTER_FIXTURE:
        provider.add(response, template_id="automl_router", contains=query)
    correct = sum(route(gateway, q) is expected for q, _, expected in ROUTER_FIXTURE)
    assert correct == 12

    for raw, want in [
        ("LAMA", "LAMA"), (" lama.\n", "LAMA"), ("Lama!", "LAMA"), ("\tFEDOT  ", "FEDOT"),
        ("fedot...", "FEDOT"), ("No", "NO"), ('"NO"', "NO"), ("  no?!\r\n", "NO"),
    ]:
        assert normalize_token(raw) == want


def test_config_extraction_contract(acceptance_config):
    """Config extraction produces exactly the reg/r2-score and binary/auc
    pairings; a pairing violation raises InvalidConfig."""
    from lads.automl import extract_config

    columns = ["Id", "LotArea", "SalePrice", "Survived"]

    gateway, provider = make_gateway(acceptance_config)
    provider.add(
        '{"task_type":"reg","target":"SalePrice","task_metric":"r2-score"}',
        template_id="automl_config", contains="house sale price",
    )
    cfg = extract_config(gateway, "predict house sale price", "train.csv", columns, "head")
    assert (cfg.task_type, cfg.task_metric) == ("reg", "r2-score")

    gateway2, provider2 = make_gateway(acceptance_config)
    provider2.add(
        '{"task_type":"binary","target":"Survived","task_metric":"auc"}',
        template_id="automl_config",
    )
    cfg2 = extract_config(gateway2, "predict Survived", "train.csv", columns, "head")
    assert (cfg2.task_type, cfg2.task_metric) == ("binary", "auc")

    gateway3, provider3 = make_gateway(acceptance_config)
    provider3.add(
        '{"task_type":"reg","target":"SalePrice","task_metric":"auc"}',
        template_id="automl_config",
    )
    with pytest.raises(InvalidConfig):
        extract_config(gateway3, "predict price", "train.csv", columns, "head")


def test_split_invariants_500_pairs():
    """For 500 random (n, seed) pairs: 8:2 sizes, disjointness, coverage,
    and same-seed determinism."""
    rng = np.random.RandomState(2024)
    for _ in range(500):
        n = int(rng.randint(2, 10_001))
        seed = int(rng.randint(0, 2**32))
        train_idx, val_idx = split_indices(n, seed)
        assert len(train_idx) == int(np.floor(0.8 * n))
        assert len(val_idx) == n - len(train_idx)
        merged = np.concatenate([train_idx, val_idx])
        assert len(np.unique(merged)) == n
        again = split_indices(n, seed)
        assert np.array_equal(train_idx, again[0]) and np.array_equal(val_idx, again[1])


def test_protected_region_mutation_suite(acceptance_config, tmp_path):
    """Identity passes; a 20-mutant suite (deleted comments, edited frozen
    lines, reordered regions) is 100% detected."""
    config = acceptance_config
    csv_path = tmp_path / "train.csv"
    make_binary_frame(n=50, seed=7).to_csv(csv_path, index=False)
    reflection = parse_reflection(REFLECTION_RESPONSE, profile_from_csv(csv_path, config))
    skeleton = assemble_skeleton(
        reflection, BackendKind.GENERIC, csv_path, config=config, id_column="row_key"
    )
    ok, _ = check_protected(skeleton, CodeArtifact(code=skeleton.body))
    assert ok

    mutants = build_mutants(skeleton)
    assert len(mutants) >= 20
    detected = sum(
        not check_protected(skeleton, CodeArtifact(code=m))[0] for m in mutants
    )
    assert detected == len(mutants)  # 100%


def test_sandbox_isolation_timeout_and_grammar(acceptance_config, tmp_path):
    """Sentinel tree unchanged after 50 adversarial scripts; timeout enforced
    within +1 s; metric grammar golden cases hold."""
    config = acceptance_config
    sentinel = tmp_path / "sentinel"
    (sentinel / "sub").mkdir(parents=True)
    (sentinel / "a.txt").write_text("alpha")
    (sentinel / "b.txt").write_text("beta")
    before = _hash_tree(sentinel)
    scripts = adversarial_scripts(sentinel)
    assert len(scripts) == 50
    for i, code in enumerate(scripts):
        execute(code, prepare_workdir(tmp_path / f"adv-{i}"), timeout=20.0, config=config)
    assert _hash_tree(sentinel) == before

    result = execute("import time\ntime.sleep(30)", prepare_workdir(tmp_path / "slow"),
                     timeout=2.0, config=config)
    assert result.timed_out and result.exit_code != 0
    assert result.duration <= 2.0 + 1.0

    assert [(m.name, m.value) for m in parse_metrics("LADS_METRIC auc=0.8123\n")] == [("auc", 0.8123)]
    assert parse_metrics("LADS_METRIC auc=abc") == []
    assert [(m.name, m.value) for m in parse_metrics("x\nLADS_METRIC rmse=0.41\ny")] == [("rmse", 0.41)]
    assert [(m.name, m.value) for m in parse_metrics("LADS_METRIC a=1\nLADS_METRIC a=2\n")] == [("a", 2.0)]


def test_automl_stub_branch_with_inference_round_trip(acceptance_config, tmp_path):
    """BUILD turn routed LAMA (mapped to the stub adapter) validates with
    auc >= the oracle baseline (0.5 for any constant predictor) and the
    exported package reproduces validation predictions bit-for-bit."""
    config = dataclasses.replace(
        acceptance_config, engine_map={"LAMA": "stub", "FEDOT": "stub"}
    )
    csv_path = tmp_path / "train.csv"
    frame = make_binary_frame(n=200, seed=7)
    frame.to_csv(csv_path, index=False)

    gateway, provider = make_gateway(config)
    state = start_session(
        "predict Purchased with LightAutoML", dataset_path=csv_path, config=config
    )
    provider.add("BUILD", template_id="dispatch")
    provider.add("LAMA", template_id="automl_router")
    provider.add(REFLECTION_RESPONSE, template_id="reflection")
    provider.add(PLANNER_RESPONSE, template_id="planner")
    provider.add(
        '{"task_type":"binary","target":"Purchased","task_metric":"auc"}',
        template_id="automl_config",
    )
    provider.add('{"time_budget": 30}', template_id="gen_params")
    provider.add(REPORTER_RESPONSE, template_id="reporter")
    result = run_turn(gateway, state, config=config)

    pipeline = state.artifacts[-1]
    assert pipeline.validated
    oracle_baseline = 0.5  # constant predictor auc, exact
    assert pipeline.metrics["auc"] >= oracle_baseline

    # round trip through the exported inference package
    package_dir = pipeline.workdir.parent / "inference"
    assert (package_dir / "predict.py").exists()
    _, val_idx = split_indices(len(frame), config.split_seed)
    val = frame.iloc[val_idx].reset_index(drop=True)
    input_csv = tmp_path / "val.csv"
    val.drop(columns=["Purchased"]).to_csv(input_csv, index=False)
    out_csv = tmp_path / "rt.csv"
    proc = subprocess.run(
        [sys.executable, str(package_dir / "predict.py"), str(input_csv), str(out_csv)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    session_preds = pd.read_csv(pipeline.predictions_path, dtype=str)["Purchased"]
    exported_preds = pd.read_csv(out_csv, dtype=str)["Purchased"]
    assert (session_preds == exported_preds).all()


def test_benchmark_csv_two_by_two(acceptance_config, tmp_path):
    """Bench over 2 bundles x 2 tools appends 4 schema-valid rows; the
    failed-cell policy renders '-' in summarize output."""
    config = dataclasses.replace(acceptance_config, workdir_root=tmp_path / "sessions")
    root = tmp_path / "bundles"
    make_bundle_dir(root, "alpha", make_binary_frame(60, seed=1))
    make_bundle_dir(root, "beta", make_binary_frame(60, seed=2))
    csv_path = tmp_path / "benchmark_results.csv"

    gateway = LLMGateway(provider=OfflineProvider(), config=config)
    rows = run_benchmark(
        discover_bundles(root), ["codegen", "stub"], seed=7,
        gateway=gateway, config=config, csv_path=csv_path,
    )
    assert len(rows) == 4
    header = csv_path.read_text().splitlines()[0]
    assert header == "dataset,tool,metric_name,raw_score,nps,timestamp"
    assert read_rows(csv_path) == rows

    # failed cell: a gateway with no exchanges fails the cell loudly
    failing_gateway, _ = make_gateway(config)
    failed_rows = run_benchmark(
        discover_bundles(root)[:1], ["codegen"], seed=7,
        gateway=failing_gateway, config=config, csv_path=tmp_path / "failed.csv",
    )
    assert failed_rows[0].raw_score is None
    rendered = summarize(rows + failed_rows).render()
    assert "-" in rendered
    assert rendered.splitlines()[-1].startswith("Avg score")
