from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import make_binary_frame, make_regression_frame, write_csv

from lads.config import Config
from lads.gateway import LLMGateway, ScriptedProvider
from lads.intake import load


@pytest.fixture
def config(tmp_path) -> Config:
    return Config(
        provider="scripted",
        workdir_root=tmp_path / "sessions",
        exec_timeout=90.0,
        retry_base_delay=0.01,
    )


@pytest.fixture
def binary_csv(tmp_path) -> Path:
    return write_csv(make_binary_frame(), tmp_path / "train.csv")


@pytest.fixture
def regression_csv(tmp_path) -> Path:
    return write_csv(make_regression_frame(), tmp_path / "sale_train.csv")


@pytest.fixture
def binary_table(binary_csv, config):
    return load(binary_csv, config=config)


def make_gateway(config: Config, exchanges=None) -> tuple[LLMGateway, ScriptedProvider]:
    provider = ScriptedProvider(exchanges or [])
    return LLMGateway(provider=provider, config=config), provider


@pytest.fixture
def scripted(config):
    return make_gateway(config)


def pytest_runtest_logreport(report):
    # acceptance criteria print one visible pass/fail line each
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}", flush=True)
