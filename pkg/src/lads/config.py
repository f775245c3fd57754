"""Runtime configuration.

Everything is overridable per-instance; environment variables supply
deployment defaults (LADS_LLM_PROVIDER, LADS_LLM_MODEL, LADS_LLM_API_KEY,
LADS_LLM_BASE_URL, LADS_INTERPRETER, LADS_WORKDIR_ROOT).
"""

from __future__ import annotations

import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path


def _env(name: str, default: str) -> str:
    return os.environ.get(name, default)


@dataclass
class Config:
    # gateway
    provider: str = field(default_factory=lambda: _env("LADS_LLM_PROVIDER", "offline"))
    model: str = field(default_factory=lambda: _env("LADS_LLM_MODEL", "offline"))
    api_key: str = field(default_factory=lambda: _env("LADS_LLM_API_KEY", ""))
    base_url: str = field(default_factory=lambda: _env("LADS_LLM_BASE_URL", ""))
    temperature: float = 0.0
    max_output_tokens: int = 4096
    llm_timeout: float = 120.0
    retry_limit: int = 3
    retry_base_delay: float = 0.2

    # intake
    datetime_parse_threshold: float = 0.95
    eda_text_budget: int = 4000
    head_cell_limit: int = 40

    # workflow
    max_fix_iterations: int = 5
    split_seed: int = 42
    code_seed: int = 42

    # sandbox
    interpreter: str = field(default_factory=lambda: _env("LADS_INTERPRETER", sys.executable))
    workdir_root: Path = field(
        default_factory=lambda: Path(
            _env("LADS_WORKDIR_ROOT", os.path.join(tempfile.gettempdir(), "lads-sessions"))
        )
    )
    exec_timeout: float = 600.0
    automl_overhead: float = 60.0
    strict_sandbox: bool = False  # True also blocks network inside executions
    allow_subprocess: bool = False

    # automl
    default_time_budget: float = 300.0
    min_time_budget: float = 5.0
    # maps router tokens to registered engine ids; tests and offline mode
    # may point both at the stub adapter
    engine_map: dict = field(default_factory=lambda: {"LAMA": "lama", "FEDOT": "fedot"})

    # api
    upload_limit_bytes: int = 256 * 1024 * 1024

    def sandbox_ceiling(self) -> float:
        return self.exec_timeout

    def ensure_workdir_root(self) -> Path:
        self.workdir_root.mkdir(parents=True, exist_ok=True)
        return self.workdir_root


DEFAULT_CONFIG = Config()
