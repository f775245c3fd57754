"""Isolated execution of pipeline scripts and the metric-emission contract.

Scripts run as child processes with cwd pinned to a per-run workdir, a
wall-clock timeout, and an audit-hook guard (see _guard.py) that blocks
writes outside the workdir. Metrics travel back on stdout as lines in the
frozen grammar ``LADS_METRIC <name>=<decimal>``; everything else on stdout
is free-form log output.
"""

from __future__ import annotations

import os
import re
import signal
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import Config, DEFAULT_CONFIG
from .errors import SandboxSetupError

METRIC_PREFIX = "LADS_METRIC"
_METRIC_LINE_RE = re.compile(
    r"^LADS_METRIC ([A-Za-z0-9_-]+)=([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\r?$"
)

SOLUTION_FILENAME = "solution.py"
_GUARD_FILENAME = "_lads_guard.py"
_OWNER_MARKER = ".lads-owned"
_INTERNAL_NAMES = {SOLUTION_FILENAME, _GUARD_FILENAME, _OWNER_MARKER}
_INTERNAL_DIRS = {"__pycache__", ".tmp"}

GRACE_SECONDS = 1.0


@dataclass
class ExecutionResult:
    exit_code: int
    stdout: str
    stderr: str
    duration: float
    files_created: list[str] = field(default_factory=list)
    timed_out: bool = False


@dataclass(frozen=True)
class MetricEmission:
    name: str
    value: float


def metric_line(name: str, value: float) -> str:
    """Render a metric emission in the frozen wire grammar."""
    return f"{METRIC_PREFIX} {name}={value!r}"


def parse_metrics(stdout: str) -> list[MetricEmission]:
    """Extract metric emissions from stdout.

    Non-matching lines are ignored; a later emission of the same name
    overrides the earlier one.
    """
    found: dict[str, float] = {}
    for line in stdout.splitlines():
        m = _METRIC_LINE_RE.match(line)
        if m:
            found[m.group(1)] = float(m.group(2))
    return [MetricEmission(name, value) for name, value in found.items()]


def prepare_workdir(workdir: str | Path) -> Path:
    """Create (or adopt) a session-owned sandbox workdir."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / _OWNER_MARKER).touch()
    return workdir


def _check_workdir(workdir: Path) -> None:
    if not workdir.exists():
        raise SandboxSetupError(f"workdir does not exist: {workdir}")
    if not workdir.is_dir():
        raise SandboxSetupError(f"workdir is not a directory: {workdir}")
    entries = list(workdir.iterdir())
    if entries and not (workdir / _OWNER_MARKER).exists():
        raise SandboxSetupError(
            f"workdir is non-empty and not session-owned: {workdir}"
        )


def _snapshot(workdir: Path) -> set[str]:
    seen = set()
    for path in workdir.rglob("*"):
        rel = path.relative_to(workdir)
        if rel.parts and rel.parts[0] in _INTERNAL_DIRS:
            continue
        if str(rel) in _INTERNAL_NAMES:
            continue
        if path.is_file():
            seen.add(str(rel))
    return seen


def execute(
    code: str,
    workdir: str | Path,
    timeout: float | None = None,
    config: Config | None = None,
) -> ExecutionResult:
    """Write code to the workdir's solution script and run it confined.

    Timeouts are a result state (timed_out=True, nonzero exit code), not an
    error. Raises SandboxSetupError for unusable workdirs only.
    """
    config = config or DEFAULT_CONFIG
    timeout = timeout if timeout is not None else config.exec_timeout
    workdir = Path(workdir)
    if not workdir.exists():
        prepare_workdir(workdir)
    _check_workdir(workdir)
    (workdir / _OWNER_MARKER).touch()

    (workdir / SOLUTION_FILENAME).write_text(code)
    guard_src = Path(__file__).with_name("_guard.py").read_text()
    (workdir / _GUARD_FILENAME).write_text(guard_src)
    tmpdir = workdir / ".tmp"
    tmpdir.mkdir(exist_ok=True)

    env = dict(os.environ)
    env.update(
        {
            "HOME": str(workdir),
            "TMPDIR": str(tmpdir),
            "TEMP": str(tmpdir),
            "TMP": str(tmpdir),
            "MPLCONFIGDIR": str(tmpdir),
            "XDG_CACHE_HOME": str(tmpdir),
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONUNBUFFERED": "1",
            "LADS_GUARD_ROOT": str(workdir),
            "LADS_GUARD_ALLOW_SUBPROC": "1" if config.allow_subprocess else "0",
            "LADS_GUARD_NO_NET": "1" if config.strict_sandbox else "0",
        }
    )

    before = _snapshot(workdir)
    started = time.monotonic()
    proc = subprocess.Popen(
        [config.interpreter, _GUARD_FILENAME, SOLUTION_FILENAME],
        cwd=str(workdir),
        env=env,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        start_new_session=True,
    )
    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_tree(proc)
        try:
            stdout, stderr = proc.communicate(timeout=GRACE_SECONDS)
        except subprocess.TimeoutExpired:
            stdout, stderr = "", ""
    duration = time.monotonic() - started

    exit_code = proc.returncode if proc.returncode is not None else 124
    if timed_out and exit_code == 0:
        exit_code = 124

    created = sorted(_snapshot(workdir) - before)
    return ExecutionResult(
        exit_code=exit_code,
        stdout=stdout or "",
        stderr=stderr or "",
        duration=duration,
        files_created=created,
        timed_out=timed_out,
    )


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
