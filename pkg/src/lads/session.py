"""Session lifecycle and the top-level workflow loop.

A turn is: supervisor dispatch (INTERACT / BUILD / END), then exactly one
route. BUILD turns consult the AutoML router; NO means the LLM writes the
pipeline (codegen route), LAMA/FEDOT means an engine adapter is configured
and run. Every step lands in the session event log; all agent output is
appended to the message history, which is append-only.
"""

from __future__ import annotations

import dataclasses
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import automl as automl_mod
from . import codegen as codegen_mod
from .bench import metric_direction, nps_record, NPSRecord
from .config import Config, DEFAULT_CONFIG
from .errors import (
    EmptyQuery,
    LoopBudgetExhausted,
    NoDatasetBound,
    SessionEnded,
    TurnInProgress,
    UnparseableDecision,
    UnparseableToken,
)
from .gateway import LLMGateway
from .intake import TableHandle, head_text, load, profile
from .reflection import TaskReflection, plan, reflect
from .reporting import EventLog, compile_report, export_inference, fallback_report
from .sandbox import prepare_workdir


class Role(str, Enum):
    USER = "user"
    AGENT = "agent"
    SYSTEM = "system"
    TOOL = "tool"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    agent_name: str | None = None
    timestamp: float = field(default_factory=time.monotonic)

    def __post_init__(self):
        if not self.content:
            raise ValueError("message content must be non-empty")


class ActiveRoute(str, Enum):
    NONE = "NONE"
    INTERACT = "INTERACT"
    CODEGEN = "CODEGEN"
    AUTOML = "AUTOML"


class SessionStatus(str, Enum):
    OPEN = "OPEN"
    RUNNING = "RUNNING"
    DONE = "DONE"
    ENDED = "ENDED"


class Decision(str, Enum):
    INTERACT = "INTERACT"
    BUILD = "BUILD"
    END = "END"


@dataclass
class WorkflowResult:
    predictions: Path | None = None
    code: str | None = None
    report: str | None = None
    answer: str | None = None
    nps: NPSRecord | None = None


@dataclass
class SessionState:
    session_id: str
    messages: list[Message]
    workdir: Path
    dataset: TableHandle | None = None
    dataset_csv: Path | None = None
    active_route: ActiveRoute = ActiveRoute.NONE
    artifacts: list = field(default_factory=list)
    status: SessionStatus = SessionStatus.OPEN
    events: EventLog | None = None
    turn_counter: int = 0
    _turn_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def query(self) -> str:
        return self.messages[0].content

    def last_user_message(self) -> str:
        for msg in reversed(self.messages):
            if msg.role is Role.USER:
                return msg.content
        return self.query

    def append(self, role: Role, content: str, agent_name: str | None = None) -> Message:
        msg = Message(role=role, content=content, agent_name=agent_name)
        self.messages.append(msg)
        return msg


def start_session(
    query: str,
    dataset_path: str | Path | None = None,
    config: Config | None = None,
    gateway: LLMGateway | None = None,
) -> SessionState:
    """Open a session seeded with the user query; optionally bind a dataset."""
    config = config or DEFAULT_CONFIG
    if not query or not query.strip():
        raise EmptyQuery("query must be non-empty")
    session_id = uuid.uuid4().hex[:12]
    workdir = prepare_workdir(config.ensure_workdir_root() / session_id)
    state = SessionState(
        session_id=session_id,
        messages=[Message(role=Role.USER, content=query)],
        workdir=workdir,
    )
    state.events = EventLog(session_id, path=workdir / "events.ndjson", gateway=gateway)
    if dataset_path is not None:
        bind_dataset(state, dataset_path, config=config)
    return state


def bind_dataset(state: SessionState, dataset_path: str | Path, config: Config | None = None) -> TableHandle:
    """Load and bind a dataset; re-binding replaces the previous one.

    A canonical csv copy is materialized in the session workdir so generated
    scripts load one frozen format regardless of the upload format.
    """
    config = config or DEFAULT_CONFIG
    table = load(dataset_path, config=config)
    state.dataset = table
    csv_path = state.workdir / "dataset.csv"
    table.frame.to_csv(csv_path, index=False)
    state.dataset_csv = csv_path
    return table


def dispatch(gateway: LLMGateway, state: SessionState) -> Decision:
    """Supervisor decision: one cheap constrained-token call."""
    if state.status is SessionStatus.ENDED:
        raise SessionEnded("session has ended")
    prompt = gateway.render("dispatch", {"query": state.last_user_message()})
    try:
        token = gateway.complete_token(
            prompt, allowed=[d.value for d in Decision], template_id="dispatch"
        )
    except UnparseableToken as exc:
        raise UnparseableDecision(str(exc)) from exc
    return Decision(token)


def run_turn(gateway: LLMGateway, state: SessionState, config: Config | None = None) -> WorkflowResult:
    """Execute exactly one dispatch and one route; see module docstring."""
    config = config or DEFAULT_CONFIG
    if state.status is SessionStatus.ENDED:
        raise SessionEnded("session has ended")
    with state._turn_lock:
        if state.status is SessionStatus.RUNNING:
            raise TurnInProgress("a turn is already running on this session")
        state.status = SessionStatus.RUNNING

    emit = state.events.emit if state.events else (lambda step, detail: None)
    final_status = SessionStatus.OPEN
    try:
        decision = dispatch(gateway, state)
        emit("dispatch", f"supervisor decision: {decision.value}")
        if decision is Decision.END:
            state.append(Role.AGENT, "Session ended. Goodbye.", agent_name="interactor")
            final_status = SessionStatus.ENDED
            return WorkflowResult(answer="Session ended. Goodbye.")
        if decision is Decision.INTERACT:
            return _interact_turn(gateway, state, emit)
        result = _build_turn(gateway, state, config, emit)
        if result.code is not None:
            final_status = SessionStatus.DONE  # clarification downgrades stay OPEN
        return result
    finally:
        state.active_route = ActiveRoute.NONE
        state.status = final_status


def _interact_turn(gateway: LLMGateway, state: SessionState, emit) -> WorkflowResult:
    state.active_route = ActiveRoute.INTERACT
    conversation = "\n".join(
        f"{m.role.value}{f' ({m.agent_name})' if m.agent_name else ''}: {m.content}"
        for m in state.messages
    )
    answer = gateway.ask("interact", {"conversation": conversation}).strip()
    state.append(Role.AGENT, answer, agent_name="interactor")
    emit("interact", "answered the user's question")
    return WorkflowResult(answer=answer)


def _clarify_turn(state: SessionState, reflection: TaskReflection, emit) -> WorkflowResult:
    """Downgrade an unresolved BUILD to a clarification question."""
    unknowns = []
    if reflection.target_variable is None:
        unknowns.append("which column should be predicted (the target)")
    if reflection.evaluation_metric is None:
        unknowns.append("which evaluation metric to use")
    question = (
        "Before building a pipeline I need one more detail: "
        + " and ".join(unknowns)
        + ". Available columns: "
        + ", ".join(c.name for c in (state.dataset.columns if state.dataset else []))
    )
    state.active_route = ActiveRoute.INTERACT
    state.append(Role.AGENT, question, agent_name="planner")
    emit("plan", "task analysis is unresolved; asked the user to clarify")
    return WorkflowResult(answer=question)


def _build_turn(gateway: LLMGateway, state: SessionState, config: Config, emit) -> WorkflowResult:
    if state.dataset is None:
        raise NoDatasetBound("BUILD turn requires a bound dataset")
    query = state.last_user_message()
    table = state.dataset

    token = automl_mod.route(gateway, query)
    emit("route", f"router token: {token.value}")

    eda = profile(table, config=config)
    inventory = f"{table.source_path.name}: {table.n_rows} rows x {table.n_cols} columns (training data)"
    reflection = reflect(gateway, query, inventory, eda)
    emit("reflect", f"target={reflection.target_variable}, metric={reflection.evaluation_metric}")
    if not reflection.resolved:
        return _clarify_turn(state, reflection, emit)

    build_plan = plan(gateway, reflection)
    emit("plan", "; ".join(name for name, _ in build_plan.steps))
    state.append(
        Role.AGENT,
        "Plan: " + " -> ".join(name for name, _ in build_plan.steps),
        agent_name="planner",
    )

    turn_dir = state.workdir / f"turn-{state.turn_counter:03d}"
    state.turn_counter += 1

    if token is automl_mod.RouteToken.NO:
        state.active_route = ActiveRoute.CODEGEN
        pipeline = _run_codegen_route(gateway, state, reflection, turn_dir, config, emit)
    else:
        state.active_route = ActiveRoute.AUTOML
        pipeline = _run_automl_route(gateway, state, reflection, token, turn_dir, config, emit, query)

    state.artifacts.append(pipeline)
    state.append(
        Role.AGENT,
        f"Validation verdict: {pipeline.verdict.status.value} ({pipeline.verdict.details})",
        agent_name="validator",
    )

    metric_name, metric_value = pipeline.primary_metric()
    record = nps_record(metric_value, metric_direction(metric_name))

    report = _final_report(gateway, state, pipeline, emit)
    pipeline.report = report

    try:
        export_inference(pipeline, turn_dir / "inference")
        emit("export", f"inference package written to {turn_dir / 'inference'}")
    except Exception as exc:
        emit("export", f"inference package skipped: {exc}")

    state.append(
        Role.AGENT,
        f"Done: {metric_name}={metric_value} (normalized score {record.nps:.3f})",
        agent_name="interpreter",
    )
    return WorkflowResult(
        predictions=pipeline.predictions_path,
        code=pipeline.artifact.code,
        report=report,
        nps=record,
    )


def _run_codegen_route(gateway, state, reflection, turn_dir, config, emit):
    try:
        return codegen_mod.run_codegen(
            gateway,
            reflection,
            state.dataset.frame,
            state.dataset_csv,
            turn_dir,
            config=config,
            emit=emit,
        )
    except LoopBudgetExhausted as exc:
        state.append(
            Role.AGENT,
            f"Fix budget exhausted without a valid pipeline: {exc}",
            agent_name="validator",
        )
        raise


def _run_automl_route(gateway, state, reflection, token, turn_dir, config, emit, query):
    table = state.dataset
    cfg = automl_mod.extract_config(
        gateway,
        task=query,
        file_name=table.source_path.name,
        columns=table.column_names,
        head=head_text(table, 5, config=config),
    )
    emit("automl_config", f"task_type={cfg.task_type}, target={cfg.target}, metric={cfg.task_metric}")
    engine_id = config.engine_map.get(token.value, token.value.lower())
    params = automl_mod.gen_params(gateway, reflection, engine_id, config=config)
    emit("automl_params", f"engine={engine_id}, time_budget={params.time_budget}s")

    automl_reflection = automl_mod.reflection_from_config(cfg, reflection.feature_classes, task=query)
    automl_reflection.raw_text = reflection.raw_text or automl_reflection.raw_text
    try:
        return automl_mod.run_automl(
            gateway,
            cfg,
            params,
            train_path=table.source_path,
            workdir=turn_dir,
            config=config,
            emit=emit,
            frame=table.frame,
            reflection=automl_reflection,
            dataset_csv=state.dataset_csv,
        )
    except LoopBudgetExhausted as exc:
        state.append(
            Role.AGENT,
            f"AutoML branch exhausted its fix budget: {exc}",
            agent_name="validator",
        )
        raise


def _final_report(gateway, state, pipeline, emit) -> str:
    metrics = dict(pipeline.metrics)
    try:
        report = compile_report(gateway, pipeline, metrics, pipeline.artifact.code)
        emit("report", f"final report compiled with sections: {sorted(report.sections_present)}")
        return report.markdown
    except Exception as exc:
        report = fallback_report(pipeline, metrics, pipeline.artifact.code)
        emit("report", f"provider report unavailable ({exc}); used the built-in report")
        return report.markdown


# --- forced-route turns for the benchmark harness ---------------------------------


def run_forced_build(
    query: str,
    dataset_path: str | Path,
    tool: str,
    seed: int,
    gateway: LLMGateway | None = None,
    config: Config | None = None,
):
    """One BUILD turn with the route forced by tool id ("codegen" or an engine).

    The dispatch and router calls are skipped so benchmark cells stay
    deterministic; everything downstream is the normal pipeline.
    """
    config = dataclasses.replace(
        config or DEFAULT_CONFIG, split_seed=seed, code_seed=seed
    )
    gateway = gateway or LLMGateway(config=config)
    state = start_session(query, dataset_path=dataset_path, config=config, gateway=None)
    emit = state.events.emit
    table = state.dataset

    eda = profile(table, config=config)
    inventory = f"{table.source_path.name}: {table.n_rows} rows x {table.n_cols} columns (training data)"
    reflection = reflect(gateway, query, inventory, eda)
    if not reflection.resolved:
        raise UnparseableDecision(
            f"reflection did not resolve target/metric for forced tool {tool!r}"
        )
    turn_dir = state.workdir / "turn-000"

    if tool == "codegen":
        return codegen_mod.run_codegen(
            gateway, reflection, table.frame, state.dataset_csv, turn_dir, config=config, emit=emit
        )

    task_type = "binary" if reflection.evaluation_metric in ("accuracy", "auc", "f1", "logloss") else "reg"
    cfg = automl_mod.AutoMLConfig(
        task_type=task_type,
        target=reflection.target_variable,
        task_metric=automl_mod.TASK_METRIC_PAIRING[task_type],
    )
    params = automl_mod.BackendParams(engine_id=tool, time_budget=config.default_time_budget)
    automl_reflection = automl_mod.reflection_from_config(cfg, reflection.feature_classes, task=query)
    automl_reflection.raw_text = reflection.raw_text or automl_reflection.raw_text
    return automl_mod.run_automl(
        gateway,
        cfg,
        params,
        train_path=table.source_path,
        workdir=turn_dir,
        config=config,
        emit=emit,
        frame=table.frame,
        reflection=automl_reflection,
        dataset_csv=state.dataset_csv,
    )
