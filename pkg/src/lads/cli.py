"""Headless command line mirror of the service API.

    lads run --dataset train.csv --query "predict Survived"
    lads bench --bundles DIR --tools codegen,stub --seed 42
    lads serve --port 8000
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .bench import discover_bundles, read_quartiles, run_benchmark, summarize
from .config import Config
from .errors import LadsError, LoopBudgetExhausted
from .gateway import LLMGateway, ScriptedExchange, ScriptedProvider
from .session import run_turn, start_session


def _build_gateway(args, config: Config) -> LLMGateway:
    if getattr(args, "scripted", None):
        exchanges = [
            ScriptedExchange(
                response=e["response"],
                template_id=e.get("template_id"),
                contains=e.get("contains"),
            )
            for e in json.loads(Path(args.scripted).read_text())
        ]
        return LLMGateway(provider=ScriptedProvider(exchanges), config=config)
    return LLMGateway(config=config)


def _base_config(args) -> Config:
    config = Config()
    if getattr(args, "provider", None):
        config.provider = args.provider
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, split_seed=args.seed, code_seed=args.seed)
    if getattr(args, "workdir", None):
        config.workdir_root = Path(args.workdir)
    if getattr(args, "offline_engines", False) or config.provider == "offline":
        # without real engines installed, offline sessions route LAMA/FEDOT
        # to the deterministic stub adapter
        config.engine_map = {"LAMA": "stub", "FEDOT": "stub"}
    return config


def cmd_run(args) -> int:
    config = _base_config(args)
    gateway = _build_gateway(args, config)
    state = start_session(args.query, dataset_path=args.dataset, config=config, gateway=None)
    print(f"session {state.session_id} in {state.workdir}")
    try:
        result = run_turn(gateway, state, config=config)
    except LoopBudgetExhausted as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        if exc.best is not None:
            print(f"best attempt kept in {exc.best.workdir}", file=sys.stderr)
        return 1
    except LadsError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1

    if result.answer is not None:
        print(result.answer)
    if result.nps is not None:
        print(f"metric raw={result.nps.raw_score} nps={result.nps.nps:.4f}")
    if result.predictions is not None:
        print(f"predictions: {result.predictions}")
    if result.code is not None:
        code_path = state.workdir / "solution_final.py"
        code_path.write_text(result.code)
        print(f"code: {code_path}")
    if result.report is not None:
        report_path = state.workdir / "report.md"
        report_path.write_text(result.report)
        print(f"report: {report_path}")
    print("events:")
    for event in state.events.events:
        print(f"  [{event.seq}] {event.step_name}: {event.plain_summary}")
    return 0


def cmd_bench(args) -> int:
    config = _base_config(args)
    gateway = _build_gateway(args, config)
    bundles = discover_bundles(args.bundles)
    if not bundles:
        print(f"no bundles found under {args.bundles}", file=sys.stderr)
        return 1
    tools = [t.strip() for t in args.tools.split(",") if t.strip()]
    rows = run_benchmark(
        bundles, tools, seed=args.seed, gateway=gateway, config=config, csv_path=args.out
    )
    quartiles = read_quartiles(args.quartiles) if args.quartiles else None
    print(summarize(rows, quartiles=quartiles).render())
    print(f"\n{len(rows)} rows appended to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = _base_config(args)
    app = create_app(config=config, benchmark_csv=args.benchmark_csv)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lads", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one query against a dataset")
    p_run.add_argument("--dataset", required=False, help="path to csv/xlsx/parquet training data")
    p_run.add_argument("--query", required=True, help="natural-language task description")
    p_run.add_argument("--provider", choices=["offline", "scripted", "openai"], default=None)
    p_run.add_argument("--scripted", help="JSON file of scripted exchanges")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workdir", help="session workdir root")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="benchmark tools over task bundles")
    p_bench.add_argument("--bundles", required=True, help="directory of bundle subdirectories")
    p_bench.add_argument("--tools", required=True, help="comma-separated tool ids (codegen, stub, lama, fedot)")
    p_bench.add_argument("--seed", type=int, default=42)
    p_bench.add_argument("--out", default="benchmark_results.csv")
    p_bench.add_argument("--quartiles", help="optional leaderboard quartile csv")
    p_bench.add_argument("--provider", choices=["offline", "scripted", "openai"], default=None)
    p_bench.add_argument("--scripted", help="JSON file of scripted exchanges")
    p_bench.add_argument("--workdir", help="session workdir root")
    p_bench.set_defaults(func=cmd_bench)

    p_serve = sub.add_parser("serve", help="start the HTTP API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--provider", choices=["offline", "scripted", "openai"], default=None)
    p_serve.add_argument("--benchmark-csv", dest="benchmark_csv", default="benchmark_results.csv")
    p_serve.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
