"""Command-line entry point: run, replay, eval, validate and trace."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

from .config import RunConfig, api_key, ensure_parent, resolve_config
from .engine import load_role_library, run_end, run_start, run_task
from .errors import AutoTeamError, ConfigError
from .evaluation import BenchmarkReport, TaskOutcome, load_benchmark, render_table, run_benchmark
from .llm import HttpBackend, Provider, load_script
from .schema import AgentSpec, Origin, Task, TeamDraft, labels, validate_team
from .toolkit import Workspace, default_toolkit
from .trace import TraceRecorder, first_difference, load_run, replay_backend, stats, traces_equal

logger = logging.getLogger("autoteam")


class UsageError(Exception):
    pass


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--backend", choices=("http", "scripted", "replay"))
    p.add_argument("--model")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--script", help="JSONL script (scripted backend) or trace (replay backend)")
    p.add_argument("--temperature", type=float)
    p.add_argument("--drafting-rounds", dest="drafting_rounds", type=int)
    p.add_argument("--refinement-cap", dest="refinement_cap", type=int)
    p.add_argument("--collab-rounds", dest="collab_rounds", type=int)
    p.add_argument("--max-synthesized", dest="max_synthesized", type=int)
    p.add_argument("--reprompt-budget", dest="reprompt_budget", type=int)
    p.add_argument("--budget", type=int, help="dynamic memory budget in estimated tokens")
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--no-forced-final", dest="forced_final", action="store_const", const=False)
    p.add_argument("--workspace")
    p.add_argument("--trace")
    p.add_argument("--role-library", dest="role_library")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autoteam", description="Plan and execute tasks with a "
                                     "generated team of LLM agents.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one task end to end")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--task")
    source.add_argument("--task-file", dest="task_file")
    _add_run_options(run)

    replay = sub.add_parser("replay", help="re-execute a recorded trace and compare")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--out", help="where to write the replayed trace")
    replay.add_argument("--workspace", help="workspace for the replay (default: a temporary directory)")

    ev = sub.add_parser("eval", help="score a trivia benchmark")
    ev.add_argument("--benchmark", required=True)
    ev.add_argument("--n", type=int, choices=(5, 10), help="only tasks with this many questions")
    ev.add_argument("--parallel", type=int, default=1)
    ev.add_argument("--method", default="autoteam")
    ev.add_argument("--baseline", help="JSON report of a baseline run to compare against")
    ev.add_argument("--report", help="write the JSON report here")
    _add_run_options(ev)

    val = sub.add_parser("validate", help="lint a serialized team draft")
    val.add_argument("--draft", required=True)

    tr = sub.add_parser("trace", help="check a trace file")
    tr.add_argument("path")
    tr.add_argument("--stats", action="store_true", help="print event and model-call counts")
    return parser


def _config(args) -> RunConfig:
    keys = RunConfig.__dataclass_fields__
    flags = {k: v for k, v in vars(args).items() if k in keys}
    return resolve_config(flags, args.config)


def make_provider(config: RunConfig) -> Provider:
    if config.backend == "http":
        return HttpBackend(config.base_url, config.model, api_key())
    if not config.script:
        raise ConfigError(f"--script is required for the {config.backend} backend")
    if config.backend == "scripted":
        return load_script(config.script)
    return replay_backend(load_run(config.script))


def _roles(config: RunConfig) -> list[AgentSpec]:
    return load_role_library(config.role_library) if config.role_library else []


def cmd_run(args) -> int:
    config = _config(args)
    if args.task_file:
        try:
            text = Path(args.task_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read task file: {exc}") from exc
    else:
        text = args.task
    if not text.strip():
        raise ConfigError("task text is empty")
    provider = make_provider(config)
    trace_path = ensure_parent(config.trace)
    workspace = Workspace(Path(config.workspace))
    with TraceRecorder(trace_path) as trace:
        try:
            result = run_task(Task(text), provider, config, trace, workspace, role_library=_roles(config))
        except AutoTeamError as exc:
            print(f"error: {exc}\ntrace: {trace_path}", file=sys.stderr)
            return 1
    manifest = trace_path.with_name(trace_path.name + ".manifest.json")
    manifest.write_text(json.dumps({"workspace": str(workspace.root), "files": result.files_written},
                                   indent=2) + "\n", encoding="utf-8")
    print(result.final_answer)
    return 0


def cmd_replay(args) -> int:
    recorded = load_run(args.trace)
    start = run_start(recorded)
    config = RunConfig(backend="replay", **start["config"])
    roles = [AgentSpec.from_blob(b, Origin.SELECTED) for b in start.get("role_library", [])]
    provider = replay_backend(recorded)
    with tempfile.TemporaryDirectory() as tmp:
        workspace = Workspace(Path(args.workspace) if args.workspace else Path(tmp))
        with TraceRecorder(ensure_parent(args.out) if args.out else None) as trace:
            try:
                run_task(Task(start["task"]), provider, config, trace, workspace, role_library=roles,
                         sleep=lambda _: None)
            except AutoTeamError as exc:
                logger.info("replayed run ended with %s", exc)
            replayed = trace.events
    same = traces_equal(recorded, replayed)
    before, after = run_end(recorded), run_end(replayed)
    same_answer = (before or {}).get("final_answer") == (after or {}).get("final_answer")
    identical = same and same_answer
    print(f"identical: {str(identical).lower()}")
    if not identical:
        print(f"first difference at event {first_difference(recorded, replayed)}", file=sys.stderr)
    return 0 if identical else 1


def cmd_eval(args) -> int:
    config = _config(args)
    tasks = load_benchmark(args.benchmark)
    if args.n is not None:
        tasks = [t for t in tasks if t.n == args.n]
        if not tasks:
            raise ConfigError(f"no tasks with n={args.n} in {args.benchmark}")
    roles = _roles(config)
    parallel = max(1, args.parallel)
    shared = None
    if config.backend != "http":
        shared = make_provider(config)
        if parallel > 1:
            logger.warning("scripted and replay backends answer in call order; running sequentially")
            parallel = 1
    trace_base = Path(config.trace)

    def answer(index, task, prompt):
        provider = shared or make_provider(config)
        path = ensure_parent(trace_base.with_name(f"{trace_base.stem}-task{index + 1}{trace_base.suffix}"))
        workspace = Workspace(Path(config.workspace) / f"task{index + 1}")
        with TraceRecorder(path) as trace:
            return run_task(Task(prompt), provider, config, trace, workspace, role_library=roles).final_answer

    report = run_benchmark(tasks, answer, method=args.method, parallel=parallel)
    reports = [report]
    if args.baseline:
        reports.insert(0, _load_report(args.baseline))
    data = report.to_dict()
    if args.report:
        ensure_parent(args.report).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    else:
        print(json.dumps(data, indent=2))
    print(render_table(reports, n=args.n or "", baseline=reports[0].method))
    return 0


def _load_report(path: str) -> BenchmarkReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return BenchmarkReport(data["method"], [TaskOutcome(**t) for t in data["tasks"]])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read baseline report {path}: {exc}") from exc


def cmd_validate(args) -> int:
    try:
        draft = TeamDraft.from_dict(json.loads(Path(args.draft).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: cannot load draft {args.draft}: {exc}", file=sys.stderr)
        return 1
    report = validate_team(draft, default_toolkit().names())
    if report:
        for label in labels(report):
            print(label)
        return 1
    print("ok")
    return 0


def cmd_trace(args) -> int:
    events = load_run(args.path)
    if args.stats:
        print(json.dumps(stats(events), indent=2, sort_keys=True))
    else:
        print(f"ok: {len(events)} events")
    return 0


COMMANDS = {"run": cmd_run, "replay": cmd_replay, "eval": cmd_eval, "validate": cmd_validate,
            "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except AutoTeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
