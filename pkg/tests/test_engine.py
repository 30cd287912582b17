from __future__ import annotations

import pytest

from autoteam.config import RunConfig
from autoteam.engine import load_role_library, run_end, run_start, run_task
from autoteam.errors import ConfigError, ReplayDivergence, ScriptExhausted
from autoteam.llm import ScriptedBackend
from autoteam.schema import AgentSpec, Origin
from autoteam.toolkit import Workspace
from autoteam.trace import TraceEvent, TraceRecorder, check_pairing, load_run, replay_backend, traces_equal
from scenarios import LANGUAGE_EXPERT, minimal_scenario, record, replay, tetris_scenario, trivia_scenario


def test_tetris_run(tmp_path):
    sc = tetris_scenario()
    result, events = record(sc, tmp_path / "ws")
    assert result.final_answer == sc.final_answer
    assert result.files_written == ["pseudocode.md", "tetris.py", "ui.py"]
    assert result.drafting.round == 2 and len(result.execution.results) == sc.steps
    assert {a.name for a in result.drafting.draft.roles} >= {"Game Designer", "UI Designer", "Programmer",
                                                              "Tester", "Language Expert"}
    for name, text in sc.files.items():
        assert (tmp_path / "ws" / name).read_text() == text
    end = run_end(events)
    assert end["event"] == "run-end" and end["files_written"] == result.files_written
    check_pairing(events)


def test_run_start_holds_replay_inputs(tmp_path):
    config = RunConfig(backend="scripted", refinement_cap=4)
    _, events = record(minimal_scenario(), tmp_path, config=config)
    start = run_start(events)
    assert start["task"] == minimal_scenario().task
    assert start["config"] == config.protocol() and start["config"]["refinement_cap"] == 4
    assert "backend" not in start["config"] and "workspace" not in start["config"]


def test_every_request_uses_configured_temperature(tmp_path):
    _, events = record(trivia_scenario(), tmp_path)
    prompts = [e for e in events if e.kind == "prompt"]
    assert prompts and all(e.payload["temperature"] == 0.0 for e in prompts)


@pytest.mark.parametrize("make", [tetris_scenario, trivia_scenario, minimal_scenario])
def test_replay_is_identical(tmp_path, make):
    sc = make()
    first, recorded = record(sc, tmp_path / "a", tmp_path / "run.jsonl")
    loaded = load_run(tmp_path / "run.jsonl")
    assert traces_equal(loaded, recorded)
    second, replayed = replay(loaded, sc.task, tmp_path / "b")
    assert second.final_answer == first.final_answer
    assert traces_equal(recorded, replayed)
    for name in sc.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _mutate(events, seq, text):
    out = []
    for e in events:
        if e.seq == seq:
            e = TraceEvent(e.seq, e.phase, e.kind, dict(e.payload, text=text), e.fingerprint, e.correlation)
        out.append(e)
    return out


def test_altered_completion_diverges_on_next_prompt(tmp_path):
    sc = trivia_scenario()
    _, events = record(sc, tmp_path / "a")
    completions = [e for e in events if e.kind == "completion" and e.phase == "execution"]
    # the astronomy expert's answer feeds the next observer prompt
    target = completions[1]
    assert "Mars" in target.payload["text"]
    altered = _mutate(events, target.seq, target.payload["text"].replace("Mars", "Venus"))
    prompt_index = [e.correlation for e in events if e.kind == "prompt"].index(target.correlation)
    with pytest.raises(ReplayDivergence) as info:
        replay(altered, sc.task, tmp_path / "b")
    assert info.value.call_index == prompt_index + 2
    assert info.value.field == "user_text"


def test_drafting_only_trace_runs_out_at_execution(tmp_path):
    sc = minimal_scenario()
    _, events = record(sc, tmp_path / "a")
    drafting = [e for e in events if e.phase == "drafting"]
    backend = replay_backend(drafting)
    trace = TraceRecorder()
    with pytest.raises(ScriptExhausted):
        run_task(sc.task, backend, RunConfig(backend="replay"), trace, Workspace(tmp_path / "b"),
                 sleep=lambda _: None)
    failure = run_end(trace.events)
    assert failure["event"] == "run-failed" and failure["code"] == "script-exhausted"
    errors = [e for e in trace.events if e.kind == "error"]
    assert errors[0].phase == "execution" and errors[0].payload["tag"] == "action-observer"


def test_config_change_diverges(tmp_path):
    sc = minimal_scenario()
    _, events = record(sc, tmp_path / "a")
    with pytest.raises(ReplayDivergence) as info:
        replay(events, sc.task, tmp_path / "b", config=RunConfig(backend="replay", temperature=0.5))
    assert info.value.call_index == 1 and info.value.field == "temperature"


def test_role_library_reaches_planner(tmp_path):
    lib = tmp_path / "roles.json"
    import json
    lib.write_text(json.dumps([LANGUAGE_EXPERT]))
    roles = load_role_library(lib)
    assert [r.name for r in roles] == ["Language Expert"] and roles[0].origin is Origin.SELECTED
    sc = minimal_scenario()
    with TraceRecorder() as trace:
        run_task(sc.task, ScriptedBackend(sc.script), RunConfig(backend="scripted"), trace,
                 Workspace(tmp_path / "ws"), role_library=roles, sleep=lambda _: None)
    planner = next(e for e in trace.events if e.kind == "prompt")
    assert "Polish the collected results" in planner.payload["user_text"]
    assert run_start(trace.events)["role_library"] == [r.to_blob() for r in roles]


def test_role_library_from_prose(tmp_path):
    import json
    lib = tmp_path / "roles.txt"
    lib.write_text("Our roles:\n" + json.dumps(LANGUAGE_EXPERT) + "\nend")
    assert [r.name for r in load_role_library(lib)] == ["Language Expert"]
    with pytest.raises(ConfigError):
        load_role_library(tmp_path / "missing.json")


def test_run_start_missing():
    with pytest.raises(ConfigError):
        run_start([])


def test_to_blob_round_trip():
    spec = AgentSpec.from_blob(LANGUAGE_EXPERT, Origin.SELECTED)
    assert AgentSpec.from_blob(spec.to_blob(), Origin.SELECTED) == spec
