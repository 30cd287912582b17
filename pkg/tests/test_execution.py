from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from autoteam.drafting import structural_gate
from autoteam.errors import ExecutionFailed, RefinementFailed, UnknownAgent
from autoteam.execution import ExecutionConfig, Executor, ResultStatus, Selection, run_execution
from autoteam.memory import EntryKind, MemoryStore
from autoteam.schema import StepStatus, Task
from autoteam.toolkit import default_toolkit
from scenarios import (LANGUAGE_EXPERT, PSEUDOCODE, TETRIS_PY, action, final, minimal_scenario, next_step,
                       planner_reply, role, scripted_session, trivia_scenario, write_file)

TOOLS = ["Write File", "Final Output"]
LE_STEP = ("Based on the previous steps, please provide a helpful, relevant, accurate, and detailed response "
           "to the user's original question: X")
NAMES = ["Programmer", "Debugging Expert", "Story Planner", "Researcher", "A", "B", "C"]


def team(steps=None):
    roles = [role(n, f"{n} work") for n in NAMES]
    steps = steps or ["Programmer: write the code.", "Researcher: check facts.", "Story Planner: outline.",
                      f"Language Expert: {LE_STEP}"]
    return structural_gate(planner_reply([LANGUAGE_EXPERT], roles, steps), TOOLS)


def executor(script, workspace, draft=None, **config):
    session = scripted_session(script)
    return Executor(session, draft or team(), Task("the task"), default_toolkit(), workspace, MemoryStore(),
                    ExecutionConfig(**config))


def agent_prompts(ex):
    return [e for e in ex.session.trace.events if e.kind == "prompt" and e.payload["tag"].startswith("agent:")]


def sel(agents, text="do it", index=1):
    return Selection(tuple(agents), text, "", index)


def drafted(scenario):
    return structural_gate(scenario.script[0], TOOLS)


def test_minimal_pipeline(workspace):
    sc = minimal_scenario()
    session = scripted_session(sc.script[3:])
    answer, state = run_execution(session, drafted(sc), Task(sc.task), default_toolkit(), workspace)
    assert answer == sc.final_answer and state.outcome == "done"
    assert [r.status for r in state.results] == [ResultStatus.COMPLETED] * 2


def test_trivia_flow_four_steps_in_order(workspace):
    sc = trivia_scenario()
    session = scripted_session(sc.script[3:])
    answer, state = run_execution(session, drafted(sc), Task(sc.task), default_toolkit(), workspace)
    assert [r.step_index for r in state.results] == [1, 2, 3, 4]
    assert answer == sc.final_answer
    assert len(state.results[3].actions) == 2   # the language expert checks before finishing
    assert "Mars" in state.history_digest and "Leonardo da Vinci" in state.history_digest


def test_failed_step_without_forced_final(workspace):
    never = action("Write File", "not a payload")
    script = [next_step("Programmer", "write the code."), final("code done"),
              next_step("Researcher", "check facts.")] + [never] * 5
    ex = executor(script, workspace, forced_final=False)
    with pytest.raises(ExecutionFailed) as info:
        ex.run()
    assert info.value.details["step"] == 2


def test_select_matches_unfinished_step(workspace):
    ex = executor([next_step("Story Planner", "Outline.")], workspace)
    state_plan = ex.team.plan.copy()
    for i in (1, 2, 4):
        state_plan.mark(i, StepStatus.DONE)
    from autoteam.execution import ExecutionState
    state = ExecutionState(state_plan)
    choice = ex.select_next_step(state)
    assert choice.step_index == 3 and not choice.synthesized
    assert state.plan.status[3] is StepStatus.IN_PROGRESS
    prompt = ex.session.trace.events[0].payload["user_text"]
    assert "3. Story Planner: outline." in prompt and "1. Programmer" not in prompt


def test_select_synthesizes_verification_step(workspace):
    from autoteam.execution import ExecutionState
    ex = executor([next_step("Debugging Expert", "re-verify the game loop")], workspace)
    state = ExecutionState(ex.team.plan.copy())
    choice = ex.select_next_step(state)
    assert choice.synthesized and choice.agent_names == ("Debugging Expert",) and choice.step_index == 5
    assert state.plan.steps[-1].assigned_agents == ("Debugging Expert",)


def test_select_unknown_agent_reprompts(workspace):
    from autoteam.execution import ExecutionState
    ex = executor([next_step("Wizard", "do magic"), next_step("Programmer", "write the code.")], workspace)
    choice = ex.select_next_step(ExecutionState(ex.team.plan.copy()))
    assert choice.step_index == 1
    retry = [e for e in ex.session.trace.events if e.kind == "prompt"][1].payload["user_text"]
    assert "no-agent-named" in retry and "Wizard" in retry


def test_synthesized_bound_falls_back(workspace):
    from autoteam.execution import ExecutionState
    ex = executor([next_step("Debugging Expert", f"verify {i}") for i in range(3)], workspace, max_synthesized=2)
    state = ExecutionState(ex.team.plan.copy())
    picks = [ex.select_next_step(state) for _ in range(3)]
    assert [p.synthesized for p in picks] == [True, True, False]
    assert picks[2].step_index == 1 and len(state.plan.steps) == 6


def test_self_refine_writes_then_finishes(workspace):
    script = [write_file("pseudocode.md", PSEUDOCODE), write_file("tetris.py", TETRIS_PY), final("both written")]
    ex = executor(script, workspace)
    result = ex.self_refine(ex.team.find("Programmer"), sel(["Programmer"]))
    assert result.status is ResultStatus.COMPLETED and len(result.actions) == 3
    assert result.final_output == "both written" and result.actions[-1].is_final
    assert (workspace.root / "tetris.py").read_text() == TETRIS_PY
    # each iteration sees the earlier ones
    second = agent_prompts(ex)[1].payload["user_text"]
    assert "wrote pseudocode.md" in second


def test_self_refine_forced_final(workspace):
    script = [write_file(f"f{i}.txt", str(i)) for i in range(6)]
    ex = executor(script, workspace)
    result = ex.self_refine(ex.team.find("Programmer"), sel(["Programmer"]))
    assert result.status is ResultStatus.FORCED_FINAL and len(result.actions) == 5
    assert result.final_output == "\n\n".join(f"[Programmer #{i}] wrote f{i - 1}.txt (1 bytes)" for i in range(1, 6))
    assert ex.session.provider.remaining == 1


def test_self_refine_without_forced_final(workspace):
    ex = executor([write_file("a", "b")] * 2, workspace, forced_final=False, refinement_cap=2)
    with pytest.raises(RefinementFailed):
        ex.self_refine(ex.team.find("Programmer"), sel(["Programmer"]))


def test_self_correction_after_tool_error(workspace):
    script = [action("Write File", ">>>x.py<<<\nprint(1)"), write_file("x.py", "print(1)"), final("ok")]
    ex = executor(script, workspace)
    result = ex.self_refine(ex.team.find("Programmer"), sel(["Programmer"]))
    assert result.actions[0].observation.startswith("malformed-write-file")
    assert result.status is ResultStatus.COMPLETED and len(result.actions) == 3
    assert "malformed-write-file" in agent_prompts(ex)[1].payload["user_text"]


def test_unparseable_turn_becomes_observation(workspace):
    ex = executor(["junk"] * 3 + [final("done")], workspace)
    result = ex.self_refine(ex.team.find("Programmer"), sel(["Programmer"]))
    assert result.actions[0].observation.startswith("missing-section")
    assert result.status is ResultStatus.COMPLETED and len(result.actions) == 2


def test_tool_outside_agent_toolset(workspace):
    draft = team()
    ex = executor([action("Echo", "hi"), final("done")], workspace, draft=draft)
    ex.toolkit.register_tool(__import__("autoteam.toolkit", fromlist=["ToolDef"]).ToolDef("Echo", "echo"),
                             lambda i, w: i)
    result = ex.self_refine(draft.find("Programmer"), sel(["Programmer"]))
    assert result.actions[0].observation.startswith("unknown-tool")


def test_registered_tool_listed_for_agents_that_have_it(workspace):
    from autoteam.toolkit import ToolDef
    roles = [role("Echoer", "Echoes things", tools=("Echo",))]
    steps = ["Echoer: echo.", f"Language Expert: {LE_STEP}"]
    toolkit = default_toolkit()
    toolkit.register_tool(ToolDef("Echo", "echo the input"), lambda i, w: i)
    draft = structural_gate(planner_reply([LANGUAGE_EXPERT], roles, steps), toolkit.names())
    session = scripted_session([action("echo", "ping"), final("pong")])
    ex = Executor(session, draft, Task("t"), toolkit, workspace)
    result = ex.self_refine(draft.find("Echoer"), sel(["Echoer"]))
    assert result.actions[0].observation == "ping"
    assert "[Echo, Final Output]" in agent_prompts(ex)[0].payload["user_text"]


def test_collaboration_ends_at_first_final(workspace):
    ex = executor([write_file("a.txt", "a"), final("agreed")], workspace)
    result = ex.collaborative_refine([ex.team.find("A"), ex.team.find("B")], sel(["A", "B"]))
    assert [a.agent for a in result.actions] == ["A", "B"]
    assert result.status is ResultStatus.COMPLETED and result.final_output == "agreed"
    assert ex.session.provider.remaining == 0


def test_collaboration_without_consensus(workspace):
    ex = executor([write_file("n.txt", str(i)) for i in range(15)], workspace)
    agents = [ex.team.find(n) for n in "ABC"]
    result = ex.collaborative_refine(agents, sel("ABC"))
    assert len(result.actions) == 15 and result.status is ResultStatus.FORCED_FINAL
    assert [a.agent for a in result.actions] == list("ABC") * 5
    assert [a.iteration for a in result.actions] == [r for r in range(1, 6) for _ in range(3)]


def test_turn_order_follows_assignment(workspace, tmp_path):
    from autoteam.toolkit import Workspace
    script = [write_file("1.txt", "one"), write_file("2.txt", "two"), final("three")]
    transcripts = []
    for order in (("A", "B"), ("B", "A")):
        ex = executor(script, Workspace(tmp_path / "".join(order)))
        result = ex.collaborative_refine([ex.team.find(n) for n in order], sel(order))
        transcripts.append([(a.agent, a.action_input) for a in result.actions])
        prompts = agent_prompts(ex)
        assert [p.payload["tag"] for p in prompts] == [f"agent:{order[0]}", f"agent:{order[1]}",
                                                        f"agent:{order[0]}"]
        # the second speaker sees the first speaker's utterance
        assert f"({order[0]})" in prompts[1].payload["user_text"]
    assert transcripts[0] != transcripts[1]
    assert [t[0] for t in transcripts[0]] == ["A", "B", "A"]


def test_collaboration_needs_two_agents(workspace):
    ex = executor([], workspace)
    with pytest.raises(ValueError):
        ex.collaborative_refine([ex.team.find("A")], sel(["A"]))


def test_dispatch_paths(workspace):
    ex = executor([final("solo"), write_file("p.md", "plan"), final("together")], workspace)
    solo = ex.dispatch_step(sel(["programmer"], index=1))
    pair = ex.dispatch_step(sel(["Story Planner", "Researcher"], index=2))
    assert solo.agents == ("Programmer",) and len(solo.actions) == 1
    assert pair.agents == ("Story Planner", "Researcher") and len(pair.actions) == 2
    assert [e.step_index for e in ex.memory.long_term] == [1, 2]
    with pytest.raises(UnknownAgent):
        ex.dispatch_step(sel(["Nobody"]))


def test_previous_binding_carries_memory(workspace):
    sc = minimal_scenario()
    session = scripted_session(sc.script[3:])
    run_execution(session, drafted(sc), Task(sc.task), default_toolkit(), workspace)
    expert_prompt = [e for e in session.trace.events
                     if e.kind == "prompt" and e.payload["tag"] == "agent:Language Expert"][0]
    assert "100 C at 1 atm." in expert_prompt.payload["user_text"]
    observer = [e for e in session.trace.events if e.kind == "prompt" and e.payload["tag"] == "action-observer"]
    assert "100 C at 1 atm." in observer[1].payload["user_text"]


def test_one_memory_record_per_step(workspace):
    sc = trivia_scenario()
    session = scripted_session(sc.script[3:])
    memory = MemoryStore()
    run_execution(session, drafted(sc), Task(sc.task), default_toolkit(), workspace, memory)
    assert [e.step_index for e in memory.long_term] == [1, 2, 3, 4]
    assert all(e.kind is EntryKind.TASK_RECORD for e in memory.long_term)


def test_config_validation():
    with pytest.raises(ValueError):
        ExecutionConfig(refinement_cap=0)


turns = st.sampled_from([final("done"), write_file("a.txt", "x"), "junk"])


@settings(max_examples=40)
@given(st.lists(turns, min_size=1, max_size=40), st.integers(1, 5))
def test_call_bound(tmp_path_factory, script, cap):
    from autoteam.toolkit import Workspace
    steps = ["A, B: work together.", f"Language Expert: {LE_STEP}"]
    draft = structural_gate(planner_reply([LANGUAGE_EXPERT], [role("A", "a work"), role("B", "b work")], steps),
                            TOOLS)
    selections = [next_step("A, B", "work together."), next_step("Language Expert", LE_STEP)]
    # interleave: selection, then enough agent turns for the worst case
    per_step = cap * 2 * 3
    full = [selections[0]] + (script * per_step)[:per_step]
    session = scripted_session(full + [selections[1]] + [final("end")] * 15)
    ex = Executor(session, draft, Task("t"), default_toolkit(), Workspace(tmp_path_factory.mktemp("w")),
                  config=ExecutionConfig(refinement_cap=cap, collab_rounds=cap))
    try:
        ex.run()
    except Exception as exc:
        assert type(exc).__name__ in ("ScriptExhausted", "ExecutionFailed")
        return
    calls = sum(1 for e in session.trace.events if e.kind == "prompt")
    budget = session.reprompt_budget + 1
    assert calls <= 2 * (cap * 2 * budget) + 2 * budget
