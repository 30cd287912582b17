"""Trivia creative-writing benchmark: task format, string-match metric, batch runs."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

from .errors import AutoTeamError, BadBenchmark

logger = logging.getLogger(__name__)


def normalize_text(text: str) -> str:
    """Case-fold and collapse whitespace runs to single spaces."""
    return " ".join(text.casefold().split())


@dataclass(frozen=True)
class TriviaQuestion:
    text: str
    answer_variants: tuple[str, ...]

    def __post_init__(self):
        if not self.answer_variants:
            raise ValueError(f"question {self.text!r} has no answer variants")
        if any(not normalize_text(v) for v in self.answer_variants):
            raise ValueError(f"question {self.text!r} has an empty answer variant")


@dataclass(frozen=True)
class TriviaTask:
    topic: str
    questions: tuple[TriviaQuestion, ...]

    def __post_init__(self):
        if not self.questions:
            raise ValueError("a trivia task needs at least one question")

    @property
    def n(self) -> int:
        return len(self.questions)

    @classmethod
    def from_dict(cls, data: dict) -> "TriviaTask":
        if not isinstance(data, dict) or not isinstance(data.get("topic"), str):
            raise ValueError("record needs a string 'topic'")
        questions = data.get("questions")
        if not isinstance(questions, list):
            raise ValueError("record needs a 'questions' list")
        parsed = []
        for q in questions:
            if not isinstance(q, dict) or not isinstance(q.get("text"), str):
                raise ValueError("each question needs a string 'text'")
            variants = q.get("answer_variants")
            if not isinstance(variants, list) or not all(isinstance(v, str) for v in variants):
                raise ValueError("'answer_variants' must be a list of strings")
            parsed.append(TriviaQuestion(q["text"], tuple(variants)))
        return cls(data["topic"], tuple(parsed))

    def to_dict(self) -> dict:
        return {"topic": self.topic,
                "questions": [{"text": q.text, "answer_variants": list(q.answer_variants)}
                              for q in self.questions]}


@dataclass(frozen=True)
class TriviaScore:
    correct_mentions: int
    total: int

    @property
    def score(self) -> float:
        return self.correct_mentions / self.total


def score_output(story: str, task: TriviaTask) -> TriviaScore:
    """A question counts once if any of its variants appears in the story."""
    haystack = normalize_text(story)
    correct = sum(any(normalize_text(v) in haystack for v in q.answer_variants) for q in task.questions)
    return TriviaScore(correct, task.n)


def load_benchmark(path: str | os.PathLike) -> list[TriviaTask]:
    """One JSON object per line: ``{"topic": ..., "questions": [{"text", "answer_variants"}]}``."""
    tasks = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise BadBenchmark(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                tasks.append(TriviaTask.from_dict(json.loads(line)))
            except ValueError as exc:
                raise BadBenchmark(f"{path}:{lineno}: {exc}", line=lineno) from exc
    if not tasks:
        raise BadBenchmark(f"{path}: no tasks")
    return tasks


def task_prompt(task: TriviaTask) -> str:
    lines = [f"Write a short, coherent story about {task.topic}. "
             f"The story must work in the answers to these {task.n} trivia questions:"]
    lines += [f"{i}. {q.text}" for i, q in enumerate(task.questions, start=1)]
    lines.append("Do not list the answers separately; they should appear naturally in the story.")
    return "\n".join(lines)


@dataclass
class TaskOutcome:
    index: int
    topic: str
    correct_mentions: int
    total: int
    score: float
    error: str | None = None


@dataclass
class BenchmarkReport:
    method: str
    outcomes: list[TaskOutcome] = field(default_factory=list)

    @property
    def mean_percent(self) -> float:
        """Unweighted mean of per-task scores, as a percentage."""
        if not self.outcomes:
            return 0.0
        return 100.0 * sum(o.score for o in self.outcomes) / len(self.outcomes)

    @property
    def question_percent(self) -> float:
        total = sum(o.total for o in self.outcomes)
        return 100.0 * sum(o.correct_mentions for o in self.outcomes) / total if total else 0.0

    def to_dict(self) -> dict:
        return {"method": self.method, "mean_percent": self.mean_percent,
                "question_percent": self.question_percent,
                "tasks": [asdict(o) for o in self.outcomes]}


def relative_delta(score: float, baseline: float) -> float:
    """Percentage change of ``score`` relative to ``baseline``."""
    return 100.0 * (score - baseline) / baseline if baseline else 0.0


def run_benchmark(tasks: list[TriviaTask], answer: Callable[[int, TriviaTask, str], str],
                  method: str = "autoteam", parallel: int = 1) -> BenchmarkReport:
    """Score ``answer(index, task, prompt)`` for every task.

    A task whose run raises scores 0 and keeps its error message; the batch
    carries on.
    """
    def one(index: int) -> TaskOutcome:
        task = tasks[index]
        try:
            story = answer(index, task, task_prompt(task))
        except AutoTeamError as exc:
            logger.warning("task %d failed: %s", index, exc)
            return TaskOutcome(index, task.topic, 0, task.n, 0.0, str(exc))
        result = score_output(story, task)
        return TaskOutcome(index, task.topic, result.correct_mentions, result.total, result.score)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(one, range(len(tasks))))
    else:
        outcomes = [one(i) for i in range(len(tasks))]
    return BenchmarkReport(method, outcomes)


def render_table(reports: list[BenchmarkReport], n: int | str = "", baseline: str | None = None) -> str:
    """Plain-text table: method, score %, and relative change against ``baseline``."""
    by_method = {r.method: r for r in reports}
    base = by_method.get(baseline) if baseline else (reports[0] if reports else None)
    score_label = f"Score (%) N={n}" if n else "Score (%)"
    header = f"{'Method':<20} {score_label:>14} {'Delta (%)':>10}"
    rows = [header, "-" * len(header)]
    for report in reports:
        delta = relative_delta(report.mean_percent, base.mean_percent) if base else 0.0
        rows.append(f"{report.method:<20} {report.mean_percent:>14.1f} {delta:>+9.1f}%")
    return "\n".join(rows)
