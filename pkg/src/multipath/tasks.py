"""Benchmark tasks: loading, answer extraction, verification.

Math tasks carry one reference number and are verified by extracting the
last bracketed number from the response; code tasks carry an external
command that receives the response on stdin and signals pass/fail via its
exit code. Infrastructure failures of the command (timeout, cannot spawn)
raise VerificationError instead of counting as "fail".
"""

from __future__ import annotations

import json
import math
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import LoadError, VerificationError
from .templates import MATH_TEMPLATE, load_prompt

DOMAINS = ("math", "code")
NUMERIC_TOL = 1e-6

# A bracketed numeric literal: optional sign, digits with optional thousands
# commas, optional decimal part. Anything else inside brackets is not an
# answer.
_BRACKET = re.compile(r"\[([^\[\]]*)\]")
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")


@dataclass(frozen=True)
class Task:
    id: str
    prompt: str
    domain: str
    answer: int | float | None = None
    verify_cmd: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if (self.answer is None) == (self.verify_cmd is None):
            raise ValueError(f"task {self.id!r}: exactly one of answer/verify_cmd required")
        if self.domain == "math" and self.answer is None:
            raise ValueError(f"task {self.id!r}: math tasks verify against a numeric answer")
        if self.domain == "code" and self.verify_cmd is None:
            raise ValueError(f"task {self.id!r}: code tasks verify via an external command")
        if self.verify_cmd is not None and not self.verify_cmd:
            raise ValueError(f"task {self.id!r}: verify_cmd must not be empty")


@dataclass(frozen=True)
class Dataset:
    name: str
    tasks: tuple[Task, ...]

    def __post_init__(self) -> None:
        if not self.tasks:
            raise ValueError("dataset is empty")
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValueError(f"duplicate task id {dup!r}")

    @property
    def size(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)


def load_tasks(path: str | Path) -> Dataset:
    """Load a JSONL dataset.

    Line schema: {"id": str, "prompt": str, "domain": "math"|"code",
    "answer": number} for math, {"id", "prompt", "domain", "verify_cmd":
    [str]} for code. Math prompts get the bracket-answer instruction template
    prepended. Errors name the offending 1-based line.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read dataset {path}: {exc}") from exc

    template = load_prompt(MATH_TEMPLATE)
    tasks: list[Task] = []
    seen: set[str] = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"dataset {path} line {lineno}"
        try:
            item = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{where}: invalid JSON: {exc}") from exc
        if not isinstance(item, dict):
            raise LoadError(f"{where}: expected an object")
        for key in ("id", "prompt", "domain"):
            if key not in item:
                raise LoadError(f"{where}: missing field {key!r}")
        task_id, prompt, domain = item["id"], item["prompt"], item["domain"]
        if not isinstance(task_id, str) or not isinstance(prompt, str):
            raise LoadError(f"{where}: 'id' and 'prompt' must be strings")
        if domain not in DOMAINS:
            raise LoadError(f"{where}: domain must be one of {DOMAINS}, got {domain!r}")
        if task_id in seen:
            raise LoadError(f"{where}: duplicate task id {task_id!r}")
        seen.add(task_id)

        if domain == "math":
            if "answer" not in item:
                raise LoadError(f"{where}: missing field 'answer'")
            answer = item["answer"]
            if isinstance(answer, bool) or not isinstance(answer, (int, float)):
                raise LoadError(f"{where}: 'answer' must be a number, got {answer!r}")
            tasks.append(Task(
                id=task_id,
                prompt=template + " " + prompt,
                domain="math",
                answer=answer,
            ))
        else:
            if "verify_cmd" not in item:
                raise LoadError(f"{where}: missing field 'verify_cmd'")
            cmd = item["verify_cmd"]
            if not isinstance(cmd, list) or not cmd or not all(isinstance(c, str) for c in cmd):
                raise LoadError(f"{where}: 'verify_cmd' must be a non-empty list of strings")
            tasks.append(Task(
                id=task_id,
                prompt=prompt,
                domain="code",
                verify_cmd=tuple(cmd),
            ))
    if not tasks:
        raise LoadError(f"dataset {path}: no tasks")
    return Dataset(name=path.stem, tasks=tuple(tasks))


def extract_bracket_answer(text: str) -> int | float | None:
    """Number inside the last well-formed bracket pair, or None.

    The content must be a bare numeric literal (thousands commas allowed and
    stripped); later pairs shadow earlier ones, since generated text that
    violates the one-pair instruction usually ends with its conclusion.
    """
    best: int | float | None = None
    for match in _BRACKET.finditer(text):
        body = match.group(1).strip().replace(",", "")
        if _NUMBER.fullmatch(body):
            best = float(body) if "." in body else int(body)
    return best


def numbers_match(got: int | float, want: int | float) -> bool:
    """Reference comparison: exact on integer values, else 1e-6 relative."""
    if float(got).is_integer() and float(want).is_integer():
        return float(got) == float(want)
    return math.isclose(got, want, rel_tol=NUMERIC_TOL, abs_tol=0.0)


def verify(task: Task, text: str, timeout: float = 30.0) -> bool:
    """True when ``text`` answers the task.

    Math: the last bracketed number must match the reference. Code: the
    task's command runs with ``text`` on stdin; exit 0 is a pass, any other
    exit a fail, and timeout/spawn failure raises VerificationError.
    """
    if task.domain == "math":
        got = extract_bracket_answer(text)
        return got is not None and numbers_match(got, task.answer)
    try:
        proc = subprocess.run(
            list(task.verify_cmd),
            input=text,
            text=True,
            capture_output=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        raise VerificationError(f"task {task.id!r}: verifier timed out after {timeout}s") from exc
    except OSError as exc:
        raise VerificationError(f"task {task.id!r}: cannot run verifier {task.verify_cmd}: {exc}") from exc
    return proc.returncode == 0


def verify_all(tasks: Sequence[Task], texts: Sequence[str], timeout: float = 30.0) -> list[bool]:
    if len(tasks) != len(texts):
        raise ValueError(f"{len(tasks)} tasks but {len(texts)} texts")
    return [verify(task, text, timeout=timeout) for task, text in zip(tasks, texts)]
