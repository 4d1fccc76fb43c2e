"""Two-stage self-correction protocols and feedback providers.

Stage 1 samples an initial response. What happens in stage 2 depends on the
strategy kind:

- none: nothing; the initial attempt is final.
- ftr_indicator: feedback is a binary trigger. Positive feedback returns the
  initial attempt untouched (zero extra tokens); negative feedback reruns
  the multipath decoder on the original prompt, byte for byte, with no
  appended instructions.
- feedback_as_prompt: negative feedback is written INTO the prompt (the
  packaged template) and the stage-1 sampler decodes the combined input;
  positive feedback is identity.
- critic_prompt / ioe_prompt: the packaged critique template is always
  appended (these strategies get no feedback signal at all).

Feedback providers: ground truth (verify the attempt), a remote judge
service, and a scripted judge that flips the true verdict with configured
false-negative/false-positive rates. The scripted judge draws from a stream
seeded per (seed, task id), so its verdict for a task does not depend on how
many other tasks ran before it.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from random import Random

from .decoding import DecodeResult, MultipathConfig, SamplerConfig, multipath_decode, nucleus_sample
from .errors import ConfigError, MultipathError
from .models import ModelInterface
from .remote import JudgeClient
from .tasks import Dataset, Task, extract_bracket_answer, verify
from .templates import CRITIC, FEEDBACK_CODE, FEEDBACK_MATH, IOE, load_prompt

STRATEGY_KINDS = ("none", "ftr_indicator", "feedback_as_prompt", "critic_prompt", "ioe_prompt")
PROMPT_KINDS = ("feedback_as_prompt", "critic_prompt", "ioe_prompt")

INITIAL = "initial"
CORRECTED = "corrected"


def derive_seed(base_seed: int, task_id: str, stage: int) -> int:
    """Per-(seed, task, stage) sampling seed; stable across runs and
    independent of task order."""
    digest = hashlib.sha256(f"{base_seed}:{stage}:{task_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class Attempt:
    """One model response with its provenance and token accounting."""

    task_id: str
    stage: str  # "initial" | "corrected"
    strategy: str
    decoder_input: str  # exact text the decoder conditioned on
    text: str
    answer: int | float | None
    tokens_generated: int
    steps: int
    verdict: bool | None = None

    def __post_init__(self) -> None:
        if self.stage not in (INITIAL, CORRECTED):
            raise ValueError(f"stage must be 'initial' or 'corrected', got {self.stage!r}")
        if self.tokens_generated < 0 or self.steps < 0:
            raise ValueError("token counters must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "stage": self.stage,
            "strategy": self.strategy,
            "decoder_input": self.decoder_input,
            "text": self.text,
            "answer": self.answer,
            "tokens_generated": self.tokens_generated,
            "steps": self.steps,
            "verdict": self.verdict,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Attempt":
        return cls(**{k: data[k] for k in (
            "task_id", "stage", "strategy", "decoder_input", "text",
            "answer", "tokens_generated", "steps", "verdict",
        )})


@dataclass(frozen=True)
class FeedbackSignal:
    polarity: str  # "positive" | "negative"
    source: str  # "ground_truth" | "judge_service" | "scripted"
    category: str | None = None

    def __post_init__(self) -> None:
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"polarity must be 'positive' or 'negative', got {self.polarity!r}")

    @property
    def negative(self) -> bool:
        return self.polarity == "negative"


@dataclass(frozen=True)
class CorrectionStrategy:
    """Strategy kind plus its stage-2 decoder binding.

    ftr_indicator regenerates with the multipath decoder and therefore
    requires multipath_cfg; the prompt strategies reuse the stage-1 sampler
    by contract, so multipath_cfg must be absent for them.
    """

    kind: str
    multipath_cfg: MultipathConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.kind == "ftr_indicator" and self.multipath_cfg is None:
            raise ConfigError("ftr_indicator requires a multipath decoder config")
        if self.kind != "ftr_indicator" and self.multipath_cfg is not None:
            raise ConfigError(f"{self.kind} binds the stage-1 sampler; multipath_cfg must be None")

    @property
    def needs_feedback(self) -> bool:
        return self.kind in ("ftr_indicator", "feedback_as_prompt")


# ---------------------------------------------------------------------------
# Feedback providers


class FeedbackProvider(ABC):
    source: str

    @abstractmethod
    def feedback(self, task: Task, attempt: Attempt) -> FeedbackSignal:
        ...


class GroundTruthProvider(FeedbackProvider):
    """Noiseless oracle: positive iff the attempt verifies."""

    source = "ground_truth"

    def __init__(self, timeout: float = 30.0):
        self._timeout = timeout

    def feedback(self, task: Task, attempt: Attempt) -> FeedbackSignal:
        ok = verify(task, attempt.text, timeout=self._timeout)
        return FeedbackSignal(polarity="positive" if ok else "negative", source=self.source)


class ScriptedJudgeProvider(FeedbackProvider):
    """Ground truth distorted by configured error rates.

    A truly correct attempt is reported negative with probability fn_rate; a
    truly incorrect one positive with probability fp_rate.
    """

    source = "scripted"

    def __init__(self, fn_rate: float, fp_rate: float, seed: int, timeout: float = 30.0):
        if not 0.0 <= fn_rate <= 1.0:
            raise ValueError(f"fn_rate must be in [0, 1], got {fn_rate}")
        if not 0.0 <= fp_rate <= 1.0:
            raise ValueError(f"fp_rate must be in [0, 1], got {fp_rate}")
        self.fn_rate = fn_rate
        self.fp_rate = fp_rate
        self.seed = seed
        self._timeout = timeout

    def feedback(self, task: Task, attempt: Attempt) -> FeedbackSignal:
        truth = verify(task, attempt.text, timeout=self._timeout)
        rng = Random(derive_seed(self.seed, task.id, stage=0))
        r = rng.random()
        if truth:
            polarity = "negative" if r < self.fn_rate else "positive"
        else:
            polarity = "positive" if r < self.fp_rate else "negative"
        return FeedbackSignal(polarity=polarity, source=self.source)


class JudgeServiceProvider(FeedbackProvider):
    """Remote judge; transport failures propagate, they are not verdicts."""

    source = "judge_service"

    def __init__(self, client: JudgeClient):
        self._client = client

    def feedback(self, task: Task, attempt: Attempt) -> FeedbackSignal:
        verdict, category = self._client.judge(task.id, task.prompt, attempt.text)
        polarity = "positive" if verdict == "correct" else "negative"
        return FeedbackSignal(polarity=polarity, source=self.source, category=category)


# ---------------------------------------------------------------------------
# Stages


def _attempt_from(result: DecodeResult, task: Task, stage: str, strategy: str, decoder_input: str) -> Attempt:
    text = result.vocabulary.decode(result.chosen.tokens)
    return Attempt(
        task_id=task.id,
        stage=stage,
        strategy=strategy,
        decoder_input=decoder_input,
        text=text,
        answer=extract_bracket_answer(text),
        tokens_generated=result.tokens_generated,
        steps=result.steps,
    )


def run_stage1(model: ModelInterface, task: Task, sampler_cfg: SamplerConfig, strategy: str = "none") -> Attempt:
    """Sample the initial response (per-task seed derived from the config seed)."""
    seed = derive_seed(sampler_cfg.seed, task.id, stage=1)
    cfg = replace(sampler_cfg, seed=seed)
    result = nucleus_sample(model, model.vocabulary.encode(task.prompt), cfg)
    return _attempt_from(result, task, INITIAL, strategy, task.prompt)


def collect_feedback(provider: FeedbackProvider, task: Task, attempt: Attempt) -> FeedbackSignal:
    return provider.feedback(task, attempt)


def indicator_correct(
    model: ModelInterface,
    task: Task,
    attempt: Attempt,
    feedback: FeedbackSignal,
    multipath_cfg: MultipathConfig,
) -> Attempt:
    """Stage 2 of the indicator strategy.

    Positive feedback: the initial attempt is final, nothing decoded.
    Negative feedback: regenerate with the multipath decoder on the original
    prompt, unmodified; the feedback text never reaches the model.
    """
    if not feedback.negative:
        return attempt
    result = multipath_decode(model, model.vocabulary.encode(task.prompt), multipath_cfg)
    return _attempt_from(result, task, CORRECTED, attempt.strategy, task.prompt)


def prompt_correct(
    model: ModelInterface,
    task: Task,
    attempt: Attempt,
    strategy: CorrectionStrategy,
    sampler_cfg: SamplerConfig,
    feedback: FeedbackSignal | None = None,
) -> Attempt:
    """Stage 2 of the prompt-based strategies.

    The stage-2 input is prompt, initial response, and correction prompt
    joined by newlines, decoded by the stage-1 sampler under a stage-2 seed.
    feedback_as_prompt applies only on negative feedback (identity
    otherwise) and picks its template by task domain.
    """
    if strategy.kind == "feedback_as_prompt":
        if feedback is None:
            raise ConfigError("feedback_as_prompt requires a feedback signal")
        if not feedback.negative:
            return attempt
        p_cor = load_prompt(FEEDBACK_MATH if task.domain == "math" else FEEDBACK_CODE)
    elif strategy.kind == "critic_prompt":
        p_cor = load_prompt(CRITIC)
    elif strategy.kind == "ioe_prompt":
        p_cor = load_prompt(IOE)
    else:
        raise ConfigError(f"{strategy.kind!r} is not a prompt strategy")

    stage2_input = f"{task.prompt}\n{attempt.text}\n{p_cor}"
    seed = derive_seed(sampler_cfg.seed, task.id, stage=2)
    cfg = replace(sampler_cfg, seed=seed)
    result = nucleus_sample(model, model.vocabulary.encode(stage2_input), cfg)
    return _attempt_from(result, task, CORRECTED, attempt.strategy, stage2_input)


# ---------------------------------------------------------------------------
# Protocol runner


@dataclass(frozen=True)
class ProtocolRun:
    """All (initial, final) pairs in dataset order, plus per-task failures."""

    pairs: tuple[tuple[Attempt, Attempt], ...]
    errors: tuple[tuple[str, str], ...] = ()

    def to_json_lines(self) -> str:
        lines = []
        for initial, final in self.pairs:
            record = {
                "task_id": initial.task_id,
                "initial": initial.to_json_dict(),
                "final": final.to_json_dict(),
            }
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")


def _load_resume(path: Path, strategy_kind: str) -> dict[str, tuple[Attempt, Attempt]]:
    done: dict[str, tuple[Attempt, Attempt]] = {}
    if not path.exists():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        initial = Attempt.from_json_dict(record["initial"])
        final = Attempt.from_json_dict(record["final"])
        if initial.strategy == strategy_kind:
            done[record["task_id"]] = (initial, final)
    return done


def run_protocol(
    model: ModelInterface,
    dataset: Dataset,
    strategy: CorrectionStrategy,
    provider: FeedbackProvider | None,
    sampler_cfg: SamplerConfig,
    workers: int = 1,
    resume_path: str | Path | None = None,
) -> ProtocolRun:
    """Run stage 1 and the strategy's stage 2 over the whole dataset.

    Tasks run in parallel up to ``workers``; results are ordered by dataset
    position regardless, and per-task seeds make the output independent of
    scheduling. A task that raises is recorded under errors and the run
    continues. With ``resume_path``, previously completed tasks (matching
    strategy) are reused and new completions appended.
    """
    if strategy.needs_feedback and provider is None:
        raise ConfigError(f"strategy {strategy.kind!r} requires a feedback provider")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    resume: dict[str, tuple[Attempt, Attempt]] = {}
    log_file = None
    if resume_path is not None:
        resume_path = Path(resume_path)
        resume = _load_resume(resume_path, strategy.kind)
        resume_path.parent.mkdir(parents=True, exist_ok=True)
        log_file = resume_path.open("a", encoding="utf-8")

    def one(task: Task) -> tuple[Attempt, Attempt]:
        initial = run_stage1(model, task, sampler_cfg, strategy=strategy.kind)
        if strategy.kind == "none":
            return initial, initial
        if strategy.kind == "ftr_indicator":
            signal = collect_feedback(provider, task, initial)
            final = indicator_correct(model, task, initial, signal, strategy.multipath_cfg)
            return initial, final
        if strategy.kind == "feedback_as_prompt":
            signal = collect_feedback(provider, task, initial)
            final = prompt_correct(model, task, initial, strategy, sampler_cfg, feedback=signal)
            return initial, final
        final = prompt_correct(model, task, initial, strategy, sampler_cfg)
        return initial, final

    pending = [t for t in dataset.tasks if t.id not in resume]
    results: dict[str, tuple[Attempt, Attempt]] = dict(resume)
    errors: list[tuple[str, str]] = []

    def run_one(task: Task):
        try:
            return task.id, one(task), None
        except (MultipathError, ValueError) as exc:
            return task.id, None, f"{type(exc).__name__}: {exc}"

    if workers == 1:
        outcomes = [run_one(t) for t in pending]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, pending))

    for task_id, pair, error in outcomes:
        if error is not None:
            errors.append((task_id, error))
            continue
        results[task_id] = pair
        if log_file is not None:
            record = {
                "task_id": task_id,
                "initial": pair[0].to_json_dict(),
                "final": pair[1].to_json_dict(),
            }
            log_file.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    if log_file is not None:
        log_file.close()

    ordered = tuple(results[t.id] for t in dataset.tasks if t.id in results)
    errors.sort(key=lambda e: e[0])
    return ProtocolRun(pairs=ordered, errors=tuple(errors))
