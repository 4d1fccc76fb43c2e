"""Wire adapters: remote model servers and the judge service.

Model protocol: request {"prompt_tokens": [ints], "prefix_tokens": [ints]}
answered by {"logprobs": [numbers, length V]}, carried either over HTTP POST
or as one JSON line each way on a byte stream (e.g. a subprocess pipe).
Logprobs are validated for shape and normalization on receipt; a null entry
stands for probability zero (JSON has no -inf).

Judge protocol: HTTP POST <base>/judge with {"task_id", "prompt",
"response"}, answered by {"verdict": "correct"|"incorrect", "category"?}.

Transport failures (unreachable, timeout, 5xx) raise TransportError and are
retried; malformed payloads (bad JSON, wrong length, unnormalized rows, 4xx)
raise ProtocolError immediately. Neither is ever mapped to a verdict.
"""

from __future__ import annotations

import json
import math
import time
import urllib.error
import urllib.request
from typing import IO

from .errors import ProtocolError, TransportError
from .models import ModelInterface, StepDistribution, Vocabulary

NORMALIZATION_TOL = 1e-9


def _parse_distribution(payload: object, vocab_size: int, origin: str) -> StepDistribution:
    if not isinstance(payload, dict) or "logprobs" not in payload:
        raise ProtocolError(f"{origin}: response must be an object with 'logprobs'")
    raw = payload["logprobs"]
    if not isinstance(raw, list) or len(raw) != vocab_size:
        got = len(raw) if isinstance(raw, list) else type(raw).__name__
        raise ProtocolError(f"{origin}: 'logprobs' must be a list of length {vocab_size}, got {got}")
    probs = []
    for i, lp in enumerate(raw):
        if lp is None:
            probs.append(0.0)
            continue
        if not isinstance(lp, (int, float)):
            raise ProtocolError(f"{origin}: logprob {i} is not a number")
        probs.append(math.exp(lp))
    total = math.fsum(probs)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ProtocolError(f"{origin}: logprobs are not normalized (mass {total!r})")
    try:
        return StepDistribution(probs=tuple(probs))
    except ValueError as exc:
        raise ProtocolError(f"{origin}: {exc}") from exc


def _http_post_json(url: str, payload: dict, timeout: float) -> object:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            raw = response.read()
    except urllib.error.HTTPError as exc:
        if 400 <= exc.code < 500:
            raise ProtocolError(f"POST {url}: server rejected request ({exc.code})") from exc
        raise TransportError(f"POST {url}: server error {exc.code}") from exc
    except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
        raise TransportError(f"POST {url}: {exc}") from exc
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"POST {url}: response is not valid JSON: {exc}") from exc


def _with_retries(call, retries: int, backoff: float):
    attempts = retries + 1
    for attempt in range(attempts):
        try:
            return call()
        except TransportError:
            if attempt + 1 == attempts:
                raise
            if backoff > 0.0:
                time.sleep(backoff * (attempt + 1))
    raise AssertionError("unreachable")


class HttpModelClient(ModelInterface):
    """Remote model over HTTP POST. Responses are cached per context, so a
    deterministic server yields a deterministic (and cheaper) client."""

    def __init__(
        self,
        vocabulary: Vocabulary,
        url: str,
        timeout: float = 10.0,
        retries: int = 2,
        backoff: float = 0.0,
    ):
        super().__init__(vocabulary)
        if retries < 0:
            raise ValueError(f"retries must be >= 0, got {retries}")
        self._url = url
        self._timeout = timeout
        self._retries = retries
        self._backoff = backoff
        self._cache: dict[tuple[tuple[int, ...], tuple[int, ...]], StepDistribution] = {}

    def _distribution(self, prompt, prefix):
        key = (prompt, prefix)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        payload = {"prompt_tokens": list(prompt), "prefix_tokens": list(prefix)}
        reply = _with_retries(
            lambda: _http_post_json(self._url, payload, self._timeout),
            self._retries,
            self._backoff,
        )
        dist = _parse_distribution(reply, self._vocabulary.size, f"model at {self._url}")
        self._cache[key] = dist
        return dist


class StreamModelClient(ModelInterface):
    """Remote model over a line-delimited stream pair (one JSON object per line).

    Not safe for concurrent use: requests and responses pair up by order on
    the stream.
    """

    def __init__(self, vocabulary: Vocabulary, reader: IO[str], writer: IO[str]):
        super().__init__(vocabulary)
        self._reader = reader
        self._writer = writer
        self._cache: dict[tuple[tuple[int, ...], tuple[int, ...]], StepDistribution] = {}

    def _distribution(self, prompt, prefix):
        key = (prompt, prefix)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        line = json.dumps({"prompt_tokens": list(prompt), "prefix_tokens": list(prefix)})
        try:
            self._writer.write(line + "\n")
            self._writer.flush()
            reply_line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise TransportError(f"model stream: {exc}") from exc
        if not reply_line:
            raise TransportError("model stream closed")
        try:
            reply = json.loads(reply_line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"model stream: response is not valid JSON: {exc}") from exc
        dist = _parse_distribution(reply, self._vocabulary.size, "model stream")
        self._cache[key] = dist
        return dist


class JudgeClient:
    """Client for the judge service; returns verdicts, never guesses them."""

    def __init__(self, base_url: str, timeout: float = 10.0, retries: int = 2, backoff: float = 0.0):
        if retries < 0:
            raise ValueError(f"retries must be >= 0, got {retries}")
        self._url = base_url.rstrip("/") + "/judge"
        self._timeout = timeout
        self._retries = retries
        self._backoff = backoff

    @property
    def url(self) -> str:
        return self._url

    def judge(self, task_id: str, prompt: str, response: str) -> tuple[str, str | None]:
        """Returns (verdict, category); verdict is "correct" or "incorrect"."""
        payload = {"task_id": task_id, "prompt": prompt, "response": response}
        reply = _with_retries(
            lambda: _http_post_json(self._url, payload, self._timeout),
            self._retries,
            self._backoff,
        )
        if not isinstance(reply, dict) or "verdict" not in reply:
            raise ProtocolError(f"judge at {self._url}: response must be an object with 'verdict'")
        verdict = reply["verdict"]
        if verdict not in ("correct", "incorrect"):
            raise ProtocolError(f"judge at {self._url}: unknown verdict {verdict!r}")
        category = reply.get("category")
        if category is not None and not isinstance(category, str):
            raise ProtocolError(f"judge at {self._url}: 'category' must be a string")
        return verdict, category
