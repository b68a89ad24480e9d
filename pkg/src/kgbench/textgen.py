"""Uniform client for OpenAI-compatible chat-completion servers plus a
deterministic offline mock.

Real endpoints are configured through KS_LLM_ENDPOINT / KS_LLM_API_KEY /
KS_LLM_MODEL. Endpoint URLs starting with "mock:" never touch the network;
they route to the deterministic mock, which is what every test suite uses.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import requests

from .errors import AuthFailure, MalformedVerdict, RateLimited, Unreachable

ENV_ENDPOINT = "KS_LLM_ENDPOINT"
ENV_API_KEY = "KS_LLM_API_KEY"
ENV_MODEL = "KS_LLM_MODEL"


class Finish(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    system: str = ""
    max_tokens: int = 256
    temperature: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class GenResponse:
    text: str
    finish: Finish

    def __post_init__(self) -> None:
        if self.finish is Finish.ERROR and self.text:
            raise ValueError("error responses carry no text")


@dataclass(frozen=True)
class JudgeVerdict:
    passed: bool
    score: float
    rationale: str


@dataclass(frozen=True)
class Endpoint:
    url: str
    api_key: str = ""
    model: str = "default"

    @classmethod
    def from_env(cls) -> "Endpoint":
        url = os.environ.get(ENV_ENDPOINT, "")
        if not url:
            raise Unreachable(f"{ENV_ENDPOINT} is not set")
        return cls(
            url=url,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=os.environ.get(ENV_MODEL, "default"),
        )

    @property
    def is_mock(self) -> bool:
        return self.url.startswith("mock:")


_WORDS = (
    "graph", "probe", "update", "branch", "record", "answer", "model",
    "option", "relation", "scale", "node", "template", "context", "fact",
)


def mock_complete(req: GenRequest, seed: int = 0) -> GenResponse:
    """Deterministic, platform-stable stand-in for a completion server.

    The text is a pure function of (prompt, seed); the embedded digest makes
    distinct seeds produce distinct text even on identical prompts.
    """
    digest = hashlib.sha256(f"{seed}\x1f{req.prompt}".encode("utf-8")).hexdigest()
    picks = [_WORDS[int(digest[i : i + 2], 16) % len(_WORDS)] for i in range(0, 12, 2)]
    text = f"mock({digest[:12]}): " + " ".join(picks)
    return GenResponse(text=text, finish=Finish.STOP)


def _mock_dispatch(endpoint: Endpoint, req: GenRequest) -> GenResponse:
    behavior = endpoint.url.partition(":")[2]
    seed = req.seed if req.seed is not None else 0
    if behavior == "judge-pass":
        return GenResponse("VERDICT: PASS\nSCORE: 1.0\nRATIONALE: meets the rubric", Finish.STOP)
    if behavior == "judge-fail":
        return GenResponse("VERDICT: FAIL\nSCORE: 0.0\nRATIONALE: misses the rubric", Finish.STOP)
    if behavior == "prose":
        return GenResponse("The answer seems broadly reasonable to me.", Finish.STOP)
    return mock_complete(req, seed)


class LLMClient:
    """Shareable handle with retry, backoff and a bounded in-flight pool."""

    def __init__(
        self,
        endpoint: Endpoint,
        max_retries: int = 4,
        backoff: float = 0.25,
        timeout: float = 30.0,
        max_in_flight: int = 4,
    ) -> None:
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, req: GenRequest) -> GenResponse:
        if self.endpoint.is_mock:
            return _mock_dispatch(self.endpoint, req)
        with self._slots:
            return self._post_with_retries(req)

    # generations are read-only, so retrying a failed POST duplicates no
    # side effects
    def _post_with_retries(self, req: GenRequest) -> GenResponse:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.prompt})
        body = {
            "model": self.endpoint.model,
            "messages": messages,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        url = self.endpoint.url.rstrip("/") + "/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"

        rate_limited = False
        last_error: Optional[str] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 429:
                rate_limited = True
                last_error = "429 Too Many Requests"
                continue
            if resp.status_code >= 500:
                last_error = f"server error {resp.status_code}"
                continue
            try:
                doc = resp.json()
                choice = doc["choices"][0]
                text = choice["message"]["content"] or ""
                finish = choice.get("finish_reason", "stop")
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = f"malformed completion payload: {exc}"
                continue
            return GenResponse(
                text=text, finish=Finish.LENGTH if finish == "length" else Finish.STOP
            )
        if rate_limited:
            raise RateLimited(f"rate limited after {self.max_retries + 1} attempts")
        raise Unreachable(f"endpoint unreachable: {last_error}")

    def generate(self, prompt: str, seed: Optional[int] = None, system: str = "") -> str:
        """Convenience wrapper returning plain text."""
        return self.complete(GenRequest(prompt=prompt, system=system, seed=seed)).text


DEFAULT_RUBRIC = (
    "Judge whether the answer follows the task instructions and stays "
    "factually consistent with the prompt. Reply with exactly two lines: "
    "'VERDICT: PASS' or 'VERDICT: FAIL', then 'SCORE: <number between 0 and 1>'."
)


def _parse_verdict(text: str) -> Optional[tuple[bool, float, str]]:
    verdict: Optional[bool] = None
    score: Optional[float] = None
    rationale: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        upper = stripped.upper()
        if upper.startswith("VERDICT:"):
            token = upper.partition(":")[2].strip()
            if token in ("PASS", "FAIL"):
                verdict = token == "PASS"
        elif upper.startswith("SCORE:"):
            try:
                score = float(stripped.partition(":")[2].strip())
            except ValueError:
                return None
        elif stripped:
            rationale.append(stripped)
    if verdict is None or score is None or not 0.0 <= score <= 1.0:
        return None
    return verdict, score, " ".join(rationale)


def judge_response(
    client: LLMClient,
    task_prompt: str,
    model_answer: str,
    rubric: str = DEFAULT_RUBRIC,
    threshold: float = 0.5,
) -> JudgeVerdict:
    """Score an answer with an LLM judge; one reprompt on malformed output."""
    if not rubric:
        raise ValueError("rubric must be non-empty")
    prompt = (
        f"{rubric}\n\nTASK:\n{task_prompt}\n\nANSWER:\n{model_answer}\n"
    )
    for attempt in range(2):
        if attempt:
            prompt += (
                "\nYour previous reply was unparseable. Respond with exactly "
                "'VERDICT: PASS|FAIL' then 'SCORE: <0..1>'.\n"
            )
        reply = client.complete(GenRequest(prompt=prompt, max_tokens=64))
        parsed = _parse_verdict(reply.text)
        if parsed is not None:
            _, score, rationale = parsed
            return JudgeVerdict(passed=score >= threshold, score=score, rationale=rationale)
    raise MalformedVerdict("judge produced no parseable verdict after a reprompt")
