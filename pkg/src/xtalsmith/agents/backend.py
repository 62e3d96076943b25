"""Language-model backends: a scripted offline mock and an HTTP client.

The scripted backend replays fixture responses in order, checking each
prompt for an expected substring, which keeps every agent test fully
offline and deterministic. The HTTP backend speaks a chat-completion
style endpoint with the auth token taken from an environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field


class BackendError(RuntimeError):
    """Backend unreachable, timed out, or returned an unusable payload."""


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 2048


class LanguageBackend:
    """Interface: complete(prompt, params) -> text."""

    def complete(self, prompt: str, params: DecodeParams = DecodeParams()) -> str:
        raise NotImplementedError


@dataclass
class ScriptedBackend(LanguageBackend):
    """Replays scripted responses in order.

    Each script entry is ``{"expect_substring": ..., "response_text": ...}``;
    the expectation (optional) must occur in the incoming prompt, otherwise
    the fixture and the code under test have drifted apart and we fail fast.
    All prompts received are retained for assertions.
    """

    script: list[dict]
    strict: bool = True
    prompts: list[str] = field(default_factory=list)
    cursor: int = 0

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path) as fh:
            return cls(script=json.load(fh))

    def complete(self, prompt: str, params: DecodeParams = DecodeParams()) -> str:
        self.prompts.append(prompt)
        if self.cursor >= len(self.script):
            raise BackendError(
                f"scripted backend exhausted after {len(self.script)} responses"
            )
        entry = self.script[self.cursor]
        self.cursor += 1
        expected = entry.get("expect_substring")
        if self.strict and expected and expected not in prompt:
            raise BackendError(
                f"scripted backend expectation not met at response "
                f"{self.cursor}: {expected!r} not in prompt"
            )
        return entry["response_text"]


@dataclass
class HTTPBackend(LanguageBackend):
    """Chat-completion HTTP client; token read from ``api_key_env``."""

    base_url: str
    model: str
    timeout: float = 60.0
    api_key_env: str = "XTALSMITH_API_KEY"

    def build_request(self, prompt: str, params: DecodeParams) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }

    @staticmethod
    def parse_response(payload: dict) -> str:
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc

    def complete(self, prompt: str, params: DecodeParams = DecodeParams()) -> str:
        import requests

        headers = {}
        token = os.environ.get(self.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.base_url.rstrip("/") + "/chat/completions",
                json=self.build_request(prompt, params),
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise BackendError(f"backend request failed: {exc}") from exc
        return self.parse_response(resp.json())


def backend_from_config(cfg: dict) -> LanguageBackend:
    """Build a backend from config: {"kind": "scripted"|"http", ...}."""
    kind = cfg.get("kind", "http")
    if kind == "scripted":
        return ScriptedBackend.from_file(cfg["fixtures"])
    if kind == "http":
        return HTTPBackend(
            base_url=cfg["base_url"],
            model=cfg.get("model", "default"),
            timeout=float(cfg.get("timeout", 60.0)),
            api_key_env=cfg.get("api_key_env", "XTALSMITH_API_KEY"),
        )
    raise ValueError(f"unknown backend kind {kind!r}")
