"""Minimal OpenAI-compatible chat-completions client for question synthesis."""

from __future__ import annotations

import os
import threading

import httpx

from .augment import LLMConfig, MaskedTriplet
from .errors import GeneratorError


class ChatClient:
    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None,
        instruction: str,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.model = model
        self.instruction = instruction
        self.url = base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    @classmethod
    def from_config(cls, cfg: LLMConfig, transport: httpx.BaseTransport | None = None) -> "ChatClient":
        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise GeneratorError(f"environment variable {cfg.api_key_env} is not set")
        return cls(cfg.base_url, cfg.model, key, cfg.instruction, cfg.timeout, cfg.max_in_flight, transport)

    def close(self) -> None:
        self._http.close()

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": self.instruction},
                {"role": "user", "content": prompt},
            ],
        }

    def question_for(self, m: MaskedTriplet) -> str:
        tid = m.source.id
        with self._slots:
            try:
                resp = self._http.post(self.url, json=self.request_body(m.render()))
            except httpx.HTTPError as exc:
                raise GeneratorError(f"transport failure: {exc}", tid) from exc
        if not resp.is_success:
            raise GeneratorError(f"endpoint returned HTTP {resp.status_code}", tid)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise GeneratorError("malformed chat-completion response", tid) from None
        lines = (content or "").strip().splitlines()
        text = lines[0].strip() if lines else ""
        if not text:
            raise GeneratorError("empty reply", tid)
        return text
