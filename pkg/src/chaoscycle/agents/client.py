"""Chat-completion client with prefill, bounded retries, and ledger hookup.

The transport is injectable so tests run against canned responses; the
default transport posts to an OpenAI-style chat completions endpoint
configured through environment variables.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import httpx

from ..domain import CyclePhase, DomainError
from .ledger import CostLedger
from .schemas import OutputSchema, prefill_for

ENV_ENDPOINT = "CHAOSCYCLE_LLM_ENDPOINT"
ENV_API_KEY = "CHAOSCYCLE_LLM_API_KEY"
ENV_MODEL = "CHAOSCYCLE_LLM_MODEL"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ClientConfigError(DomainError):
    pass


class TransportError(DomainError):
    pass


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_tokens: int
    output_tokens: int


# A transport takes the request payload and returns (status, body dict).
Transport = Callable[[dict[str, Any]], tuple[int, dict[str, Any]]]


def http_transport(endpoint: str, api_key: str, timeout: float = 60.0) -> Transport:
    def send(payload: dict[str, Any]) -> tuple[int, dict[str, Any]]:
        try:
            response = httpx.post(
                endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        body = response.json() if response.content else {}
        return response.status_code, body

    return send


@dataclass
class ChatClient:
    """Sends schema-constrained chat requests and records usage per phase."""

    transport: Transport
    model: str
    ledger: CostLedger = field(default_factory=CostLedger)
    max_attempts: int = 3
    backoff_s: float = 0.5
    sleep: Callable[[float], None] = time.sleep
    current_phase: CyclePhase | str = CyclePhase.PRE_PROCESSING

    @classmethod
    def from_env(cls, ledger: Optional[CostLedger] = None) -> "ChatClient":
        endpoint = os.environ.get(ENV_ENDPOINT)
        api_key = os.environ.get(ENV_API_KEY)
        model = os.environ.get(ENV_MODEL, "")
        if not endpoint or not api_key or not model:
            missing = [
                name
                for name, value in (
                    (ENV_ENDPOINT, endpoint),
                    (ENV_API_KEY, api_key),
                    (ENV_MODEL, model),
                )
                if not value
            ]
            raise ClientConfigError(f"missing configuration: {', '.join(missing)}")
        return cls(transport=http_transport(endpoint, api_key), model=model, ledger=ledger or CostLedger())

    def set_phase(self, phase: CyclePhase | str) -> None:
        self.current_phase = phase

    def chat_complete(
        self,
        messages: Sequence[Mapping[str, str]],
        schema: OutputSchema,
        temperature: float = 0.0,
        seed: Optional[int] = None,
    ) -> ChatResponse:
        """Send messages plus the schema prefill; returns raw text and usage.

        Transport failures and retryable statuses are retried with backoff,
        bounded by max_attempts.
        """
        prefill = prefill_for(schema)
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [*map(dict, messages), {"role": "assistant", "content": prefill}],
            "temperature": temperature,
        }
        if seed is not None:
            payload["seed"] = seed

        last_error: Optional[str] = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                status, body = self.transport(payload)
            except TransportError as exc:
                last_error = str(exc)
                status, body = None, {}
            if status is not None and status not in RETRYABLE_STATUS:
                if status != 200:
                    raise TransportError(f"chat endpoint returned {status}: {body}")
                return self._accept(body)
            if status is not None:
                last_error = f"status {status}"
            if attempt < self.max_attempts:
                self.sleep(self.backoff_s * attempt)
        raise TransportError(f"chat transport failed after {self.max_attempts} attempts: {last_error}")

    def _accept(self, body: Mapping[str, Any]) -> ChatResponse:
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {body!r}") from exc
        usage = body.get("usage") or {}
        input_tokens = int(usage.get("prompt_tokens", 0))
        output_tokens = int(usage.get("completion_tokens", 0))
        self.ledger.record(self.current_phase, input_tokens, output_tokens)
        return ChatResponse(text=text, input_tokens=input_tokens, output_tokens=output_tokens)
