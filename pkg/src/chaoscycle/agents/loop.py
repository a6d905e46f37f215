"""Verify-and-retry loop shared by every planner step."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Generic, Optional, TypeVar

from ..domain import DomainError

T = TypeVar("T")


@dataclass(frozen=True)
class Attempt:
    value: Any
    error: Optional[str]


@dataclass
class VerificationLoopResult(Generic[T]):
    value: T
    attempts: int
    transcript: list[Attempt]


@dataclass
class Exhausted(Exception):
    """All attempts failed verification; carries the full attempt transcript."""

    attempts: int
    transcript: list[Attempt] = field(default_factory=list)

    def __str__(self) -> str:
        last = self.transcript[-1].error if self.transcript else "no attempts"
        return f"verification exhausted after {self.attempts} attempts (last error: {last})"


def verification_loop(
    step: Callable[[list[Attempt]], T],
    verify: Callable[[T], Optional[str]],
    max_retries: int,
) -> VerificationLoopResult[T]:
    """Run ``step`` until ``verify`` accepts its output.

    Each failed attempt (output plus error message) is appended to the
    transcript handed to the next ``step`` call, so planners can see what went
    wrong. At most ``max_retries`` attempts; raises Exhausted afterwards.
    """
    if max_retries < 1:
        raise DomainError(f"max_retries must be >= 1, got {max_retries}")
    transcript: list[Attempt] = []
    for attempt_number in range(1, max_retries + 1):
        try:
            value = step(list(transcript))
        except DomainError as exc:
            transcript.append(Attempt(value=None, error=str(exc)))
            continue
        error = verify(value)
        if error is None:
            transcript.append(Attempt(value=value, error=None))
            return VerificationLoopResult(value=value, attempts=attempt_number, transcript=transcript)
        transcript.append(Attempt(value=value, error=error))
    raise Exhausted(attempts=max_retries, transcript=transcript)
