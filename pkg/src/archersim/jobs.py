"""Job lifecycle records shared by the pool manager and the simulator."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .matchmaker import Ad


class InvariantViolation(AssertionError):
    """Internal policy or bookkeeping rule broken."""


class JobState(str, enum.Enum):
    QUEUED = "Queued"
    RUNNING = "Running"
    COMPLETED = "Completed"


class Origin(str, enum.Enum):
    LOCAL = "Local"
    FLOCKED = "Flocked"


_ALLOWED = {
    (JobState.QUEUED, JobState.RUNNING),
    (JobState.RUNNING, JobState.COMPLETED),
    (JobState.RUNNING, JobState.QUEUED),
}


@dataclass(frozen=True)
class Assignment:
    job_id: int
    node_id: int
    start_time: float
    origin: Origin


@dataclass
class Job:
    job_id: int
    owner: str
    origin_pool: str
    work: float
    submit_time: float
    ad: Ad
    background: bool = False
    state: JobState = JobState.QUEUED
    history: list[Assignment] = field(default_factory=list)
    completion_time: Optional[float] = None
    preemptions: int = 0
    remaining_work: float = 0.0

    def __post_init__(self):
        if not self.work > 0:
            raise ValueError(f"job {self.job_id}: work must be positive")
        self.remaining_work = self.work

    @property
    def current(self) -> Optional[Assignment]:
        return self.history[-1] if self.state is JobState.RUNNING and self.history else None

    def transition(self, new: JobState) -> None:
        if (self.state, new) not in _ALLOWED:
            raise InvariantViolation(f"job {self.job_id}: illegal transition {self.state.value} -> {new.value}")
        self.state = new

    def start(self, assignment: Assignment) -> None:
        self.transition(JobState.RUNNING)
        self.history.append(assignment)

    def complete(self, now: float) -> None:
        self.transition(JobState.COMPLETED)
        if now < self.submit_time:
            raise InvariantViolation(f"job {self.job_id} completed before submission")
        self.completion_time = now
        self.remaining_work = 0.0
