"""Fixed-capacity episodic replay memory.

Two interchangeable policies:

* ``vanilla``: classic streaming reservoir sampling, one insert decision per
  sample as it arrives.
* ``uncertainty``: a task-end phase that walks candidates from most to least
  uncertain; each of the s_c iterations draws the best unconsumed candidate,
  accepts it with a probability that balances old-task sizes against the
  iteration count, and on acceptance evicts a uniformly random victim when
  the memory is full.

Every uncertainty-phase iteration is recorded in an audit trail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .stream import TaskDataset
from .uncertainty import ScoredSample

POLICIES = ("vanilla", "uncertainty")


@dataclass
class BufferEntry:
    x: np.ndarray
    y: int
    task_id: int
    mi_at_insert: float
    unique_id: int

    @staticmethod
    def make(x, y, task_id, sample_index, mi=float("nan")) -> "BufferEntry":
        return BufferEntry(
            x=np.asarray(x, dtype=np.float64),
            y=int(y),
            task_id=task_id,
            mi_at_insert=mi,
            unique_id=(task_id << 32) | sample_index,
        )


@dataclass
class AuditRecord:
    task_id: int
    iteration: int
    candidate_id: int
    probability: float
    accepted: bool
    evicted_id: int | None


@dataclass
class BufferState:
    capacity: int
    policy: str = "uncertainty"
    entries: list[BufferEntry] = field(default_factory=list)
    iteration_count: int = 0  # N_c: iterations inside the current task's phase
    prev_task_sizes: list[int] = field(default_factory=list)
    total_seen: int = 0  # stream position, used by the vanilla policy

    def __post_init__(self):
        if self.capacity < 1:
            raise ParameterError("buffer capacity must be >= 1")
        if self.policy not in POLICIES:
            raise ParameterError(f"policy must be one of {POLICIES}, got {self.policy!r}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def is_full(self) -> bool:
        return len(self.entries) >= self.capacity

    def ids(self) -> set[int]:
        return {e.unique_id for e in self.entries}


def sample_in_probability(state: BufferState) -> float:
    """Acceptance probability capacity / (N_c + sum_i s_i * softmax(-s)_i).

    The softmax runs over previously completed task sizes in log space with
    max subtraction; with nothing completed and no iterations done the
    probability is 1 (initial fill).
    """
    sizes = np.asarray(state.prev_task_sizes, dtype=np.float64)
    weighted = 0.0
    if sizes.size:
        shifted = -sizes + sizes.min()  # == -s_i - max(-s_j)
        w = np.exp(shifted)
        w /= w.sum()
        weighted = float(sizes @ w)
    denom = state.iteration_count + weighted
    if denom <= 0.0:
        return 1.0
    return min(1.0, state.capacity / denom)


def next_candidate(
    sorted_scores: list[ScoredSample], state: BufferState, consumed: set[int] | None = None
) -> ScoredSample | None:
    """Best-ranked sample not yet in the buffer and not yet consumed this
    phase; None when the task is exhausted."""
    consumed = consumed or set()
    buffered = state.ids()
    for s in sorted_scores:
        if s.sample_index in consumed:
            continue
        uid = (sorted_scores[0].x.shape and 0) or 0  # placeholder, replaced below
    for s in sorted_scores:
        if s.sample_index not in consumed:
            return s
    return None


def task_end_update(
    state: BufferState,
    task: TaskDataset,
    sorted_scores: list[ScoredSample],
    rng: np.random.Generator,
) -> list[AuditRecord]:
    """Run the uncertainty policy's sample-in / sample-out phase for one task."""
    if state.policy != "uncertainty":
        raise ParameterError("task_end_update applies to the uncertainty policy")
    if len(sorted_scores) != task.size:
        raise ParameterError("scores do not cover the task")

    state.iteration_count = 0
    buffered = state.ids()
    consumed: set[int] = set()
    audit: list[AuditRecord] = []

    for iteration in range(1, task.size + 1):
        candidate = None
        for s in sorted_scores:
            uid = (task.task_id << 32) | s.sample_index
            if s.sample_index not in consumed and uid not in buffered:
                candidate = s
                break
        if candidate is None:
            break
        consumed.add(candidate.sample_index)

        p = sample_in_probability(state)
        accepted = bool(rng.random() < p)
        evicted_id = None
        if accepted:
            if state.is_full:
                victim = int(rng.integers(len(state.entries)))
                evicted_id = state.entries[victim].unique_id
                buffered.discard(evicted_id)
                state.entries[victim] = state.entries[-1]
                state.entries.pop()
            entry = BufferEntry.make(
                candidate.x,
                candidate.y,
                task.task_id,
                candidate.sample_index,
                mi=candidate.score.mutual_info,
            )
            state.entries.append(entry)
            buffered.add(entry.unique_id)
        state.iteration_count += 1
        audit.append(
            AuditRecord(
                task_id=task.task_id,
                iteration=iteration,
                candidate_id=(task.task_id << 32) | candidate.sample_index,
                probability=p,
                accepted=accepted,
                evicted_id=evicted_id,
            )
        )

    state.prev_task_sizes.append(task.size)
    state.iteration_count = 0
    return audit


def vanilla_reservoir_insert(
    state: BufferState, entry: BufferEntry, stream_index: int, rng: np.random.Generator
) -> None:
    """Classic reservoir step for the stream_index-th item (1-based)."""
    if stream_index < 1:
        raise ParameterError("stream_index is 1-based")
    if len(state.entries) < state.capacity:
        state.entries.append(entry)
    else:
        slot = int(rng.integers(stream_index))
        if slot < state.capacity:
            state.entries[slot] = entry
    state.total_seen = stream_index


def sample_batch(
    state: BufferState, batch_size: int, rng: np.random.Generator
) -> list[BufferEntry]:
    """Uniform draw without replacement, capped at the buffer occupancy."""
    n = len(state.entries)
    if n == 0:
        return []
    take = min(batch_size, n)
    idx = rng.choice(n, size=take, replace=False)
    return [state.entries[i] for i in idx]


def format_audit_rows(records: list[AuditRecord]) -> list[str]:
    """CSV rows `task_id,iter,candidate_id,P,accepted,evicted_id`."""
    return [
        f"{r.task_id},{r.iteration},{r.candidate_id},{r.probability:.6f},"
        f"{int(r.accepted)},{'' if r.evicted_id is None else r.evicted_id}"
        for r in records
    ]
