"""Long-tailed task stream generation.

Per-task sample counts follow a power law: task t gets max(1,
floor(C * alpha^t)).  Alternatively an imbalance ratio IR (smallest task /
largest task) can be given, from which alpha = IR^(1/(n_tasks-1)).

A stream is built from a class-keyed sample pool.  Each class slot draws a
fixed quota of samples once, independent of ordering, so the ordered and
shuffled variants of the same configuration contain exactly the same
(x, y) pairs; ordering only changes how classes are grouped into tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParameterError, PoolParseError
from .seeding import rng_from

_DRAW_TAG = 101
_ASSIGN_TAG = 102


@dataclass(frozen=True)
class StreamConfig:
    n_tasks: int
    classes_per_task: int
    base_count: int
    alpha_stream: float | None = None
    imbalance_ratio: float | None = None
    ordering: str = "ordered"
    seed: int = 0

    def __post_init__(self):
        if (self.alpha_stream is None) == (self.imbalance_ratio is None):
            raise ParameterError("provide exactly one of alpha_stream / imbalance_ratio")
        if self.n_tasks < 1:
            raise ParameterError("n_tasks must be >= 1")
        if self.classes_per_task < 1:
            raise ParameterError("classes_per_task must be >= 1")
        if self.base_count < self.n_tasks:
            raise ParameterError("base_count must be >= n_tasks")
        if self.alpha_stream is not None and not 0.0 < self.alpha_stream <= 1.0:
            raise ParameterError("alpha_stream must be in (0, 1]")
        if self.imbalance_ratio is not None:
            if not 0.0 < self.imbalance_ratio <= 1.0:
                raise ParameterError("imbalance_ratio must be in (0, 1]")
            if self.n_tasks == 1:
                raise ParameterError("imbalance_ratio is undefined for a single task")
        if self.ordering not in ("ordered", "shuffled"):
            raise ParameterError(f"ordering must be 'ordered' or 'shuffled', got {self.ordering!r}")

    @property
    def alpha(self) -> float:
        if self.alpha_stream is not None:
            return self.alpha_stream
        return self.imbalance_ratio ** (1.0 / (self.n_tasks - 1))

    @property
    def n_classes(self) -> int:
        return self.n_tasks * self.classes_per_task


@dataclass(frozen=True)
class TaskDataset:
    task_id: int
    class_set: tuple[int, ...]
    x: np.ndarray  # (n, dim)
    y: np.ndarray  # (n,) int64

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ParameterError("task features and labels disagree in length")
        if self.y.size and not set(np.unique(self.y)).issubset(self.class_set):
            raise ParameterError("task contains labels outside its class set")

    @property
    def size(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class SamplePool:
    by_class: list[np.ndarray]  # per-class (n_c, dim) feature blocks
    dim: int

    def __post_init__(self):
        for c, block in enumerate(self.by_class):
            if block.shape[0] == 0:
                raise ParameterError(f"class {c} has an empty sample list")
            if block.shape[1] != self.dim:
                raise ParameterError(f"class {c} has dimension {block.shape[1]}, expected {self.dim}")

    @property
    def n_classes(self) -> int:
        return len(self.by_class)


def longtail_sizes(config: StreamConfig) -> list[int]:
    """Per-task sample counts: max(1, floor(C * alpha^t))."""
    alpha = config.alpha
    return [max(1, math.floor(config.base_count * alpha**t)) for t in range(config.n_tasks)]


def class_quotas(config: StreamConfig) -> list[int]:
    """Per-class draw counts: each task's size split evenly over its class
    slots, remainder on the lowest slot."""
    quotas = []
    for size in longtail_sizes(config):
        per = size // config.classes_per_task
        rem = size % config.classes_per_task
        quotas.extend([per + rem] + [per] * (config.classes_per_task - 1))
    return quotas


def synth_gaussians(
    n_classes: int, dim: int, separation: float, pool_per_class: int, seed: int
) -> SamplePool:
    """Isotropic unit-variance Gaussian clusters on seeded random directions."""
    if n_classes < 2:
        raise ParameterError("need at least 2 classes")
    if dim < 1:
        raise ParameterError("dimension must be >= 1")
    if pool_per_class < 1:
        raise ParameterError("pool_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(n_classes):
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        while norm < 1e-8:
            direction = rng.standard_normal(dim)
            norm = np.linalg.norm(direction)
        center = separation * direction / norm
        blocks.append(center + rng.standard_normal((pool_per_class, dim)))
    return SamplePool(by_class=blocks, dim=dim)


def build_stream(pool: SamplePool, config: StreamConfig) -> list[TaskDataset]:
    train, _ = build_stream_split(pool, config, test_per_class=0)
    return train


def build_stream_split(
    pool: SamplePool, config: StreamConfig, test_per_class: int
) -> tuple[list[TaskDataset], list[TaskDataset]]:
    """Build the training stream plus disjoint balanced test tasks.

    Test tasks mirror the train stream's class-to-task assignment with
    test_per_class held-out samples per class.
    """
    n_used = config.n_classes
    if pool.n_classes < n_used:
        raise CapacityError(f"pool has {pool.n_classes} classes, stream needs {n_used}")

    quotas = class_quotas(config)
    draw_rng = rng_from(config.seed, _DRAW_TAG)
    train_sel: list[np.ndarray] = []
    test_sel: list[np.ndarray] = []
    for c in range(n_used):  # fixed class order: draws are ordering-independent
        need = quotas[c] + test_per_class
        avail = pool.by_class[c].shape[0]
        if need > avail:
            raise CapacityError(f"class {c} has {avail} pool samples, stream needs {need}")
        perm = draw_rng.permutation(avail)
        train_sel.append(perm[: quotas[c]])
        test_sel.append(perm[quotas[c] : quotas[c] + test_per_class])

    if config.ordering == "ordered":
        assignment = list(range(n_used))
    else:
        assignment = list(rng_from(config.seed, _ASSIGN_TAG).permutation(n_used))

    train_tasks, test_tasks = [], []
    for t in range(config.n_tasks):
        members = sorted(
            int(assignment[j])
            for j in range(t * config.classes_per_task, (t + 1) * config.classes_per_task)
        )
        train_tasks.append(_gather(pool, t, members, train_sel))
        if test_per_class > 0:
            test_tasks.append(_gather(pool, t, members, test_sel))
    return train_tasks, test_tasks


def _gather(pool: SamplePool, task_id: int, members: list[int], selections) -> TaskDataset:
    xs = [pool.by_class[c][selections[c]] for c in members]
    ys = [np.full(selections[c].shape[0], c, dtype=np.int64) for c in members]
    return TaskDataset(
        task_id=task_id,
        class_set=tuple(members),
        x=np.ascontiguousarray(np.vstack(xs)),
        y=np.concatenate(ys),
    )


def load_pool(path) -> SamplePool:
    """Read a pool from CSV with header `label,f0,...,f{d-1}`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise PoolParseError("empty file", line=1)
    header = lines[0].split(",")
    dim = len(header) - 1
    if dim < 1 or header[0] != "label" or header[1:] != [f"f{i}" for i in range(dim)]:
        raise PoolParseError(f"unknown header {lines[0]!r}", line=1)

    rows: dict[int, list[list[float]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != dim + 1:
            raise PoolParseError(f"expected {dim + 1} fields, found {len(fields)}", line=lineno)
        try:
            label = int(fields[0])
        except ValueError:
            raise PoolParseError(f"label {fields[0]!r} is not an integer", line=lineno) from None
        if label < 0:
            raise PoolParseError(f"label {label} is negative", line=lineno)
        try:
            feats = [float(v) for v in fields[1:]]
        except ValueError:
            raise PoolParseError("non-numeric feature value", line=lineno) from None
        rows.setdefault(label, []).append(feats)

    if not rows:
        raise PoolParseError("file contains a header but no samples", line=2)
    n_classes = max(rows) + 1
    for c in range(n_classes):
        if c not in rows:
            raise PoolParseError(f"class {c} has no samples")
    return SamplePool(
        by_class=[np.array(rows[c], dtype=np.float64) for c in range(n_classes)], dim=dim
    )


def save_pool(pool: SamplePool, path) -> None:
    """Write a pool in the CSV schema; floats use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label," + ",".join(f"f{i}" for i in range(pool.dim)) + "\n")
        for c, block in enumerate(pool.by_class):
            for row in block:
                fh.write(f"{c}," + ",".join(repr(float(v)) for v in row) + "\n")
