"""Monte-Carlo-dropout posterior and entropy-based uncertainty scores.

A sample's score comes from T stochastic forward passes with fresh dropout
masks: the entropy of the mean distribution (total uncertainty), the mean
of the per-pass entropies (aleatoric part), and their gap (epistemic part,
the mutual information between prediction and parameters).  Scores drive
the replay buffer's candidate ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .net import DropoutMask, ModelState, forward, softmax_temp
from .seeding import derive_seed, rng_from
from .stream import TaskDataset

JENSEN_SLACK = 1e-9


@dataclass(frozen=True)
class MCConfig:
    passes: int = 10
    tau1: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.passes < 1:
            raise ParameterError("number of MC passes must be >= 1")
        if self.tau1 <= 0:
            raise ParameterError("tau1 must be > 0")


@dataclass(frozen=True)
class UncertaintyScore:
    mean_probs: np.ndarray
    entropy: float  # H of the mean distribution
    expected_entropy: float  # mean per-pass entropy
    mutual_info: float  # H - expected_H, clamped at 0 within slack


@dataclass(frozen=True)
class ScoredSample:
    sample_index: int
    x: np.ndarray
    y: int
    score: UncertaintyScore


def predictive_entropy(p: np.ndarray) -> float:
    """-sum p ln p in nats, with 0 ln 0 = 0."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0):
        raise ParameterError("probabilities must be non-negative")
    if abs(float(arr.sum()) - 1.0) > 1e-9:
        raise ParameterError(f"probabilities must sum to 1, got {float(arr.sum())!r}")
    nz = arr[arr > 0.0]
    return float(-(nz * np.log(nz)).sum())


def mc_posterior(
    model: ModelState, x: np.ndarray, mc: MCConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-pass predictive distributions over T dropout passes.

    Pass t draws its mask from a generator derived from (mc.seed, t), so
    the result is a pure function of (model, x, mc).
    """
    per_pass = np.empty((mc.passes, model.num_classes))
    for t in range(mc.passes):
        mask = DropoutMask.generate(model.layer_widths, model.dropout_rate, rng_from(mc.seed, t))
        _, logits = forward(model, x, mask)
        per_pass[t] = softmax_temp(logits, mc.tau1)
    mean_probs = np.zeros(model.num_classes)
    for t in range(mc.passes):  # fixed ascending reduction order
        mean_probs += per_pass[t]
    mean_probs /= mc.passes
    return mean_probs, per_pass


def mutual_information(per_pass_probs: np.ndarray) -> UncertaintyScore:
    """Score a sample from its per-pass distributions (one streaming sweep)."""
    arr = np.asarray(per_pass_probs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ShapeError("per-pass probabilities must be a (passes, classes) matrix")
    n_passes = arr.shape[0]
    mean_probs = np.zeros(arr.shape[1])
    entropy_sum = 0.0
    for t in range(n_passes):
        mean_probs += arr[t]
        entropy_sum += predictive_entropy(arr[t])
    mean_probs /= n_passes
    entropy = predictive_entropy(mean_probs)
    expected_entropy = entropy_sum / n_passes
    mi = entropy - expected_entropy
    if mi < -JENSEN_SLACK:
        raise ParameterError(
            f"mutual information {mi} violates Jensen bound; inputs are not distributions"
        )
    mi = min(max(mi, 0.0), entropy)
    return UncertaintyScore(
        mean_probs=mean_probs, entropy=entropy, expected_entropy=expected_entropy, mutual_info=mi
    )


def score_sample(model: ModelState, x: np.ndarray, mc: MCConfig) -> UncertaintyScore:
    _, per_pass = mc_posterior(model, x, mc)
    return mutual_information(per_pass)


def score_and_sort(model: ModelState, task: TaskDataset, mc: MCConfig) -> list[ScoredSample]:
    """Score every sample of a task, sorted by mutual information descending.

    Ties keep original order.  Mask seeds derive from
    (mc.seed, task_id, sample_index, pass), so scoring order is irrelevant.
    """
    if task.size == 0:
        raise ParameterError("cannot score an empty task")
    scored = []
    for k in range(task.size):
        sample_mc = MCConfig(
            passes=mc.passes, tau1=mc.tau1, seed=derive_seed(mc.seed, task.task_id, k)
        )
        score = score_sample(model, task.x[k], sample_mc)
        scored.append(ScoredSample(sample_index=k, x=task.x[k], y=int(task.y[k]), score=score))
    scored.sort(key=lambda s: -s.score.mutual_info)  # stable: ties stay in index order
    return scored


def format_score_rows(task_id: int, scored: list[ScoredSample]) -> list[str]:
    """CSV rows `task_id,sample_index,H,expected_H,MI` (9 significant digits)."""
    return [
        f"{task_id},{s.sample_index},{s.score.entropy:.9g},"
        f"{s.score.expected_entropy:.9g},{s.score.mutual_info:.9g}"
        for s in scored
    ]
