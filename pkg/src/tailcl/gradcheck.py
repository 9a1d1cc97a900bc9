"""Central finite-difference verification of the analytic gradients.

Used by the test suite and the `tailcl gradcheck` CLI command.  The
numeric side perturbs every model parameter in turn, so it is independent
of the backprop path it checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .losses import LossConfig, _kd, _mce, _proto, _class_index
from .net import DropoutMask, ModelGrads, ModelState, TeacherSnapshot, init_model

EPSILON = 1e-5
REL_TOLERANCE = 1e-4
_REL_FLOOR = 1e-6  # keeps the ratio meaningful where the true gradient is ~0


def param_vector(model: ModelState) -> np.ndarray:
    return np.concatenate([a.ravel() for a in model.parameter_arrays()])

def set_params(model: ModelState, vec: np.ndarray) -> None:
    offset = 0
    for arr in model.parameter_arrays():
        arr[...] = vec[offset : offset + arr.size].reshape(arr.shape)
        offset += arr.size

def grads_vector(grads: ModelGrads, model: ModelState) -> np.ndarray:
    parts = []
    for dw, db in grads.layers:
        parts.extend([dw.ravel(), db.ravel()])
    parts.append(grads.head_w.ravel())
    if grads.head_b is not None:
        parts.append(grads.head_b.ravel())
    return np.concatenate(parts)


def fd_gradient(loss_fn: Callable[[], float], model: ModelState, eps: float = EPSILON) -> np.ndarray:
    """Central differences of loss_fn with respect to every model parameter."""
    base = param_vector(model)
    out = np.empty_like(base)
    for i in range(base.size):
        step = np.zeros_like(base)
        step[i] = eps
        set_params(model, base + step)
        up = loss_fn()
        set_params(model, base - step)
        down = loss_fn()
        out[i] = (up - down) / (2.0 * eps)
    set_params(model, base)
    return out


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(_REL_FLOOR, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


@dataclass
class CheckCase:
    """One randomly drawn model + batch + loss context."""

    model: ModelState
    teacher: TeacherSnapshot
    x_in: np.ndarray
    y_in: np.ndarray
    x_buf: np.ndarray
    y_buf: np.ndarray
    cfg: LossConfig
    old_idx: np.ndarray
    seen_idx: np.ndarray
    mask: DropoutMask | None


def random_case(seed: int, head_kind: str = "cosine") -> CheckCase:
    rng = np.random.default_rng(seed)
    in_dim = int(rng.integers(3, 6))
    hidden = [int(rng.integers(4, 7)) for _ in range(2)]
    n_classes = int(rng.integers(3, 7))
    dropout = float(rng.choice([0.0, 0.3]))
    cfg = LossConfig(
        alpha_kd=float(rng.uniform(0.2, 1.0)),
        beta_proto=float(rng.uniform(0.05, 0.5)),
        tau1=float(rng.uniform(0.3, 1.5)),
        tau2=float(rng.uniform(1.0, 3.0)),
        scale=float(rng.uniform(2.0, 10.0)),
    )
    model = init_model(in_dim, hidden, n_classes, head_kind, cfg.scale, dropout, int(rng.integers(1 << 31)))

    teacher_model = init_model(
        in_dim, hidden, n_classes, head_kind, cfg.scale, dropout, int(rng.integers(1 << 31))
    )
    teacher = TeacherSnapshot.freeze(teacher_model, snapshot_task=0)

    b_in = int(rng.integers(2, 5))
    b_buf = int(rng.integers(2, 4))
    x_in = rng.normal(size=(b_in, in_dim))
    y_in = rng.integers(0, n_classes, size=b_in)
    x_buf = rng.normal(size=(b_buf, in_dim))
    y_buf = rng.integers(0, n_classes, size=b_buf)

    n_old = int(rng.integers(1, n_classes))
    perm = rng.permutation(n_classes)
    old = np.sort(perm[:n_old])
    seen = np.sort(perm[: min(n_classes, n_old + int(rng.integers(1, 3)))])
    old_idx = _class_index(old, n_classes, "old class")
    seen_idx = _class_index(np.union1d(old, seen), n_classes, "seen class")

    mask = None
    if dropout > 0.0:
        mask = DropoutMask.generate(model.layer_widths, dropout, rng)
    return CheckCase(model, teacher, x_in, y_in, x_buf, y_buf, cfg, old_idx, seen_idx, mask)


def _term_runner(case: CheckCase, term: str):
    m, c = case.model, case.cfg
    if term == "mce":
        return lambda g: _mce(m, case.x_in, case.y_in, c, case.mask, with_grads=g)
    if term == "kd":
        return lambda g: _kd(
            case.teacher, m, case.x_buf, c, case.old_idx, case.seen_idx, case.mask, with_grads=g
        )
    if term == "proto":
        return lambda g: _proto(m, case.teacher, case.old_idx, with_grads=g)
    if term == "total":
        from .losses import total_loss_grads

        def run(g):
            breakdown, grads = total_loss_grads(
                m,
                case.teacher,
                (case.x_in, case.y_in),
                (case.x_buf, case.y_buf),
                c,
                old_classes=case.old_idx,
                seen_classes=case.seen_idx,
                mask=case.mask,
                with_grads=g,
            )
            return breakdown.total, grads

        return run
    raise ValueError(term)


def check_term(case: CheckCase, term: str, eps: float = EPSILON) -> float:
    """Max relative error between analytic and central-difference gradients."""
    runner = _term_runner(case, term)
    _, grads = runner(True)
    analytic = grads_vector(grads, case.model)
    numeric = fd_gradient(lambda: runner(False)[0], case.model, eps)
    return max_rel_error(analytic, numeric)


def run_suite(n_cases: int = 20, base_seed: int = 20240501) -> dict[str, float]:
    """Worst relative error per loss term over n random configurations."""
    worst = {"mce": 0.0, "kd": 0.0, "proto": 0.0, "total": 0.0}
    for i in range(n_cases):
        head = "linear" if i % 4 == 3 else "cosine"
        case = random_case(base_seed + i, head_kind=head)
        for term in worst:
            if term == "proto" and head != "cosine":
                continue
            worst[term] = max(worst[term], check_term(case, term))
    return worst
