"""Training objectives and their analytic gradients.

Three terms: temperature cross-entropy on the classifier logits, a
teacher-student distillation loss that preserves decision boundaries of old
classes, and a prototype-direction consistency loss on the cosine head.
All terms are batch means so the mixing weights are batch-size independent.
Class subsets (old / seen) are explicit index tuples so shuffled streams,
where class ids are not contiguous per task, work unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractViolation, ParameterError, ShapeError
from .net import (
    CosineHead,
    DropoutMask,
    ModelGrads,
    ModelState,
    TeacherSnapshot,
    backprop_from_dlogits,
    forward_batch,
)

Batch = tuple[np.ndarray, np.ndarray]  # (x rows, integer labels)


@dataclass(frozen=True)
class LossConfig:
    alpha_kd: float = 0.5
    beta_proto: float = 0.1
    tau1: float = 0.1
    tau2: float = 2.0
    scale: float = 10.0

    def __post_init__(self):
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ParameterError("temperatures must be > 0")
        if self.scale <= 0:
            raise ParameterError("cosine scale must be > 0")
        if self.alpha_kd < 0 or self.beta_proto < 0:
            raise ParameterError("loss weights must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    mce: float
    kd: float
    proto: float
    total: float


def _combine(mce: float, kd: float, proto: float, cfg: LossConfig) -> LossBreakdown:
    return LossBreakdown(
        mce=mce, kd=kd, proto=proto, total=mce + cfg.alpha_kd * kd + cfg.beta_proto * proto
    )


def _add_scaled(target: ModelGrads, other: ModelGrads, scale: float) -> None:
    for (tw, tb), (ow, ob) in zip(target.layers, other.layers):
        tw += scale * ow
        tb += scale * ob
    target.head_w += scale * other.head_w
    if target.head_b is not None and other.head_b is not None:
        target.head_b += scale * other.head_b


def _check_labels(y: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(y, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError("labels must be a 1-d array")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ParameterError(f"label outside class range [0, {num_classes})")
    return labels


def _class_index(classes, num_classes: int, what: str) -> np.ndarray:
    idx = np.asarray(sorted(set(int(c) for c in classes)), dtype=np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] >= num_classes):
        raise ParameterError(f"{what} index outside class range [0, {num_classes})")
    return idx


def _mce(model, x, y, cfg, mask, with_grads):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise ContractViolation("cross-entropy batch must be nonempty")
    labels = _check_labels(y, model.num_classes)
    if labels.shape[0] != x.shape[0]:
        raise ShapeError("batch features and labels disagree in length")
    cache = forward_batch(model, x, mask)
    z = cache.logits
    lse = kernels.row_logsumexp(z, cfg.tau1)
    n = x.shape[0]
    value = float(np.mean(lse - z[np.arange(n), labels] / cfg.tau1))
    if not with_grads:
        return value, None
    dlogits = kernels.row_softmax(z, cfg.tau1)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= cfg.tau1 * n
    return value, backprop_from_dlogits(model, cache, dlogits)


def _kd(teacher, model, x, cfg, old_idx, seen_idx, mask, with_grads):
    if old_idx.size == 0:
        raise ContractViolation("boundary distillation needs at least one old class")
    if x.shape[0] == 0:
        raise ContractViolation("boundary distillation batch must be nonempty")
    if teacher.model.num_classes != model.num_classes:
        raise ShapeError("teacher and student disagree on class count")
    if not np.isin(old_idx, seen_idx).all():
        raise ParameterError("old classes must be a subset of seen classes")

    t_cache = forward_batch(teacher.model, x, None)  # teacher runs dropout-free
    s_cache = forward_batch(model, x, mask)
    t_seen = np.ascontiguousarray(t_cache.logits[:, seen_idx])
    s_seen = np.ascontiguousarray(s_cache.logits[:, seen_idx])
    q = kernels.row_softmax(t_seen, cfg.tau2)
    log_p = s_seen / cfg.tau2 - kernels.row_logsumexp(s_seen, cfg.tau2)[:, None]

    old_in_seen = np.isin(seen_idx, old_idx)
    n = x.shape[0]
    value = float(-np.mean((q[:, old_in_seen] * log_p[:, old_in_seen]).sum(axis=1)))
    if not with_grads:
        return value, None

    p = np.exp(log_p)
    q_old_total = (q * old_in_seen).sum(axis=1, keepdims=True)
    d_seen = (p * q_old_total - q * old_in_seen) / (cfg.tau2 * n)
    dlogits = np.zeros_like(s_cache.logits)
    dlogits[:, seen_idx] = d_seen
    return value, backprop_from_dlogits(model, s_cache, dlogits)


def _proto(model, teacher, old_idx, with_grads):
    if not isinstance(model.head, CosineHead) or not isinstance(teacher.model.head, CosineHead):
        raise ContractViolation("prototype distillation requires cosine heads on both models")
    if model.head.prototypes.shape != teacher.model.head.prototypes.shape:
        raise ShapeError("prototype dimensions of student and teacher differ")
    if old_idx.size == 0:
        raise ContractViolation("prototype distillation needs at least one old class")

    w_old = np.ascontiguousarray(model.head.prototypes[old_idx])
    wn, wnorms = kernels.normalize_rows(w_old)
    tn, _ = kernels.normalize_rows(np.ascontiguousarray(teacher.model.head.prototypes[old_idx]))
    diff = wn - tn
    row_norms = np.sqrt((diff * diff).sum(axis=1))
    value = float(row_norms.sum())
    if not with_grads:
        return value, None

    # d||d||/d wn = d/||d|| (zero rows contribute no gradient), then through
    # the row normalization of the stored prototypes.
    safe = np.where(row_norms > 0.0, row_norms, 1.0)
    g = np.ascontiguousarray(diff / safe[:, None])
    dw_old = kernels.normalize_rows_bwd(g, wn, wnorms)
    grads = ModelGrads.zeros_like(model)
    grads.head_w[old_idx] = dw_old
    return value, grads


def mce_loss(model: ModelState, batch: Batch, cfg: LossConfig, mask: DropoutMask | None = None) -> float:
    """Mean temperature cross-entropy over a batch."""
    value, _ = _mce(model, batch[0], batch[1], cfg, mask, with_grads=False)
    return value


def kd_boundary_loss(
    teacher: TeacherSnapshot,
    model: ModelState,
    buffer_batch: Batch,
    cfg: LossConfig,
    old_classes,
    seen_classes,
    mask: DropoutMask | None = None,
) -> float:
    """Teacher-student cross-entropy over old classes, softmax over seen classes."""
    old_idx = _class_index(old_classes, model.num_classes, "old class")
    seen_idx = _class_index(seen_classes, model.num_classes, "seen class")
    x = np.atleast_2d(np.asarray(buffer_batch[0], dtype=np.float64))
    value, _ = _kd(teacher, model, x, cfg, old_idx, seen_idx, mask, with_grads=False)
    return value


def prototype_distill_loss(model: ModelState, teacher: TeacherSnapshot, old_classes) -> float:
    """Sum of Euclidean gaps between current and teacher prototype directions."""
    old_idx = _class_index(old_classes, model.num_classes, "old class")
    value, _ = _proto(model, teacher, old_idx, with_grads=False)
    return value


def total_loss(
    model: ModelState,
    teacher: TeacherSnapshot | None,
    incoming_batch: Batch,
    buffer_batch: Batch | None,
    cfg: LossConfig,
    old_classes=(),
    seen_classes=(),
    mask: DropoutMask | None = None,
) -> LossBreakdown:
    breakdown, _ = total_loss_grads(
        model,
        teacher,
        incoming_batch,
        buffer_batch,
        cfg,
        old_classes=old_classes,
        seen_classes=seen_classes,
        mask=mask,
        with_grads=False,
    )
    return breakdown


def total_loss_grads(
    model: ModelState,
    teacher: TeacherSnapshot | None,
    incoming_batch: Batch,
    buffer_batch: Batch | None,
    cfg: LossConfig,
    old_classes=(),
    seen_classes=(),
    mask: DropoutMask | None = None,
    with_grads: bool = True,
) -> tuple[LossBreakdown, ModelGrads | None]:
    """Weighted objective over one step's batches.

    Cross-entropy runs on incoming plus buffer samples; distillation runs on
    the buffer batch only; both distillation terms vanish without a teacher.
    """
    x_in = np.atleast_2d(np.asarray(incoming_batch[0], dtype=np.float64))
    y_in = np.asarray(incoming_batch[1], dtype=np.int64)
    if x_in.shape[0] == 0:
        raise ContractViolation("incoming batch must be nonempty")

    have_buffer = buffer_batch is not None and len(buffer_batch[1]) > 0
    if have_buffer:
        x_buf = np.atleast_2d(np.asarray(buffer_batch[0], dtype=np.float64))
        y_buf = np.asarray(buffer_batch[1], dtype=np.int64)
        x_union = np.ascontiguousarray(np.vstack([x_in, x_buf]))
        y_union = np.concatenate([y_in, y_buf])
    else:
        x_union, y_union = x_in, y_in

    mce, grads = _mce(model, x_union, y_union, cfg, mask, with_grads)

    old_idx = _class_index(old_classes, model.num_classes, "old class")
    seen_idx = _class_index(seen_classes, model.num_classes, "seen class")

    kd = 0.0
    if teacher is not None and have_buffer and old_idx.size:
        kd, kd_grads = _kd(teacher, model, x_buf, cfg, old_idx, seen_idx, mask, with_grads)
        if with_grads and cfg.alpha_kd != 0.0:
            _add_scaled(grads, kd_grads, cfg.alpha_kd)

    proto = 0.0
    if teacher is not None and old_idx.size and isinstance(model.head, CosineHead):
        proto, proto_grads = _proto(model, teacher, old_idx, with_grads)
        if with_grads and cfg.beta_proto != 0.0:
            _add_scaled(grads, proto_grads, cfg.beta_proto)

    return _combine(mce, kd, proto, cfg), grads
