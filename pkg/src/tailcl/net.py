"""Dense model: MLP encoder with dropout plus a linear or scaled-cosine head.

Parameters are float64 numpy arrays; layer weights are (out, in) so class
weight vectors are rows.  Forward/backward route through the kernel backend
(``tailcl.kernels``); everything here is deterministic given its inputs,
randomness only ever enters through explicitly passed masks or generators.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateNormError, NumericOverflowError, ParameterError, ShapeError

NORM_TOLERANCE = 1e-12


@dataclass
class LinearHead:
    weights: np.ndarray  # (num_classes, feat_dim)
    biases: np.ndarray  # (num_classes,)


@dataclass
class CosineHead:
    prototypes: np.ndarray  # (num_classes, feat_dim), stored unnormalized
    scale: float


@dataclass
class ModelState:
    """Encoder layers [(W, b), ...] plus classifier head."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    dropout_rate: float
    head: LinearHead | CosineHead

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if isinstance(self.head, CosineHead) and self.head.scale <= 0.0:
            raise ParameterError("cosine head scale must be > 0")
        dim = self.in_dim
        for i, (w, b) in enumerate(self.layers):
            if w.shape[1] != dim or b.shape != (w.shape[0],):
                raise ShapeError(f"encoder layer {i} does not chain: {w.shape} after dim {dim}")
            dim = w.shape[0]
        if self.head_weights.shape[1] != dim:
            raise ShapeError(
                f"head expects features of dim {self.head_weights.shape[1]}, encoder emits {dim}"
            )

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def feat_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.head_weights.shape[0]

    @property
    def head_weights(self) -> np.ndarray:
        return self.head.weights if isinstance(self.head, LinearHead) else self.head.prototypes

    @property
    def layer_widths(self) -> list[int]:
        return [w.shape[0] for w, _ in self.layers]

    def parameter_arrays(self) -> list[np.ndarray]:
        arrs = []
        for w, b in self.layers:
            arrs.extend([w, b])
        arrs.append(self.head_weights)
        if isinstance(self.head, LinearHead):
            arrs.append(self.head.biases)
        return arrs


@dataclass(frozen=True)
class TeacherSnapshot:
    """Frozen copy of the model at the end of a task; arrays are read-only."""

    model: ModelState
    snapshot_task: int

    @staticmethod
    def freeze(model: ModelState, snapshot_task: int) -> "TeacherSnapshot":
        frozen = copy.deepcopy(model)
        for arr in frozen.parameter_arrays():
            arr.setflags(write=False)
        return TeacherSnapshot(model=frozen, snapshot_task=snapshot_task)


@dataclass
class DropoutMask:
    """One binary vector per encoder layer, applied with inverted scaling."""

    layer_masks: list[np.ndarray]
    keep_probability: float

    @staticmethod
    def generate(widths: list[int], dropout_rate: float, rng: np.random.Generator) -> "DropoutMask":
        keep = 1.0 - dropout_rate
        masks = [(rng.random(w) < keep).astype(np.float64) for w in widths]
        return DropoutMask(layer_masks=masks, keep_probability=keep)


@dataclass
class ModelGrads:
    """Gradients shaped exactly like the model's parameters."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    head_w: np.ndarray
    head_b: np.ndarray | None = None

    @staticmethod
    def zeros_like(model: ModelState) -> "ModelGrads":
        layers = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]
        head_b = np.zeros_like(model.head.biases) if isinstance(model.head, LinearHead) else None
        return ModelGrads(layers=layers, head_w=np.zeros_like(model.head_weights), head_b=head_b)


@dataclass
class ForwardCache:
    """Everything backprop needs from one batched forward pass."""

    x: np.ndarray
    pre_acts: list[np.ndarray] = field(default_factory=list)  # z_l
    hidden: list[np.ndarray] = field(default_factory=list)  # post-dropout h_l
    features: np.ndarray | None = None
    feat_normed: np.ndarray | None = None  # cosine head only
    feat_norms: np.ndarray | None = None
    proto_normed: np.ndarray | None = None
    proto_norms: np.ndarray | None = None
    logits: np.ndarray | None = None
    mask: DropoutMask | None = None


def _as_batch(x: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"expected a vector or matrix of samples, got ndim={arr.ndim}")
    return arr


def forward_batch(
    model: ModelState, x: np.ndarray, mask: DropoutMask | None = None
) -> ForwardCache:
    """Run the encoder and head over a batch, keeping intermediates."""
    h = _as_batch(x)
    if h.shape[1] != model.in_dim:
        raise ShapeError(f"input dim {h.shape[1]} does not match model input dim {model.in_dim}")
    if mask is not None:
        if len(mask.layer_masks) != len(model.layers):
            raise ShapeError("dropout mask layer count does not match encoder depth")
        for i, (m, width) in enumerate(zip(mask.layer_masks, model.layer_widths)):
            if m.shape != (width,):
                raise ShapeError(f"mask for layer {i} has shape {m.shape}, expected ({width},)")

    cache = ForwardCache(x=h, mask=mask)
    for i, (w, b) in enumerate(model.layers):
        z = kernels.affine_fwd(h, w, b)
        cache.pre_acts.append(z)
        h = kernels.relu_fwd(z)
        if mask is not None:
            h = kernels.scale_cols(h, mask.layer_masks[i], 1.0 / mask.keep_probability)
        cache.hidden.append(h)
    cache.features = h

    if isinstance(model.head, CosineHead):
        fn, fnorms = kernels.normalize_rows(h)
        if np.any(fnorms <= NORM_TOLERANCE):
            raise DegenerateNormError("zero-norm feature vector under cosine head")
        wn, wnorms = kernels.normalize_rows(model.head.prototypes)
        if np.any(wnorms <= NORM_TOLERANCE):
            raise DegenerateNormError("zero-norm prototype under cosine head")
        logits = model.head.scale * (fn @ wn.T)
        cache.feat_normed, cache.feat_norms = fn, fnorms
        cache.proto_normed, cache.proto_norms = wn, wnorms
    else:
        logits = kernels.affine_fwd(h, model.head.weights, model.head.biases)
    cache.logits = logits
    return cache


def forward(
    model: ModelState, x: np.ndarray, mask: DropoutMask | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample forward: returns (features, logits)."""
    cache = forward_batch(model, x, mask)
    return cache.features[0], cache.logits[0]


def backprop_from_dlogits(model: ModelState, cache: ForwardCache, dlogits: np.ndarray) -> ModelGrads:
    """Reverse the cached forward pass given dLoss/dlogits."""
    dlogits = np.ascontiguousarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache.logits.shape:
        raise ShapeError("dlogits shape does not match forward logits")

    if isinstance(model.head, CosineHead):
        s = model.head.scale
        dfn = s * (dlogits @ cache.proto_normed)
        dwn = s * (dlogits.T @ cache.feat_normed)
        df = kernels.normalize_rows_bwd(dfn, cache.feat_normed, cache.feat_norms)
        head_w = kernels.normalize_rows_bwd(dwn, cache.proto_normed, cache.proto_norms)
        head_b = None
    else:
        df, head_w, head_b = kernels.affine_bwd(dlogits, cache.features, model.head.weights)

    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    dh = df
    for i in range(len(model.layers) - 1, -1, -1):
        if cache.mask is not None:
            dh = kernels.scale_cols(
                dh, cache.mask.layer_masks[i], 1.0 / cache.mask.keep_probability
            )
        dz = kernels.relu_bwd(dh, cache.pre_acts[i])
        inp = cache.x if i == 0 else cache.hidden[i - 1]
        dh, dw, db = kernels.affine_bwd(dz, inp, model.layers[i][0])
        layer_grads[i] = (dw, db)

    grads = ModelGrads(layers=layer_grads, head_w=head_w, head_b=head_b)
    _check_finite(grads)
    return grads


def _check_finite(grads: ModelGrads) -> None:
    for i, (dw, db) in enumerate(grads.layers):
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise NumericOverflowError(f"non-finite gradient in encoder layer {i}")
    if not np.isfinite(grads.head_w).all():
        raise NumericOverflowError("non-finite gradient in classifier head weights")
    if grads.head_b is not None and not np.isfinite(grads.head_b).all():
        raise NumericOverflowError("non-finite gradient in classifier head biases")


def sgd_step(model: ModelState, grads: ModelGrads, lr: float) -> ModelState:
    """In-place p <- p - lr * g; returns the same model."""
    if lr <= 0.0:
        raise ParameterError(f"learning rate must be > 0, got {lr}")
    if len(grads.layers) != len(model.layers):
        raise ShapeError("gradient structure does not match model")
    for (w, b), (dw, db) in zip(model.layers, grads.layers):
        if dw.shape != w.shape or db.shape != b.shape:
            raise ShapeError("gradient shape mismatch in encoder")
        w -= lr * dw
        b -= lr * db
    if grads.head_w.shape != model.head_weights.shape:
        raise ShapeError("gradient shape mismatch in head")
    model.head_weights[...] -= lr * grads.head_w
    if isinstance(model.head, LinearHead):
        if grads.head_b is None or grads.head_b.shape != model.head.biases.shape:
            raise ShapeError("gradient shape mismatch in head biases")
        model.head.biases -= lr * grads.head_b
    return model


def normalize(v: np.ndarray) -> np.ndarray:
    """Unit-normalize a vector; near-zero norm is an error."""
    arr = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(arr))
    if n <= NORM_TOLERANCE:
        raise DegenerateNormError(f"cannot normalize vector of norm {n}")
    return arr / n


def softmax_temp(logits: np.ndarray, tau: float) -> np.ndarray:
    """Temperature softmax with max subtraction; tau must be positive."""
    if tau <= 0.0:
        raise ParameterError(f"temperature must be > 0, got {tau}")
    arr = np.ascontiguousarray(logits, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ParameterError("logits must be finite")
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    p = kernels.row_softmax(arr, tau)
    return p[0] if squeeze else p


def weight_magnitude_report(model: ModelState) -> list[tuple[float, float | None]]:
    """Per-class (weight norm, bias); bias is None for the cosine head."""
    w = model.head_weights
    norms = np.sqrt((w * w).sum(axis=1))
    if isinstance(model.head, LinearHead):
        return [(float(n), float(b)) for n, b in zip(norms, model.head.biases)]
    return [(float(n), None) for n in norms]


def init_model(
    in_dim: int,
    hidden: list[int],
    num_classes: int,
    head_kind: str,
    scale: float,
    dropout_rate: float,
    seed: int,
) -> ModelState:
    """He-initialized encoder; head rows drawn at scale 1/sqrt(feat_dim)."""
    if not hidden:
        raise ParameterError("encoder needs at least one hidden layer")
    rng = np.random.default_rng(seed)
    layers = []
    dim = in_dim
    for width in hidden:
        w = rng.standard_normal((width, dim)) * np.sqrt(2.0 / dim)
        layers.append((w, np.zeros(width)))
        dim = width
    head_w = rng.standard_normal((num_classes, dim)) / np.sqrt(dim)
    if head_kind == "cosine":
        head = CosineHead(prototypes=head_w, scale=scale)
    elif head_kind == "linear":
        head = LinearHead(weights=head_w, biases=np.zeros(num_classes))
    else:
        raise ParameterError(f"unknown head kind {head_kind!r}")
    return ModelState(layers=layers, dropout_rate=dropout_rate, head=head)
