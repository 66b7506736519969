"""Minimal manual-backprop binary models.

A model is a stack of :class:`BinaryLinear` layers. In ``binary`` mode the
forward pass never reads the full-precision weights directly: every layer
multiplies by ``alpha * sign(W)`` with one global ``alpha`` shared across
layers (the mean absolute value of all weights), and flagged layers also
binarize their activations. Gradients reach the full-precision weights
through the straight-through estimator: pass-through at weight sign nodes
(optionally masked where |W| exceeds ``weight_clip``) and a hard-tanh mask
at activation sign nodes.

``surrogate`` mode replaces every sign node by its straight-through
surrogate (identity or clamp) in the forward pass while keeping the same
backward code, which makes the backward pass an exact gradient of the
surrogate network; that is the mode the finite-difference checks run in.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

from .binarize import DEFAULT_STE_CLIP
from .errors import ConfigError, DimensionError, DomainError
from .numerics import Box
from .optim import OptimizerConfig, OptimizerState, step_with_info

MODES = ("binary", "surrogate")
_WEIGHTS_MAGIC = b"BWV1"


@dataclass
class BinaryLinear:
    """Affine layer with sign-quantized weights and optional sign activation."""

    weights: np.ndarray  # (in_dim, out_dim), full precision
    bias: np.ndarray | None = None
    binarize_activations: bool = False
    weight_clip: float | None = None
    activation_clip: float = DEFAULT_STE_CLIP

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DimensionError("weights must be a 2-D (in, out) array")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[1],):
                raise DimensionError("bias shape must match the output dimension")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def quantized_weights(self, alpha: float, mode: str) -> np.ndarray:
        if mode == "binary":
            return alpha * np.where(self.weights >= 0.0, 1.0, -1.0)
        if self.weight_clip is None:
            return self.weights
        return np.clip(self.weights, -self.weight_clip, self.weight_clip)

    def weight_mask(self) -> np.ndarray | float:
        if self.weight_clip is None:
            return 1.0
        return (np.abs(self.weights) <= self.weight_clip).astype(np.float64)


class BinaryMLP:
    """A stack of layers trained through one flat parameter vector."""

    def __init__(self, layers: list[BinaryLinear]):
        if not layers:
            raise ConfigError("model needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError("layer dimensions do not chain")
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def num_params(self) -> int:
        return sum(
            l.weights.size + (l.bias.size if l.bias is not None else 0) for l in self.layers
        )

    def global_alpha(self) -> float:
        total = sum(float(np.sum(np.abs(l.weights))) for l in self.layers)
        count = sum(l.weights.size for l in self.layers)
        a = total / count
        return a if a > 0.0 else 1.0

    def get_params(self) -> np.ndarray:
        parts = []
        for l in self.layers:
            parts.append(l.weights.ravel())
            if l.bias is not None:
                parts.append(l.bias)
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.num_params(),):
            raise DimensionError("flat parameter vector has the wrong length")
        offset = 0
        for l in self.layers:
            n = l.weights.size
            l.weights = flat[offset : offset + n].reshape(l.weights.shape).copy()
            offset += n
            if l.bias is not None:
                nb = l.bias.size
                l.bias = flat[offset : offset + nb].copy()
                offset += nb


def forward(model: BinaryMLP, x, mode: str = "binary"):
    """Run the stack on a batch (or single vector); returns (y, tape)."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != model.in_dim:
        raise DimensionError(f"input dim {x.shape[1]} != model dim {model.in_dim}")
    alpha = model.global_alpha() if mode == "binary" else 1.0
    tape = {"mode": mode, "alpha": alpha, "records": [], "squeeze": squeeze}
    for layer in model.layers:
        wq = layer.quantized_weights(alpha, mode)
        z = x @ wq
        if layer.bias is not None:
            z = z + layer.bias
        if layer.binarize_activations:
            if mode == "binary":
                a = np.where(z >= 0.0, 1.0, -1.0)
            else:
                c = layer.activation_clip
                a = np.clip(z, -c, c)
        else:
            a = z
        tape["records"].append({"layer": layer, "x": x, "z": z, "wq": wq})
        x = a
    y = x[0] if squeeze else x
    return y, tape


def backward(tape, loss_grad) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Per-layer (dW, db) from the upstream loss gradient.

    Straight-through estimates are applied at every sign node: activation
    nodes mask where |z| exceeds the layer's activation clip, weight nodes
    pass through (masked only when the layer sets ``weight_clip``).
    """
    records = tape["records"]
    delta = np.asarray(loss_grad, dtype=np.float64)
    if tape["squeeze"] and delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != records[-1]["z"].shape:
        raise DimensionError("loss gradient shape does not match the forward output")
    grads: list[tuple[np.ndarray, np.ndarray | None]] = [None] * len(records)
    for i in range(len(records) - 1, -1, -1):
        rec = records[i]
        layer = rec["layer"]
        if layer.binarize_activations:
            mask = (np.abs(rec["z"]) <= layer.activation_clip).astype(np.float64)
            delta = delta * mask
        dw = (rec["x"].T @ delta) * layer.weight_mask()
        db = delta.sum(axis=0) if layer.bias is not None else None
        grads[i] = (dw, db)
        if i > 0:
            delta = delta @ rec["wq"].T
    return grads


def flatten_grads(model: BinaryMLP, grads) -> np.ndarray:
    parts = []
    for layer, (dw, db) in zip(model.layers, grads):
        parts.append(dw.ravel())
        if layer.bias is not None:
            parts.append(db)
    return np.concatenate(parts)


def mse_loss(y, target):
    """Mean squared error over all elements; returns (value, grad wrt y)."""
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if y.shape != target.shape:
        raise DimensionError("prediction and target shapes differ")
    diff = y - target
    value = float(np.mean(diff * diff))
    return value, 2.0 * diff / diff.size


def cross_entropy_loss(logits, target):
    """Softmax cross entropy against one-hot targets, averaged over the batch."""
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise DimensionError("logits and target shapes differ")
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits[None, :]
        target = target[None, :]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    logp = shifted - logz
    value = float(-np.mean(np.sum(target * logp, axis=1)))
    grad = (np.exp(logp) - target) / logits.shape[0]
    if squeeze:
        grad = grad[0]
    return value, grad


@dataclass
class Dataset:
    """Paired inputs/targets with the seed that generated them."""

    inputs: np.ndarray
    targets: np.ndarray
    seed: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if len(self.inputs) != len(self.targets):
            raise DimensionError("inputs and targets must have equal length")
        if self.inputs.size and not np.all(np.isfinite(self.inputs)):
            raise DomainError("inputs must be finite")
        if self.targets.size and not np.all(np.isfinite(self.targets)):
            raise DomainError("targets must be finite")

    def __len__(self) -> int:
        return len(self.inputs)


def make_synthetic_data(kind: str, n: int, seed: int, dim: int | None = None) -> Dataset:
    """Seeded toy datasets: gaussian ``blobs`` (3 classes), two interleaved
    ``moons`` (2-D, 2 classes), or ``sparse_binary`` vectors whose targets
    are the inputs themselves (reconstruction)."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    if kind == "blobs":
        d = dim or 8
        centers = rng.uniform(-2.0, 2.0, size=(3, d))
        labels = rng.integers(0, 3, size=n)
        x = centers[labels] + 0.3 * rng.standard_normal((n, d))
        t = np.eye(3)[labels] if n else np.zeros((0, 3))
        return Dataset(x, t, seed)
    if kind == "moons":
        if dim not in (None, 2):
            raise DomainError("moons is two-dimensional")
        labels = rng.integers(0, 2, size=n)
        angles = rng.uniform(0.0, np.pi, size=n)
        x = np.empty((n, 2))
        x[:, 0] = np.where(labels == 0, np.cos(angles), 1.0 - np.cos(angles))
        x[:, 1] = np.where(labels == 0, np.sin(angles), 0.5 - np.sin(angles))
        x += 0.05 * rng.standard_normal((n, 2))
        t = np.eye(2)[labels] if n else np.zeros((0, 2))
        return Dataset(x, t, seed)
    if kind == "sparse_binary":
        d = dim or 32
        x = np.where(rng.random((n, d)) < 0.25, 1.0, -1.0)
        return Dataset(x, x.copy(), seed)
    raise DomainError(f"unknown dataset kind {kind!r}")


def make_autoencoder(input_dim: int, hidden_dim: int, seed: int = 0) -> BinaryMLP:
    """Single-hidden-layer autoencoder: sign-activated encoder, linear decoder."""
    if input_dim < 1 or hidden_dim < 1:
        raise DomainError("dimensions must be positive")
    rng = np.random.default_rng(seed)

    def init(shape):
        w = 0.2 * rng.standard_normal(shape)
        return np.clip(w, -0.49, 0.49)

    encoder = BinaryLinear(
        weights=init((input_dim, hidden_dim)),
        bias=np.zeros(hidden_dim),
        binarize_activations=True,
    )
    decoder = BinaryLinear(
        weights=init((hidden_dim, input_dim)),
        bias=np.zeros(input_dim),
        binarize_activations=False,
    )
    return BinaryMLP([encoder, decoder])


@dataclass
class TrainLog:
    """Per-epoch training record."""

    train_loss: np.ndarray
    test_loss: np.ndarray
    var_tail_series: np.ndarray
    gamma_mean: np.ndarray
    diverged: bool = False

    @property
    def epochs(self) -> int:
        return self.train_loss.shape[0]

    @property
    def var_tail(self) -> float:
        """Variance of the training loss over the trailing quarter of epochs."""
        return float(self.var_tail_series[-1]) if self.epochs else float("nan")

    @property
    def final_train_loss(self) -> float:
        return float(self.train_loss[-1]) if self.epochs else float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "test_loss", "var_tail", "gamma_mean"])
            for i in range(self.epochs):
                writer.writerow(
                    [
                        i + 1,
                        repr(float(self.train_loss[i])),
                        repr(float(self.test_loss[i])),
                        repr(float(self.var_tail_series[i])),
                        repr(float(self.gamma_mean[i])),
                    ]
                )


def _tail_variance(series: list, upto: int, total_epochs: int) -> float:
    k = max(1, total_epochs // 4)
    window = series[max(0, upto - k) : upto]
    return float(np.var(window))


def train(
    model: BinaryMLP,
    dataset: Dataset,
    optimizer: str = "bamsprod",
    cfg: OptimizerConfig | None = None,
    epochs: int = 10,
    batch_size: int = 32,
    seed: int = 0,
    feasible: Box | None = None,
    test_dataset: Dataset | None = None,
    track_gamma: bool = True,
    mode: str = "binary",
) -> TrainLog:
    """Minibatch-train the model, deterministically in the seed.

    A quarter of the data is held out for the test loss when no explicit
    test set is given. When ``track_gamma`` is set, a surrogate-mode twin is
    trained on the same batch stream and the per-step second-moment drift
    gap between the two runs is averaged per epoch.
    """
    from .binarize import QuantErrorTrace, record_upsilon
    from .optim import eta_at

    if epochs < 1 or batch_size < 1:
        raise DomainError("epochs and batch_size must be >= 1")
    if optimizer == "bop":
        raise ConfigError("bop is not supported by the training loop")
    if cfg is None:
        cfg = OptimizerConfig()
    if len(dataset) == 0:
        raise DomainError("cannot train on an empty dataset")

    rng = np.random.default_rng(seed)
    if test_dataset is None:
        perm = rng.permutation(len(dataset))
        n_test = len(dataset) // 4
        test_idx, train_idx = perm[:n_test], perm[n_test:]
        x_train, t_train = dataset.inputs[train_idx], dataset.targets[train_idx]
        x_test, t_test = dataset.inputs[test_idx], dataset.targets[test_idx]
    else:
        x_train, t_train = dataset.inputs, dataset.targets
        x_test, t_test = test_dataset.inputs, test_dataset.targets
    if len(x_train) == 0:
        raise DomainError("training split is empty")

    n_params = model.num_params()
    box = feasible if feasible is not None else Box.symmetric(1.0, n_params)
    if box.dim != n_params:
        raise DimensionError("feasible box dimension must match the parameter count")
    if cfg.bound_params is None and optimizer in ("bamsprod", "adabound", "amsbound"):
        from .optim import BoundScheduleParams

        cfg = replace(cfg, bound_params=BoundScheduleParams(1.0, 1e-3))
    cfg.validate(optimizer)

    params = np.clip(model.get_params(), box.lo, box.hi)
    state = OptimizerState.zeros(n_params)

    shadow = None
    if track_gamma and mode == "binary":
        shadow_params = params.copy()
        shadow_state = OptimizerState.zeros(n_params)
        trace = QuantErrorTrace()
        prev_v = np.zeros(n_params)
        prev_eta = None
        shadow = True

    train_curve: list[float] = []
    test_curve: list[float] = []
    var_curve: list[float] = []
    gamma_curve: list[float] = []
    diverged = False

    for epoch in range(epochs):
        order = rng.permutation(len(x_train))
        batch_losses = []
        gamma_steps = []
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            xb, tb = x_train[idx], t_train[idx]

            model.set_params(params)
            y, tape = forward(model, xb, mode=mode)
            loss_value, loss_grad = mse_loss(y, tb)
            if not np.isfinite(loss_value):
                diverged = True
                break
            g = flatten_grads(model, backward(tape, loss_grad))
            state, params, _ = step_with_info(optimizer, state, params, g, cfg, box)
            batch_losses.append(loss_value)

            if shadow:
                model.set_params(shadow_params)
                ys, tapes = forward(model, xb, mode="surrogate")
                _, sg = mse_loss(ys, tb)
                gs = flatten_grads(model, backward(tapes, sg))
                shadow_state, shadow_params, _ = step_with_info(
                    optimizer, shadow_state, shadow_params, gs, cfg, box
                )
                eta_t = eta_at(state.t, cfg)
                record_upsilon(
                    trace,
                    shadow_state.v,
                    prev_v,
                    eta_t,
                    prev_eta if prev_eta is not None else eta_t,
                    state.v,
                )
                prev_v = shadow_state.v
                prev_eta = eta_t
                gamma_steps.append(trace.gamma_history[-1])

        if not batch_losses:
            break
        train_curve.append(float(np.mean(batch_losses)))
        model.set_params(params)
        if len(x_test):
            y_test, _ = forward(model, x_test, mode=mode)
            test_curve.append(mse_loss(y_test, t_test)[0])
        else:
            test_curve.append(float("nan"))
        var_curve.append(_tail_variance(train_curve, len(train_curve), epochs))
        gamma_curve.append(float(np.mean(gamma_steps)) if gamma_steps else 0.0)
        if diverged:
            break

    model.set_params(params)
    return TrainLog(
        train_loss=np.asarray(train_curve),
        test_loss=np.asarray(test_curve),
        var_tail_series=np.asarray(var_curve),
        gamma_mean=np.asarray(gamma_curve),
        diverged=diverged,
    )


def save_weights(model: BinaryMLP, path) -> None:
    """Flat binary format: magic, layer count, global alpha, then per layer
    a (in, out, has_bias, binarize_activations, weight_clip) header followed
    by little-endian float64 weight and bias arrays."""
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(model.layers)))
        fh.write(struct.pack("<d", model.global_alpha()))
        for l in model.layers:
            clip = float("nan") if l.weight_clip is None else float(l.weight_clip)
            fh.write(
                struct.pack(
                    "<IIBBd",
                    l.in_dim,
                    l.out_dim,
                    1 if l.bias is not None else 0,
                    1 if l.binarize_activations else 0,
                    clip,
                )
            )
            fh.write(l.weights.astype("<f8").tobytes(order="C"))
            if l.bias is not None:
                fh.write(l.bias.astype("<f8").tobytes())


def load_weights(path) -> BinaryMLP:
    with open(path, "rb") as fh:
        if fh.read(4) != _WEIGHTS_MAGIC:
            raise DomainError("not a model weights file")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        struct.unpack("<d", fh.read(8))  # stored alpha; recomputed on use
        layers = []
        for _ in range(n_layers):
            in_dim, out_dim, has_bias, bin_act, clip = struct.unpack("<IIBBd", fh.read(18))
            w = np.frombuffer(fh.read(8 * in_dim * out_dim), dtype="<f8").reshape(in_dim, out_dim)
            b = np.frombuffer(fh.read(8 * out_dim), dtype="<f8").copy() if has_bias else None
            layers.append(
                BinaryLinear(
                    weights=w.copy(),
                    bias=b,
                    binarize_activations=bool(bin_act),
                    weight_clip=None if np.isnan(clip) else clip,
                )
            )
    return BinaryMLP(layers)
