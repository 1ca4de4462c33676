"""Small differentiable MLP classifiers, ensembles, SGD training, checkpoints.

Models expose logits, cross-entropy loss, and gradients with respect to both
parameters and the *input*; the latter is what every attack consumes.
Parameters are immutable tensors, so "updating" a model rebinds fresh tensors
into its parameter dictionary; snapshots are therefore cheap shallow copies.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .rng import SeededRng
from .tensor import Tensor

__all__ = [
    "MlpSpec",
    "Classifier",
    "Ensemble",
    "TrainConfig",
    "TrainReport",
    "CheckpointError",
    "forward",
    "loss_and_input_grad",
    "loss_and_input_grad_batch",
    "sgd_train",
    "ensemble_forward",
    "predict",
    "accuracy",
    "params_checksum",
    "clone",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"ADVC"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Malformed or incompatible checkpoint file."""


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully-connected relu classifier.

    ``layer_widths`` runs input dim, hidden widths..., number of classes.
    """

    layer_widths: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive: {widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_classes(self) -> int:
        return self.layer_widths[-1]


def _init_params(spec: MlpSpec) -> dict[str, Tensor]:
    # fan-in scaled uniform, one stream per model seed
    rng = SeededRng(spec.seed).spawn("mlp-init")
    params: dict[str, Tensor] = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.layer_widths, spec.layer_widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{i}"] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params[f"b{i}"] = Tensor(rng.uniform(-bound, bound, size=fan_out))
    return params


class Classifier:
    """MLP with named parameters; forward(x) yields logits."""

    def __init__(self, spec: MlpSpec, params: dict[str, Tensor] | None = None):
        self.spec = spec
        self.params = _init_params(spec) if params is None else dict(params)
        for i in range(len(spec.layer_widths) - 1):
            w, b = self.params[f"W{i}"], self.params[f"b{i}"]
            expect = (spec.layer_widths[i], spec.layer_widths[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"parameter shapes do not match spec at layer {i}")

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    @property
    def n_classes(self) -> int:
        return self.spec.n_classes

    @property
    def model_id(self) -> str:
        widths = "x".join(str(w) for w in self.spec.layer_widths)
        return f"mlp-{widths}-s{self.spec.seed}"

    def forward(self, x: Tensor) -> Tensor:
        return forward(self, x)

    def __repr__(self) -> str:
        return f"Classifier({self.model_id})"


def forward(model: "Classifier | Ensemble", x: Tensor) -> Tensor:
    """Logits for one input of shape (d,) or a batch of shape (B, d)."""
    if isinstance(model, Ensemble):
        return ensemble_forward(model, x)
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim not in (1, 2) or x.shape[-1] != model.input_dim:
        raise T.ShapeError(f"input shape {x.shape} does not match d={model.input_dim}")
    single = x.ndim == 1
    h = T.reshape(x, (1, x.shape[0])) if single else x
    n_layers = len(model.spec.layer_widths) - 1
    for i in range(n_layers):
        h = T.add_bias(T.matmul(h, model.params[f"W{i}"]), model.params[f"b{i}"])
        if i < n_layers - 1:
            h = T.relu(h)
    return T.reshape(h, (h.shape[1],)) if single else h


class Ensemble:
    """Equal-weight logit-fusion ensemble of classifiers."""

    def __init__(self, members: list[Classifier], weights: list[float] | None = None):
        if not members:
            raise ValueError("ensemble needs at least one member")
        c = members[0].n_classes
        d = members[0].input_dim
        if any(m.n_classes != c for m in members):
            raise ValueError("ensemble members disagree on number of classes")
        if any(m.input_dim != d for m in members):
            raise ValueError("ensemble members disagree on input dimension")
        equal = [1.0 / len(members)] * len(members)
        if weights is not None and not np.allclose(weights, equal):
            raise ValueError("ensemble weights must be equal and sum to 1")
        self.members = list(members)
        self.weights = equal

    @property
    def input_dim(self) -> int:
        return self.members[0].input_dim

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes

    @property
    def model_id(self) -> str:
        return "ens(" + "+".join(m.model_id for m in self.members) + ")"

    def forward(self, x: Tensor) -> Tensor:
        return ensemble_forward(self, x)


def ensemble_forward(e: Ensemble, x: Tensor) -> Tensor:
    """Equal-weight mean of member logits."""
    logits = [forward(m, x) for m in e.members]
    total = logits[0]
    for li in logits[1:]:
        total = T.add(total, li)
    return T.scale(total, 1.0 / len(logits))


def _as_onehot_batch(y, n_classes: int) -> np.ndarray:
    arr = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[-1] != n_classes:
        raise T.ShapeError(f"label shape {arr.shape} does not match C={n_classes}")
    return arr


def loss_and_input_grad_batch(model, X, Y) -> tuple[np.ndarray, Tensor]:
    """Per-row CE losses and the input gradient for a (B, d) batch.

    Parameters are read, never rebound; the gradient of the summed loss
    w.r.t. the batch input has the per-example gradients as rows.
    """
    arr = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    x_leaf = Tensor(arr.reshape(1, -1) if arr.ndim == 1 else arr)
    y = _as_onehot_batch(Y, model.n_classes)
    logits = forward(model, x_leaf)
    rows = T.softmax_cross_entropy_rows(logits, Tensor(y))
    grads = T.backward(T.sum_all(rows))
    return rows.data.copy(), grads[x_leaf]


def loss_and_input_grad(model, x: Tensor, y) -> tuple[float, Tensor]:
    """CE loss and its gradient w.r.t. a single input of shape (d,)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 1:
        raise T.ShapeError(f"expected a single (d,) input, got {x.shape}")
    losses, grad = loss_and_input_grad_batch(model, Tensor(x.data.reshape(1, -1)), y)
    return float(losses[0]), Tensor(grad.data[0])


def predict(model, X) -> np.ndarray:
    """Predicted class indices for a (B, d) array."""
    arr = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    logits = forward(model, Tensor(arr))
    return np.argmax(logits.data, axis=-1)


def accuracy(model, X, labels) -> float:
    labels = np.asarray(labels)
    return float((predict(model, X) == labels).mean())


def params_checksum(model) -> str:
    """Hex digest pinning the exact parameter values."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(model.params):
        h.update(name.encode())
        h.update(model.params[name].data.tobytes())
    return h.hexdigest()


def clone(model: Classifier) -> Classifier:
    """Snapshot sharing the (immutable) parameter tensors."""
    return Classifier(model.spec, dict(model.params))


@dataclass
class TrainConfig:
    epochs: int
    lr: float
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_accuracies: list[float] = field(default_factory=list)
    seconds: float = 0.0


def iter_batches(n: int, batch_size: int, rng: SeededRng | None) -> list[np.ndarray]:
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def sgd_train(model: Classifier, data, cfg: TrainConfig, batch_transform=None) -> TrainReport:
    """Minibatch SGD with momentum and weight decay on the CE loss.

    ``batch_transform(model, Xb, Yb) -> ndarray`` may replace each minibatch's
    inputs before the step (adversarial training plugs in here); it draws from
    its own streams so the shuffling stream is shared with natural training.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    X, labels = data.inputs, data.labels
    Y = data.onehot()
    shuffle_rng = SeededRng(cfg.seed).spawn("sgd-shuffle") if cfg.shuffle else None
    velocity = {name: np.zeros(p.shape) for name, p in model.params.items()}
    report = TrainReport()
    t0 = time.perf_counter()
    for _ in range(cfg.epochs):
        total_loss = 0.0
        for idx in iter_batches(len(data), cfg.batch_size, shuffle_rng):
            xb, yb = X[idx], Y[idx]
            if batch_transform is not None:
                xb = batch_transform(model, xb, yb)
            x_leaf = Tensor(xb)
            rows = T.softmax_cross_entropy_rows(forward(model, x_leaf), Tensor(yb))
            loss = T.scale(T.sum_all(rows), 1.0 / len(idx))
            grads = T.backward(loss)
            for name, p in model.params.items():
                g = grads[p].data + cfg.weight_decay * p.data
                velocity[name] = cfg.momentum * velocity[name] + g
                model.params[name] = Tensor(p.data - cfg.lr * velocity[name])
            total_loss += float(loss.item()) * len(idx)
        report.epoch_losses.append(total_loss / len(data))
        report.epoch_accuracies.append(accuracy(model, X, labels))
    report.seconds = time.perf_counter() - t0
    return report


def save_checkpoint(path, model: Classifier, train_config: dict | None = None, extra: dict | None = None) -> None:
    """Write the versioned binary checkpoint.

    Layout: magic "ADVC", u32 LE format version, u32 LE manifest length,
    JSON manifest (architecture, seed, parameter order/shapes, training
    config), then raw little-endian float64 parameter blocks in manifest
    order.
    """
    names = list(model.params)
    manifest = {
        "arch": {
            "layer_widths": list(model.spec.layer_widths),
            "activation": model.spec.activation,
            "seed": model.spec.seed,
        },
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "train_config": train_config,
        "extra": extra or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(model.params[n].data.astype("<f8").tobytes())


def load_checkpoint(path) -> Classifier:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (mlen,) = struct.unpack("<I", raw[8:12])
    try:
        manifest = json.loads(raw[12 : 12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from None
    spec = MlpSpec(
        tuple(manifest["arch"]["layer_widths"]),
        manifest["arch"]["activation"],
        manifest["arch"]["seed"],
    )
    offset = 12 + mlen
    params: dict[str, Tensor] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        block = raw[offset : offset + nbytes]
        if len(block) != nbytes:
            raise CheckpointError(f"{path}: truncated parameter block {entry['name']}")
        params[entry["name"]] = Tensor(np.frombuffer(block, dtype="<f8").reshape(shape))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return Classifier(spec, params)
