"""Small convolutional classifier with hand-rolled reverse-mode gradients.

The default architecture ("default_cnn") consumes an interleaved 2048-vector,
deinterleaves it into a 2-channel length-1024 sequence and applies:

    conv(16 filters, width 8, stride 2) -> ReLU
    conv(32 filters, width 8, stride 2) -> ReLU
    flatten -> dense 64 -> ReLU -> dense C

All parameters are initialized from a fan-in scaled uniform distribution
U(-1/sqrt(fan_in), +1/sqrt(fan_in)) with zero biases, deterministically in
the seed.  Training runs minibatch Adam with seeded shuffling; given fixed
seeds and single-threaded execution it is bit-reproducible.  Inference and
training use f32 by default; pass dtype=np.float64 for gradient checks.

Checkpoint format (magic "RFMD", little-endian): version u16, architecture
id u16, then one blob per parameterized layer as a u64 value count followed
by that many f32 values (weights row-major, then biases).  The class count
is recovered from the final blob length.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import Dataset, VEC_LEN

DEFAULT_ARCH = "default_cnn"
_ARCH_IDS = {DEFAULT_ARCH: 0}
_MAGIC = b"RFMD"
_CHECKPOINT_VERSION = 1


class UnknownArchitectureError(ValueError):
    pass


class CheckpointError(Exception):
    """Malformed or inconsistent model checkpoint."""


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng, dtype):
        bound = 1.0 / np.sqrt(in_dim)
        self.w = rng.uniform(-bound, bound, (out_dim, in_dim)).astype(dtype)
        self.b = np.zeros(out_dim, dtype=dtype)
        self.dw = None
        self.db = None

    def forward(self, x):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, dy):
        self.dw = dy.T @ self._x
        self.db = dy.sum(axis=0)
        return dy @ self.w

    def params_and_grads(self):
        return [(self.w, self.dw), (self.b, self.db)]


class Conv1d:
    """Valid-mode strided 1-D convolution via an im2col matmul."""

    def __init__(self, in_ch: int, out_ch: int, width: int, stride: int, rng, dtype):
        bound = 1.0 / np.sqrt(in_ch * width)
        self.w = rng.uniform(-bound, bound, (out_ch, in_ch, width)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.stride = stride
        self.dw = None
        self.db = None

    @staticmethod
    def out_len(in_len: int, width: int, stride: int) -> int:
        return (in_len - width) // stride + 1

    def forward(self, x):  # x: (batch, in_ch, length)
        out_ch, in_ch, width = self.w.shape
        windows = sliding_window_view(x, width, axis=2)[:, :, :: self.stride, :]
        # (batch, positions, in_ch * width)
        cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(
            x.shape[0], -1, in_ch * width
        )
        self._cols = cols
        self._in_shape = x.shape
        y = cols @ self.w.reshape(out_ch, -1).T + self.b
        return y.transpose(0, 2, 1)  # (batch, out_ch, positions)

    def backward(self, dy):  # dy: (batch, out_ch, positions)
        out_ch, in_ch, width = self.w.shape
        dyt = np.ascontiguousarray(dy.transpose(0, 2, 1))  # (batch, pos, out_ch)
        self.dw = np.tensordot(dyt, self._cols, axes=([0, 1], [0, 1])).reshape(self.w.shape)
        self.db = dy.sum(axis=(0, 2))
        dcols = (dyt @ self.w.reshape(out_ch, -1)).reshape(
            dy.shape[0], dy.shape[2], in_ch, width
        )
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        positions = dy.shape[2]
        for k in range(width):
            dx[:, :, k : k + self.stride * positions : self.stride] += dcols[
                :, :, :, k
            ].transpose(0, 2, 1)
        return dx

    def params_and_grads(self):
        return [(self.w, self.dw), (self.b, self.db)]


class ReLU:
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask

    def params_and_grads(self):
        return []


class Flatten:
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def params_and_grads(self):
        return []


class Model:
    """Layer stack plus the input geometry needed to reshape 2k-vectors."""

    def __init__(self, layers, class_count, in_length, arch_id=DEFAULT_ARCH, dtype=np.float32):
        self.layers = layers
        self.class_count = class_count
        self.in_length = in_length  # complex samples per frame; input dim is 2x
        self.arch_id = arch_id
        self.dtype = np.dtype(dtype)

    @property
    def input_dim(self) -> int:
        return 2 * self.in_length

    def param_layers(self):
        return [l for l in self.layers if l.params_and_grads()]

    def params_and_grads(self):
        pairs = []
        for layer in self.layers:
            pairs.extend(layer.params_and_grads())
        return pairs

    def parameter_count(self) -> int:
        return sum(p.size for p, _ in self.params_and_grads())


def init_model(
    arch_id: str = DEFAULT_ARCH,
    seed: int = 0,
    class_count: int = 4,
    dtype=np.float32,
) -> Model:
    """Deterministically initialize the default CNN for `class_count` classes
    (4 for the workbench, 3 in simplex-report mode)."""
    if arch_id != DEFAULT_ARCH:
        raise UnknownArchitectureError(f"unknown architecture {arch_id!r}")
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    rng = np.random.default_rng(seed)
    length = VEC_LEN // 2
    p1 = Conv1d.out_len(length, 8, 2)
    p2 = Conv1d.out_len(p1, 8, 2)
    layers = [
        Conv1d(2, 16, 8, 2, rng, dtype),
        ReLU(),
        Conv1d(16, 32, 8, 2, rng, dtype),
        ReLU(),
        Flatten(),
        Dense(32 * p2, 64, rng, dtype),
        ReLU(),
        Dense(64, class_count, rng, dtype),
    ]
    return Model(layers, class_count, length, arch_id=arch_id, dtype=dtype)


def _as_batch(m: Model, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != m.input_dim:
        raise ValueError(f"expected input vectors of length {m.input_dim}, got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    return x.astype(m.dtype, copy=False), single


def _deinterleave_batch(x: np.ndarray) -> np.ndarray:
    return np.stack((x[:, 0::2], x[:, 1::2]), axis=1)


def _run_forward(m: Model, x2d: np.ndarray) -> np.ndarray:
    h = _deinterleave_batch(x2d)
    for layer in m.layers:
        h = layer.forward(h)
    return h


def _run_backward(m: Model, dlogits: np.ndarray) -> np.ndarray:
    g = dlogits
    for layer in reversed(m.layers):
        g = layer.backward(g)
    batch = g.shape[0]
    out = np.empty((batch, 2 * g.shape[2]), dtype=g.dtype)
    out[:, 0::2] = g[:, 0]
    out[:, 1::2] = g[:, 1]
    return out


def forward(m: Model, x) -> np.ndarray:
    """Logits for a batch (n, 2k) or a single vector (2k,)."""
    xb, single = _as_batch(m, x)
    logits = _run_forward(m, xb)
    return logits[0] if single else logits


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_labels(m: Model, y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.size and (y.min() < 0 or y.max() >= m.class_count):
        raise ValueError(f"labels must be in 0..{m.class_count - 1}")
    return y


def loss(m: Model, x, y) -> float:
    """Mean cross-entropy -log p_y(x) over the batch."""
    xb, _ = _as_batch(m, x)
    yb = _check_labels(m, y)
    if yb.size != xb.shape[0]:
        raise ValueError("label count must match batch size")
    logp = _log_softmax(_run_forward(m, xb).astype(np.float64))
    return float(-logp[np.arange(xb.shape[0]), yb].mean())


def input_gradient(m: Model, x, y) -> np.ndarray:
    """Exact reverse-mode gradient of the per-record cross-entropy with
    respect to the input vector(s); shape matches x."""
    xb, single = _as_batch(m, x)
    yb = _check_labels(m, y)
    if single and yb.size != 1:
        raise ValueError("single input needs a single label")
    if yb.size != xb.shape[0]:
        raise ValueError("label count must match batch size")
    logits = _run_forward(m, xb)
    dlogits = softmax(logits).astype(m.dtype)
    dlogits[np.arange(xb.shape[0]), yb] -= 1.0
    grad = _run_backward(m, dlogits)
    return grad[0] if single else grad


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float | None = None


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    adversarial: "object | None" = None  # attack.AttackConfig
    adversarial_fraction: float = 0.5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.adversarial_fraction <= 1.0:
            raise ValueError("adversarial_fraction must be in [0, 1]")


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._state: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def step(self, params_and_grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for i, (p, g) in enumerate(params_and_grads):
            if i not in self._state:
                self._state[i] = (np.zeros_like(p), np.zeros_like(p))
            mom, vel = self._state[i]
            mom *= b1
            mom += (1.0 - b1) * g
            vel *= b2
            vel += (1.0 - b2) * g * g
            p -= self.lr * (mom / correction1) / (np.sqrt(vel / correction2) + self.eps)


def _train_loop(
    m: Model,
    train_ds: Dataset,
    cfg: TrainConfig,
    test_ds: Dataset | None,
) -> tuple[Model, list[EpochStats]]:
    if len(train_ds) == 0:
        raise ValueError("training dataset is empty")
    _check_labels(m, train_ds.labels)
    attack_cfg = cfg.adversarial
    if attack_cfg is not None:
        from .attack import fgsm_batch  # local import: attack depends on model

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(lr=cfg.learning_rate)
    history: list[EpochStats] = []
    n = len(train_ds)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = train_ds.vectors[idx].astype(m.dtype)
            yb = train_ds.labels[idx].astype(np.int64)
            if attack_cfg is not None:
                k = int(round(cfg.adversarial_fraction * len(idx)))
                if k:
                    xb[:k] = fgsm_batch(m, xb[:k], yb[:k], attack_cfg)
            logits = _run_forward(m, xb)
            probs = softmax(logits)
            losses.append(
                -np.log(np.maximum(probs[np.arange(len(idx)), yb], 1e-300)).mean()
            )
            correct += int((logits.argmax(axis=1) == yb).sum())
            dlogits = probs.astype(m.dtype)
            dlogits[np.arange(len(idx)), yb] -= 1.0
            dlogits /= len(idx)
            _run_backward(m, dlogits)
            opt.step(m.params_and_grads())
        test_acc = evaluate(m, test_ds).accuracy if test_ds is not None else None
        history.append(
            EpochStats(
                epoch=epoch,
                loss=float(np.mean(losses)),
                train_acc=correct / n,
                test_acc=test_acc,
            )
        )
    return m, history


def train(
    m: Model,
    train_ds: Dataset,
    cfg: TrainConfig,
    test_ds: Dataset | None = None,
) -> tuple[Model, list[EpochStats]]:
    """Minibatch-Adam training (adversarial when cfg.adversarial is set).

    Mutates m in place and returns it with the per-epoch history.
    """
    return _train_loop(m, train_ds, cfg, test_ds)


def adversarial_train(m: Model, train_ds: Dataset, attack_cfg, cfg: TrainConfig) -> Model:
    """Adversarial retraining: each minibatch has a cfg.adversarial_fraction
    share replaced by fresh FGSM examples against the current parameters,
    with their true labels kept."""
    cfg = TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
        adversarial=attack_cfg,
        adversarial_fraction=cfg.adversarial_fraction,
    )
    m, _ = _train_loop(m, train_ds, cfg, None)
    return m


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # (C, C) counts, rows = true class
    probs: np.ndarray  # (n, C) softmax vectors, retained for detection


def evaluate(m: Model, ds: Dataset, batch_size: int = 512) -> EvalResult:
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    _check_labels(m, ds.labels)
    probs = np.empty((len(ds), m.class_count), dtype=np.float64)
    for start in range(0, len(ds), batch_size):
        xb = ds.vectors[start : start + batch_size].astype(m.dtype)
        probs[start : start + len(xb)] = softmax(_run_forward(m, xb))
    preds = probs.argmax(axis=1)
    confusion = np.zeros((m.class_count, m.class_count), dtype=np.int64)
    np.add.at(confusion, (ds.labels.astype(np.int64), preds), 1)
    return EvalResult(
        accuracy=float((preds == ds.labels).mean()),
        confusion=confusion,
        probs=probs,
    )


def write_history_csv(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,train_acc,test_acc\n")
        for h in history:
            test = "" if h.test_acc is None else f"{h.test_acc:.6f}"
            fh.write(f"{h.epoch},{h.loss:.6f},{h.train_acc:.6f},{test}\n")


def save_model(m: Model, path) -> None:
    """Write an RFMD checkpoint; parameters are stored as f32."""
    if m.arch_id not in _ARCH_IDS:
        raise UnknownArchitectureError(m.arch_id)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HH", _CHECKPOINT_VERSION, _ARCH_IDS[m.arch_id]))
        for layer in m.param_layers():
            blob = np.concatenate(
                [p.astype("<f4").ravel() for p, _ in layer.params_and_grads()]
            )
            fh.write(struct.pack("<Q", blob.size))
            blob.tofile(fh)


def load_model(path) -> Model:
    """Rebuild the default CNN from an RFMD checkpoint.  The class count is
    inferred from the final dense blob (64*C weights + C biases)."""
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not an RFMD checkpoint (bad magic)")
    if len(buf) < 8:
        raise CheckpointError(f"{path}: truncated header")
    version, arch_code = struct.unpack_from("<HH", buf, 4)
    if version != _CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if arch_code != _ARCH_IDS[DEFAULT_ARCH]:
        raise CheckpointError(f"{path}: unknown architecture id {arch_code}")

    blobs = []
    offset = 8
    while offset < len(buf):
        if offset + 8 > len(buf):
            raise CheckpointError(f"{path}: truncated blob header")
        (count,) = struct.unpack_from("<Q", buf, offset)
        offset += 8
        end = offset + 4 * count
        if end > len(buf):
            raise CheckpointError(f"{path}: truncated blob ({count} values declared)")
        blobs.append(np.frombuffer(buf, dtype="<f4", count=count, offset=offset).copy())
        offset = end
    if len(blobs) != 4:
        raise CheckpointError(f"{path}: expected 4 layer blobs, found {len(blobs)}")
    if blobs[3].size % 65 != 0:
        raise CheckpointError(f"{path}: final dense blob size {blobs[3].size} not 65*C")
    class_count = blobs[3].size // 65

    m = init_model(DEFAULT_ARCH, seed=0, class_count=class_count, dtype=np.float32)
    for layer, blob in zip(m.param_layers(), blobs):
        shapes = [p.shape for p, _ in layer.params_and_grads()]
        expected = sum(int(np.prod(s)) for s in shapes)
        if blob.size != expected:
            raise CheckpointError(
                f"{path}: blob of {blob.size} values does not fit layer of {expected}"
            )
        pos = 0
        for p, _ in layer.params_and_grads():
            p[...] = blob[pos : pos + p.size].reshape(p.shape)
            pos += p.size
    return m
