"""Compact gradient-trained softmax classifier.

A deliberately small stand-in for full-scale deep architectures: an
optional one-stage 1-D convolution front followed by dense ReLU layers
and a softmax output, trained with mini-batch Adam or SGD-with-momentum
and validation-loss early stopping. Parameters live in one flat float64
vector with an explicit layout map, which keeps optimizers, checkpoints,
and finite-difference checks trivial.

Everything is deterministic given the seeds; wall-clock timings are the
only non-reproducible outputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class ConvFrontConfig:
    """One bank of 1-D kernels over the (2, N) input.

    With the "relu" activation the stage is a plain real convolution.
    With "modulus" each kernel is read as a complex filter h (its 2L real
    weights are the real and imaginary taps) and the stage emits
    |h * z| per position: the noncoherent matched-filter statistic, which
    is invariant to the frame's unknown carrier phase.

    pool="avg" averages over positions and emits two statistics per
    kernel (mean response and mean squared response), trading positional
    detail for per-frame variance low enough that a few hundred training
    frames saturate the model.
    """

    n_kernels: int = 16
    kernel_len: int = 3
    stride: int = 1
    activation: str = "relu"  # "relu" | "modulus"
    pool: str = "none"  # "none" | "avg"

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.activation not in ("relu", "modulus"):
            raise ConfigurationError("conv activation must be 'relu' or 'modulus'")
        if self.pool not in ("none", "avg"):
            raise ConfigurationError("conv pool must be 'none' or 'avg'")

    def out_len(self, input_len: int) -> int:
        return (input_len - self.kernel_len) // self.stride + 1

    def feature_dim(self, input_len: int) -> int:
        if self.pool == "avg":
            return 2 * self.n_kernels
        return self.n_kernels * self.out_len(input_len)


@dataclass(frozen=True)
class ArchConfig:
    """Network shape. Input is a (2, input_len) real feature matrix."""

    input_len: int = 128
    hidden: tuple[int, ...] = (64, 32)
    n_classes: int = 10
    conv_front: ConvFrontConfig | None = None

    def __post_init__(self) -> None:
        if len(self.hidden) < 1:
            raise ConfigurationError("At least one hidden layer is required")
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")
        if self.conv_front is not None and self.conv_front.kernel_len > self.input_len:
            raise ConfigurationError("conv kernel longer than the input")


def param_layout(arch: ArchConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs defining the flat parameter vector."""
    layout: list[tuple[str, tuple[int, ...]]] = []
    if arch.conv_front is not None:
        k, ln = arch.conv_front.n_kernels, arch.conv_front.kernel_len
        layout.append(("conv_w", (2 * ln, k)))
        layout.append(("conv_b", (k,)))
        in_dim = arch.conv_front.feature_dim(arch.input_len)
    else:
        in_dim = 2 * arch.input_len
    for i, width in enumerate(arch.hidden):
        layout.append((f"w{i}", (in_dim, width)))
        layout.append((f"b{i}", (width,)))
        in_dim = width
    layout.append(("w_out", (in_dim, arch.n_classes)))
    layout.append(("b_out", (arch.n_classes,)))
    return layout


def n_params(arch: ArchConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_layout(arch))


def _unpack(params: np.ndarray, arch: ArchConfig) -> dict[str, np.ndarray]:
    views: dict[str, np.ndarray] = {}
    pos = 0
    for name, shape in param_layout(arch):
        size = int(np.prod(shape))
        views[name] = params[pos : pos + size].reshape(shape)
        pos += size
    return views


@dataclass
class Model:
    arch: ArchConfig
    params: np.ndarray  # flat float64
    init_seed: int

    def copy(self) -> "Model":
        return Model(self.arch, self.params.copy(), self.init_seed)


def init_model(arch: ArchConfig, seed: int) -> Model:
    """Fan-in-scaled uniform weights (variance 2/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(n_params(arch), dtype=np.float64)
    views = _unpack(params, arch)
    for name, shape in param_layout(arch):
        if name.startswith(("w", "conv_w")):
            fan_in = shape[0]
            bound = np.sqrt(6.0 / fan_in)
            views[name][...] = rng.uniform(-bound, bound, size=shape)
    return Model(arch=arch, params=params, init_seed=seed)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def _prepare(arch: ArchConfig, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Input design matrix: flat (B, 2N) or im2col (B, L_out, 2*kernel_len).

    Depends only on the inputs, so callers that run many passes over the
    same frames (training loops) prepare once and slice batches from it.
    """
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 3 or x.shape[1] != 2 or x.shape[2] != arch.input_len:
        raise ConfigurationError(
            f"Expected features of shape (B, 2, {arch.input_len}), got {x.shape}"
        )
    if arch.conv_front is None:
        return x.reshape(x.shape[0], -1)
    cf = arch.conv_front
    # im2col: (B, 2, N) -> (B, L_out, 2*kernel_len); last axis holds the
    # real-part window followed by the imaginary-part window.
    cols = np.lib.stride_tricks.sliding_window_view(x, cf.kernel_len, axis=2)
    cols = cols[:, :, :: cf.stride, :]
    cols = cols.transpose(0, 2, 1, 3).reshape(x.shape[0], -1, 2 * cf.kernel_len)
    return np.ascontiguousarray(cols)


def _forward_cached(views: dict[str, np.ndarray], arch: ArchConfig, prep: np.ndarray):
    """Logits plus the intermediate activations needed for backprop."""
    cache: dict[str, np.ndarray] = {}
    if arch.conv_front is not None:
        cf = arch.conv_front
        ln = cf.kernel_len
        cols = prep
        flat = cols.reshape(-1, 2 * ln)  # (B*L_out, 2*ln): GEMM-friendly
        cache["conv_flat"] = flat
        w = views["conv_w"]
        if cf.activation == "modulus":
            # Re and Im of the complex correlation h* . z per position.
            w_rot = np.concatenate([-w[ln:], w[:ln]], axis=0)
            both = flat @ np.concatenate([w, w_rot], axis=1)
            both = both.reshape(cols.shape[0], cols.shape[1], 2 * cf.n_kernels)
            re = both[:, :, : cf.n_kernels]
            im = both[:, :, cf.n_kernels :]
            mag = np.sqrt(re * re + im * im + 1e-12)
            a = mag + views["conv_b"]
            cache["conv_re"] = re
            cache["conv_im"] = im
            cache["conv_mag"] = mag
        else:
            z = (flat @ w).reshape(cols.shape[0], cols.shape[1], cf.n_kernels) + views["conv_b"]
            a = _relu(z)
            cache["conv_z"] = z
        if cf.pool == "avg":
            cache["conv_a"] = a
            h = np.concatenate([a.mean(axis=1), (a * a).mean(axis=1)], axis=1)
        else:
            h = a.reshape(a.shape[0], -1)
    else:
        h = prep

    for i in range(len(arch.hidden)):
        cache[f"h{i}"] = h
        z = h @ views[f"w{i}"] + views[f"b{i}"]
        cache[f"z{i}"] = z
        h = _relu(z)
    cache["h_out"] = h
    logits = h @ views["w_out"] + views["b_out"]
    return logits, cache


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Class probabilities, rows summing to 1 (stable softmax)."""
    views = _unpack(model.params, model.arch)
    logits, _ = _forward_cached(views, model.arch, _prepare(model.arch, x))
    return np.exp(_log_softmax(logits))


def _loss_grad_logp(model: Model, prep: np.ndarray, y: np.ndarray):
    arch = model.arch
    views = _unpack(model.params, arch)
    logits, cache = _forward_cached(views, arch, prep)
    logp = _log_softmax(logits)
    n = prep.shape[0]
    loss = float(-np.mean(logp[np.arange(n), y]))

    grad = np.zeros_like(model.params)
    gviews = _unpack(grad, arch)

    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    gviews["w_out"][...] = cache["h_out"].T @ dlogits
    gviews["b_out"][...] = dlogits.sum(axis=0)
    dh = dlogits @ views["w_out"].T

    for i in reversed(range(len(arch.hidden))):
        dz = dh * (cache[f"z{i}"] > 0)
        gviews[f"w{i}"][...] = cache[f"h{i}"].T @ dz
        gviews[f"b{i}"][...] = dz.sum(axis=0)
        dh = dz @ views[f"w{i}"].T

    if arch.conv_front is not None:
        cf = arch.conv_front
        ln = cf.kernel_len
        if cf.pool == "avg":
            a = cache["conv_a"]
            k = cf.n_kernels
            n_pos = a.shape[1]
            da = (dh[:, None, :k] + dh[:, None, k:] * 2.0 * a) / n_pos
        else:
            da = dh.reshape(n, -1, cf.n_kernels)
        flat = cache["conv_flat"]
        if cf.activation == "modulus":
            gviews["conv_b"][...] = da.sum(axis=(0, 1))
            scale = da / cache["conv_mag"]
            k = cf.n_kernels
            dboth = np.concatenate([scale * cache["conv_re"], scale * cache["conv_im"]], axis=2)
            dw_both = flat.T @ dboth.reshape(-1, 2 * k)
            dw = dw_both[:, :k]
            dw_rot = dw_both[:, k:]
            dw[:ln] += dw_rot[ln:]
            dw[ln:] -= dw_rot[:ln]
            gviews["conv_w"][...] = dw
        else:
            dz = da * (cache["conv_z"] > 0)
            gviews["conv_w"][...] = flat.T @ dz.reshape(-1, cf.n_kernels)
            gviews["conv_b"][...] = dz.sum(axis=(0, 1))

    return loss, grad, logp


def loss_and_grad(model: Model, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its flat-parameter gradient."""
    y = np.asarray(y, dtype=np.int64)
    if y.min() < 0 or y.max() >= model.arch.n_classes:
        raise ConfigurationError("labels out of range")
    loss, grad, _ = _loss_grad_logp(model, _prepare(model.arch, x), y)
    return loss, grad


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    """Argmax labels; ties broken toward the lowest class index."""
    return np.argmax(forward(model, x), axis=1)


def evaluate(model: Model, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Accuracy and a confusion matrix (rows true class, columns predicted)."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise DataError("Cannot evaluate on an empty split")
    pred = predict(model, x)
    k = model.arch.n_classes
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y, pred), 1)
    acc = float(np.trace(cm) / y.size)
    return acc, cm


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"  # "adam" | "sgd"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 100
    early_stop_patience: int = 5
    seed: int = 0
    dtype: str = "float64"  # "float64" | "float32" (faster, same determinism)

    def __post_init__(self) -> None:
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError("optimizer must be 'adam' or 'sgd'")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.early_stop_patience < 1:
            raise ConfigurationError("early_stop_patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be >= 0")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError("dtype must be 'float64' or 'float32'")


@dataclass
class TrainRecord:
    epochs_run: int
    seconds_per_epoch: float
    total_seconds: float
    best_epoch: int
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)


def _dataset_loss(views: dict[str, np.ndarray], arch: ArchConfig, prep: np.ndarray, y: np.ndarray):
    logits, _ = _forward_cached(views, arch, prep)
    logp = _log_softmax(logits)
    loss = float(-np.mean(logp[np.arange(prep.shape[0]), y]))
    acc = float(np.mean(np.argmax(logp, axis=1) == y))
    return loss, acc


def train(
    model: Model,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
) -> tuple[Model, TrainRecord]:
    """Mini-batch training with validation-loss early stopping.

    Runs up to cfg.max_epochs shuffled epochs, stops once the validation
    loss has not improved for cfg.early_stop_patience consecutive epochs,
    and returns the parameters of the best validation-loss epoch.
    Deterministic given cfg.seed (timing fields excepted).
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise DataError("train() needs non-empty train and validation splits")

    record = TrainRecord(epochs_run=0, seconds_per_epoch=0.0, total_seconds=0.0, best_epoch=-1)
    if cfg.max_epochs == 0:
        return model.copy(), record

    rng = np.random.default_rng(cfg.seed)
    arch = model.arch
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    prep_train = _prepare(arch, x_train, dtype)
    prep_val = _prepare(arch, x_val, dtype)
    params = model.params.astype(dtype)
    work = Model(arch, params, model.init_seed)

    adam_m = np.zeros_like(params)
    adam_v = np.zeros_like(params)
    sgd_vel = np.zeros_like(params)
    step = 0

    best_params = params.copy()
    best_val = np.inf
    best_epoch = -1
    stall = 0
    n = x_train.shape[0]
    epoch_seconds: list[float] = []

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        loss_sum = 0.0
        hit_sum = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            yb = y_train[idx]
            loss, grad, logp = _loss_grad_logp(work, prep_train[idx], yb)
            loss_sum += loss * idx.size
            hit_sum += int(np.sum(np.argmax(logp, axis=1) == yb))
            step += 1
            if cfg.optimizer == "adam":
                adam_m = cfg.beta1 * adam_m + (1 - cfg.beta1) * grad
                adam_v = cfg.beta2 * adam_v + (1 - cfg.beta2) * grad * grad
                m_hat = adam_m / (1 - cfg.beta1**step)
                v_hat = adam_v / (1 - cfg.beta2**step)
                params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            else:
                sgd_vel = cfg.momentum * sgd_vel - cfg.learning_rate * grad
                params += sgd_vel

        views = _unpack(params, arch)
        val_loss, val_acc = _dataset_loss(views, arch, prep_val, y_val)
        epoch_seconds.append(time.perf_counter() - t0)

        record.train_loss.append(loss_sum / n)
        record.train_acc.append(hit_sum / n)
        record.val_loss.append(val_loss)
        record.val_acc.append(val_acc)

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.early_stop_patience:
                break

    record.epochs_run = len(epoch_seconds)
    record.total_seconds = float(np.sum(epoch_seconds))
    record.seconds_per_epoch = record.total_seconds / max(record.epochs_run, 1)
    record.best_epoch = best_epoch
    return Model(arch, best_params.astype(np.float64), model.init_seed), record
