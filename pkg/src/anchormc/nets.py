"""Small MLP and one-conv-layer CNN classifiers with hand-rolled backprop,
the softmax categorical likelihood, and SGD MAP estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .targets import GaussianPrior


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; parameter count is fully determined by it.

    mlp: ``widths`` = (n0, ..., nD) with ReLU between linear layers and a
    softmax head; (n0, K) is a plain linear-softmax model.

    cnn: one conv layer (``conv_channels`` kernels of size ``kernel``,
    stride 1, padding 1) -> ReLU -> 2x2 max-pool -> linear -> softmax.
    """

    kind: str
    widths: tuple[int, ...] = ()
    image_shape: tuple[int, int] = (28, 28)
    in_channels: int = 1
    conv_channels: int = 4
    kernel: int = 3
    n_classes: int = 8

    def __post_init__(self):
        if self.kind == "mlp":
            if len(self.widths) < 2:
                raise ValueError("mlp needs at least input and output widths")
            if self.widths[-1] < 2:
                raise ValueError("output width (number of classes) must be >= 2")
        elif self.kind == "cnn":
            if self.n_classes < 2:
                raise ValueError("number of classes must be >= 2")
            h, w = self.image_shape
            if h % 2 or w % 2:
                raise ValueError("2x2 max-pool requires even image dimensions")
        else:
            raise ValueError(f"unknown architecture kind {self.kind!r}")

    @property
    def n_outputs(self) -> int:
        return self.widths[-1] if self.kind == "mlp" else self.n_classes

    @property
    def layer_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """(weight shape, bias shape) per layer, in parameter-vector order."""
        if self.kind == "mlp":
            return [
                ((n_out, n_in), (n_out,))
                for n_in, n_out in zip(self.widths[:-1], self.widths[1:])
            ]
        h, w = self.image_shape
        c = self.conv_channels
        flat = c * (h // 2) * (w // 2)
        return [
            ((c, self.in_channels, self.kernel, self.kernel), (c,)),
            ((self.n_classes, flat), (self.n_classes,)),
        ]

    @property
    def n_params(self) -> int:
        return sum(
            int(np.prod(ws)) + int(np.prod(bs)) for ws, bs in self.layer_shapes
        )


def mnist7_cnn_spec() -> NetworkSpec:
    """The 28x28 8-class CNN used throughout: 4 channels of 3x3 kernels,
    unit stride and padding, 2x2 max-pool, linear head; 6320 parameters."""
    return NetworkSpec(kind="cnn", image_shape=(28, 28), n_classes=8)


def unpack(spec: NetworkSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into per-layer (W, b), layer-major with
    weights before biases. Views, not copies."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ValueError(
            f"parameter vector has shape {theta.shape}, spec needs ({spec.n_params},)"
        )
    out = []
    pos = 0
    for ws, bs in spec.layer_shapes:
        nw, nb = int(np.prod(ws)), int(np.prod(bs))
        out.append((theta[pos : pos + nw].reshape(ws), theta[pos + nw : pos + nw + nb]))
        pos += nw + nb
    return out


def pack(spec: NetworkSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """x: (n, h, w, c) zero-padded by (k-1)//2 -> (n, h*w, k*k*c) patches."""
    n, h, w, c = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # windows: (n, h, w, c, k, k) -> (n, h*w, k*k*c) with (ki, kj, c) ordering
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n, h * w, k * k * c)
    return cols


def _forward_internal(spec: NetworkSpec, theta: np.ndarray, x: np.ndarray):
    """Returns (log-probabilities, cache for backprop). x: (n, features)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    layers = unpack(spec, theta)
    if spec.kind == "mlp":
        if x.shape[1] != spec.widths[0]:
            raise ValueError(
                f"input width {x.shape[1]} does not match spec width {spec.widths[0]}"
            )
        activations = [x]
        pre = None
        for i, (w, b) in enumerate(layers):
            pre = activations[-1] @ w.T + b
            if i < len(layers) - 1:
                activations.append(np.maximum(pre, 0.0))
        cache = {"layers": layers, "activations": activations}
        return _log_softmax(pre), cache

    h, w_ = spec.image_shape
    c_in, c_out, k = spec.in_channels, spec.conv_channels, spec.kernel
    if x.shape[1] != h * w_ * c_in:
        raise ValueError(
            f"input width {x.shape[1]} does not match image shape {h}x{w_}x{c_in}"
        )
    (wc, bc), (wl, bl) = layers
    n = x.shape[0]
    img = x.reshape(n, h, w_, c_in)
    cols = _im2col(img, k)  # (n, h*w, k*k*c_in)
    wc_mat = wc.transpose(2, 3, 1, 0).reshape(k * k * c_in, c_out)  # (ki,kj,c) order
    conv = cols @ wc_mat + bc  # (n, h*w, c_out)
    relu = np.maximum(conv, 0.0)
    grid = relu.reshape(n, h, w_, c_out)
    # 2x2 windows in row-major order so argmax ties break at the first index
    win = (
        grid.reshape(n, h // 2, 2, w_ // 2, 2, c_out)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, h // 2, w_ // 2, c_out, 4)
    )
    amax = win.argmax(axis=-1)
    pooled = np.take_along_axis(win, amax[..., None], axis=-1)[..., 0]
    flat = pooled.reshape(n, -1)
    logits = flat @ wl.T + bl
    cache = {
        "layers": layers,
        "cols": cols,
        "conv": conv,
        "amax": amax,
        "flat": flat,
        "n": n,
    }
    return _log_softmax(logits), cache


def forward(spec: NetworkSpec, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probabilities, shape (n, K) (or (K,) for a single input)."""
    single = np.asarray(x).ndim == 1
    logp, _ = _forward_internal(spec, theta, x)
    p = np.exp(logp)
    return p[0] if single else p


def log_likelihood_and_grad(
    spec: NetworkSpec, theta: np.ndarray, data: Dataset
) -> tuple[float, np.ndarray]:
    """Sum of log softmax probabilities at the labels, and its exact gradient."""
    if data.y is None:
        raise ValueError("log-likelihood needs labeled data")
    logp, cache = _forward_internal(spec, theta, data.x)
    n, k = logp.shape
    idx = np.arange(n)
    ll = float(logp[idx, data.y].sum())

    probs = np.exp(logp)
    dlogits = -probs
    dlogits[idx, data.y] += 1.0  # d ll / d logits = onehot - p

    layers = cache["layers"]
    if spec.kind == "mlp":
        activations = cache["activations"]
        grads = [None] * len(layers)
        delta = dlogits
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            grads[i] = (delta.T @ activations[i], delta.sum(axis=0))
            if i > 0:
                delta = (delta @ w) * (activations[i] > 0)
        return ll, pack(spec, grads)

    (wc, bc), (wl, bl) = layers
    h, w_ = spec.image_shape
    c_in, c_out, kk = spec.in_channels, spec.conv_channels, spec.kernel
    flat, cols, conv, amax = cache["flat"], cache["cols"], cache["conv"], cache["amax"]
    dwl = dlogits.T @ flat
    dbl = dlogits.sum(axis=0)
    dflat = dlogits @ wl  # (n, flat)
    dpool = dflat.reshape(n, h // 2, w_ // 2, c_out)
    # route gradient back through max-pool to the winning window position
    dwin = np.zeros((n, h // 2, w_ // 2, c_out, 4))
    np.put_along_axis(dwin, amax[..., None], dpool[..., None], axis=-1)
    drelu = (
        dwin.reshape(n, h // 2, w_ // 2, c_out, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, h, w_, c_out)
        .reshape(n, h * w_, c_out)
    )
    dconv = drelu * (conv > 0)
    wc_grad_mat = np.einsum("npk,npc->kc", cols, dconv)  # (k*k*c_in, c_out)
    dwc = wc_grad_mat.reshape(kk, kk, c_in, c_out).transpose(3, 2, 0, 1)
    dbc = dconv.sum(axis=(0, 1))
    return ll, pack(spec, [(dwc, dbc), (dwl, dbl)])


def make_loglik(spec: NetworkSpec, data: Dataset):
    """Bind a dataset into the (loglik, grad_loglik) pair TargetDensity expects."""

    def ll(theta: np.ndarray) -> float:
        return log_likelihood_and_grad(spec, theta, data)[0]

    def grad(theta: np.ndarray) -> np.ndarray:
        return log_likelihood_and_grad(spec, theta, data)[1]

    return ll, grad


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg: str, last_theta: np.ndarray | None = None):
        super().__init__(msg)
        self.last_theta = last_theta


@dataclass(frozen=True)
class OptConfig:
    learning_rate: float = 1e-2
    batch_size: int = 64
    max_epochs: int = 160
    patience: int = 10
    momentum: float = 0.0
    lr_drop_frac: float = 0.8  # decay lr by 10x after this fraction of max_epochs


@dataclass(frozen=True)
class MapResult:
    theta: np.ndarray
    epochs_used: int
    val_nll: float


def init_params(spec: NetworkSpec, prior: GaussianPrior, rng: np.random.Generator) -> np.ndarray:
    # initialization matches the prior scale
    return rng.normal(0.0, np.sqrt(prior.variance), size=spec.n_params)


def _mean_nll(spec: NetworkSpec, theta: np.ndarray, data: Dataset) -> float:
    logp, _ = _forward_internal(spec, theta, data.x)
    return float(-logp[np.arange(len(data)), data.y].mean())


def map_estimate(
    spec: NetworkSpec,
    prior: GaussianPrior,
    train: Dataset,
    val: Dataset,
    cfg: OptConfig = OptConfig(),
    seed: int = 0,
) -> MapResult:
    """SGD ascent on log-likelihood + log-prior with early stopping on
    validation NLL; restores the best iterate. Deterministic given
    (seed, cfg, data). ``epochs_used`` counts full likelihood+gradient
    sweeps over the training data."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    if prior.dim != spec.n_params:
        raise ValueError(
            f"prior dimension {prior.dim} does not match parameter count {spec.n_params}"
        )
    rng = np.random.default_rng(seed)
    theta = init_params(spec, prior, rng)
    velocity = np.zeros_like(theta)
    m = len(train)
    best_nll = np.inf
    best_theta = theta.copy()
    since_best = 0
    epochs_used = 0
    drop_at = int(np.ceil(cfg.lr_drop_frac * cfg.max_epochs))
    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate * (0.1 if epoch >= drop_at else 1.0)
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            batch = train.subset(order[start : start + cfg.batch_size])
            ll, g_ll = log_likelihood_and_grad(spec, theta, batch)
            if not np.isfinite(ll):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", last_theta=best_theta
                )
            g = g_ll / len(batch) + prior.grad_log_density(theta) / m
            velocity = cfg.momentum * velocity + g
            theta = theta + lr * velocity
        epochs_used += 1
        val_nll = _mean_nll(spec, theta, val)
        if not np.isfinite(val_nll):
            raise TrainingDivergedError(
                f"validation loss non-finite at epoch {epoch}", last_theta=best_theta
            )
        if val_nll < best_nll:
            best_nll = val_nll
            best_theta = theta.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return MapResult(theta=best_theta, epochs_used=epochs_used, val_nll=float(best_nll))


def map_ascent(
    loglik,
    grad_loglik,
    prior: GaussianPrior,
    learning_rate: float = 0.1,
    max_steps: int = 2000,
    tol: float = 1e-8,
    seed: int = 0,
    theta0: np.ndarray | None = None,
) -> np.ndarray:
    """Full-batch gradient ascent on loglik + log-prior for an injected
    likelihood (the network-free counterpart of map_estimate; used for
    surrogate targets and sanity oracles)."""
    rng = np.random.default_rng(seed)
    theta = (
        rng.normal(0.0, np.sqrt(prior.variance), size=prior.dim)
        if theta0 is None
        else np.array(theta0, dtype=float)
    )
    for _ in range(max_steps):
        g = np.asarray(grad_loglik(theta), dtype=float) + prior.grad_log_density(theta)
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("gradient became non-finite", last_theta=theta)
        step = learning_rate * g
        theta = theta + step
        if np.linalg.norm(step) < tol:
            break
    return theta


class EnsembleMemberError(RuntimeError):
    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"ensemble member with seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause


def deep_ensemble(
    spec: NetworkSpec,
    prior: GaussianPrior,
    train: Dataset,
    val: Dataset,
    cfg: OptConfig = OptConfig(),
    n_members: int = 10,
    seeds: list[int] | None = None,
) -> list[MapResult]:
    """Independent MAP estimates with distinct seeds (distinct inits and
    batch orders)."""
    if n_members < 1:
        raise ValueError("ensemble needs at least one member")
    if seeds is None:
        seeds = list(range(n_members))
    if len(seeds) != n_members:
        raise ValueError(f"expected {n_members} seeds, got {len(seeds)}")
    members = []
    for seed in seeds:
        try:
            members.append(map_estimate(spec, prior, train, val, cfg, seed=seed))
        except Exception as e:
            raise EnsembleMemberError(seed, e) from e
    return members
