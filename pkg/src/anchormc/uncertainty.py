"""Posterior-predictive quantities: entropy decomposition, first-order
metrics, confidence features, the incorrect/OOD meta-classifier, and the
abstaining 2-level predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import Dataset
from .nets import MapResult, NetworkSpec, OptConfig, forward, map_estimate
from .parallel import RunResult, island_weights
from .targets import GaussianPrior

FEATURE_NAMES = (
    "p_max_mean",
    "h_total",
    "mean_p_max",
    "mean_delta_max",
    "h_epistemic",
    "var_p_max",
    "var_delta_max",
)


@dataclass(frozen=True)
class PredictiveMatrix:
    """Per-input, per-particle class probabilities with particle weights.

    probs: (n_inputs, n_particles, K); weights: (n_particles,), nonnegative,
    summing to 1 (island weight spread evenly over that island's particles).
    """

    probs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.probs.ndim != 3:
            raise ValueError(f"probs must be 3-d, got shape {self.probs.shape}")
        if self.weights.shape != (self.probs.shape[1],):
            raise ValueError("one weight per particle required")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("particle weights must sum to 1")

    @property
    def n_classes(self) -> int:
        return self.probs.shape[2]

    @property
    def mean(self) -> np.ndarray:
        """Weighted posterior-mean probability vector per input, (n, K)."""
        return np.einsum("j,njk->nk", self.weights, self.probs)


def predictive(samples: np.ndarray, weights: np.ndarray, spec: NetworkSpec, x: np.ndarray) -> PredictiveMatrix:
    """Evaluate the network at every sampled parameter vector."""
    samples = np.atleast_2d(samples)
    weights = np.asarray(weights, dtype=float)
    probs = np.stack([forward(spec, theta, x) for theta in samples], axis=1)
    return PredictiveMatrix(probs=probs, weights=weights / weights.sum())


def predictive_from_results(results: list[RunResult], spec: NetworkSpec, x: np.ndarray) -> PredictiveMatrix:
    """Pool island samples with evidence weights spread over each island's
    particles."""
    omega, excluded = island_weights(results)
    usable = [r for r in results if r.p not in excluded]
    samples = np.concatenate([r.samples for r in usable], axis=0)
    weights = np.concatenate(
        [np.full(len(r.samples), w / len(r.samples)) for r, w in zip(usable, omega)]
    )
    return predictive(samples, weights, spec, x)


def _entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats along the last axis, with 0*log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


@dataclass(frozen=True)
class EntropyReport:
    total: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray


def entropy_decomposition(matrix: PredictiveMatrix) -> EntropyReport:
    """Split total predictive entropy into aleatoric (mean per-particle
    entropy) and epistemic (the Jensen gap) parts, in nats."""
    h_tot = _entropy(matrix.mean)
    h_al = np.einsum("j,nj->n", matrix.weights, _entropy(matrix.probs))
    h_ep = h_tot - h_al
    # the gap is nonnegative up to roundoff; clamp tiny negatives
    h_ep = np.where((h_ep < 0) & (h_ep > -1e-9), 0.0, h_ep)
    return EntropyReport(total=h_tot, aleatoric=h_al, epistemic=h_ep)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    nll: float
    brier: float
    ece: float


def predict_classes(matrix: PredictiveMatrix) -> np.ndarray:
    """Argmax of the posterior-mean probabilities; ties go to the lowest class."""
    return matrix.mean.argmax(axis=1)


def metrics(matrix: PredictiveMatrix, labels: np.ndarray, ece_bins: int = 15) -> Metrics:
    if labels is None:
        raise ValueError("metrics need labeled inputs")
    labels = np.asarray(labels)
    m = matrix.mean
    n, k = m.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    pred = m.argmax(axis=1)
    correct = pred == labels
    accuracy = float(correct.mean())
    eps_floor = np.finfo(float).tiny
    nll = float(-np.log(np.maximum(m[np.arange(n), labels], eps_floor)).mean())
    onehot = np.zeros_like(m)
    onehot[np.arange(n), labels] = 1.0
    brier = float(((m - onehot) ** 2).sum(axis=1).mean())
    conf = m.max(axis=1)
    edges = np.linspace(0.0, 1.0, ece_bins + 1)
    which = np.clip(np.digitize(conf, edges[1:-1]), 0, ece_bins - 1)
    ece = 0.0
    for b in range(ece_bins):
        mask = which == b
        if mask.any():
            ece += mask.mean() * abs(correct[mask].mean() - conf[mask].mean())
    return Metrics(accuracy=accuracy, nll=nll, brier=brier, ece=float(ece))


def features(matrix: PredictiveMatrix) -> np.ndarray:
    """The 7 confidence features per input (see FEATURE_NAMES).

    Moments of p_max and delta_max (top-1 minus top-2 probability) are taken
    under the weighted particle law; variances are exactly 0 for a single
    particle.
    """
    if matrix.n_classes < 2:
        raise ValueError("delta_max needs at least 2 classes")
    sorted_p = np.sort(matrix.probs, axis=-1)
    p_max = sorted_p[..., -1]  # (n, particles)
    delta = sorted_p[..., -1] - sorted_p[..., -2]
    w = matrix.weights
    e_pmax = p_max @ w
    e_delta = delta @ w
    var_pmax = np.maximum((p_max**2) @ w - e_pmax**2, 0.0)
    var_delta = np.maximum((delta**2) @ w - e_delta**2, 0.0)
    ent = entropy_decomposition(matrix)
    p_max_mean = matrix.mean.max(axis=1)
    return np.column_stack(
        [p_max_mean, ent.total, e_pmax, e_delta, ent.epistemic, var_pmax, var_delta]
    )


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), std=np.where(std > 0, std, 1.0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass(frozen=True)
class MetaClassifier:
    """Binary incorrect/OOD classifier over the 7 features: 7 -> hidden -> 2
    MLP trained with the same MAP machinery as the base networks.
    Standardization statistics are frozen from the meta-training set."""

    spec: NetworkSpec
    theta: np.ndarray
    standardizer: Standardizer

    def predict_incorrect(self, raw_features: np.ndarray) -> np.ndarray:
        """P(z = 1), i.e. probability the base prediction is wrong or OOD."""
        probs = forward(self.spec, self.theta, self.standardizer.apply(raw_features))
        return np.atleast_2d(probs)[:, 1]


def train_meta(
    raw_features: np.ndarray,
    labels: np.ndarray,
    cfg: OptConfig = OptConfig(learning_rate=0.05, max_epochs=200, patience=20),
    hidden: int = 50,
    prior_variance: float = 1.0,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> MetaClassifier:
    """Fit the meta-classifier. ``labels``: 1 for incorrect/OOD, 0 for correct."""
    labels = np.asarray(labels, dtype=np.int64)
    if set(np.unique(labels)) - {0, 1}:
        raise ValueError("meta labels must be 0/1")
    if len(np.unique(labels)) < 2:
        raise ValueError("meta training set contains a single class")
    std = Standardizer.fit(raw_features)
    x = std.apply(raw_features)
    spec = NetworkSpec(kind="mlp", widths=(x.shape[1], hidden, 2))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(x))
    n_val = max(1, int(val_fraction * len(x)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    train = Dataset(x=x[train_idx], y=labels[train_idx])
    val = Dataset(x=x[val_idx], y=labels[val_idx], split="validation")
    if len(np.unique(train.y)) < 2:
        raise ValueError("meta training split contains a single class")
    prior = GaussianPrior(variance=prior_variance, dim=spec.n_params)
    result: MapResult = map_estimate(spec, prior, train, val, cfg, seed=seed)
    return MetaClassifier(spec=spec, theta=result.theta, standardizer=std)


@dataclass(frozen=True)
class AbstentionResult:
    abstain: np.ndarray  # per-input decision
    accuracy: float  # 2-level accuracy


def abstain_2level(
    p_incorrect: np.ndarray, base_correct: np.ndarray, threshold: float
) -> AbstentionResult:
    """Abstain when the meta-classifier flags the input; an abstention counts
    as correct exactly when the base prediction would have been wrong
    (OOD inputs count as wrong)."""
    p_incorrect = np.asarray(p_incorrect, dtype=float)
    base_correct = np.asarray(base_correct, dtype=bool)
    abstain = p_incorrect >= threshold
    good = np.where(abstain, ~base_correct, base_correct)
    return AbstentionResult(abstain=abstain, accuracy=float(good.mean()))


def auc_roc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative, from the
    rank statistic (ties get average rank)."""
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes in the evaluation set")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _prf(scores: np.ndarray, labels: np.ndarray, threshold: float) -> tuple[float, float, float]:
    pred = scores >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ThresholdReport:
    auc: float
    precision_05: float
    recall_05: float
    f1_05: float
    best_threshold: float
    precision_best: float
    recall_best: float
    f1_best: float


def threshold_metrics(scores: np.ndarray, labels: np.ndarray, grid_step: float = 0.001) -> ThresholdReport:
    """Precision/recall/F1 at 0.5 and at the best-F1 threshold over a dense
    grid, plus rank-statistic AUC."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    auc = auc_roc(scores, labels)
    p5, r5, f5 = _prf(scores, labels, 0.5)
    best = (0.0, 0.0, 0.0, 0.0)  # f1, threshold, precision, recall
    for tau in np.arange(0.0, 1.0 + grid_step / 2, grid_step):
        p, r, f = _prf(scores, labels, tau)
        if f > best[0]:
            best = (f, tau, p, r)
    return ThresholdReport(
        auc=auc,
        precision_05=p5,
        recall_05=r5,
        f1_05=f5,
        best_threshold=best[1],
        precision_best=best[2],
        recall_best=best[3],
        f1_best=best[0],
    )
