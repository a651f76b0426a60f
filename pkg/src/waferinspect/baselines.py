"""Comparison classifiers over flattened pixel features.

Random forest (bagged CART, Gini, sqrt-d feature candidates), soft-margin
SVMs solved by SMO (linear and RBF kernels, one-vs-rest), and a one-
hidden-layer MLP trained by the nn module's loop. All of them consume the
same FeatureMatrix: raw patch pixels scaled to [0, 1], no localization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import EmptyInput, NonConvergence, ShapeMismatch
from .image import GrayImage
from .seeding import derive_seed


@dataclass
class FeatureMatrix:
    """Rows of [0,1] features with integer class labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ShapeMismatch(f"need (n, d) features with n labels, "
                                f"got {self.x.shape} and {self.y.shape}")
        if len(self.x) and (self.x.min() < 0.0 or self.x.max() > 1.0):
            raise ValueError("features must lie in [0, 1]")

    def __len__(self):
        return len(self.x)

    @classmethod
    def from_patches(cls, patches: list[tuple[GrayImage, int]]) -> "FeatureMatrix":
        if not patches:
            raise EmptyInput("no patches to featurize")
        x = np.stack([p.pixels.reshape(-1) for p, _ in patches]) / 255.0
        y = np.array([label for _, label in patches], dtype=np.int64)
        return cls(x, y)


# CART trees in flat-array form: node i splits on feature[i] at
# threshold[i] (left: value <= threshold), or is a leaf when feature[i]
# is -1, predicting pred[i].
@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    pred: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = x[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.pred[node]


def _gini_best_split(x_col: np.ndarray, one_hot: np.ndarray):
    """Best (impurity, threshold) for one feature, or None if constant."""
    order = np.argsort(x_col, kind="stable")
    sv = x_col[order]
    cut = np.flatnonzero(sv[1:] > sv[:-1]) + 1  # split before these ranks
    if len(cut) == 0:
        return None
    n = len(sv)
    counts = one_hot[order].cumsum(axis=0)
    total = counts[-1]
    nl = cut.astype(np.float64)
    nr = n - nl
    cl = counts[cut - 1]
    cr = total - cl
    gini_l = 1.0 - ((cl / nl[:, None]) ** 2).sum(axis=1)
    gini_r = 1.0 - ((cr / nr[:, None]) ** 2).sum(axis=1)
    weighted = (nl * gini_l + nr * gini_r) / n
    k = int(weighted.argmin())
    thr = (sv[cut[k] - 1] + sv[cut[k]]) / 2.0
    return float(weighted[k]), thr


def _grow_tree(x, y, n_classes, max_features, rng) -> _Tree:
    feature, threshold, left, right, pred = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        pred.append(0)
        return len(feature) - 1

    one_hot = np.eye(n_classes, dtype=np.float64)[y]

    def build(idx) -> int:
        node = new_node()
        counts = np.bincount(y[idx], minlength=n_classes)
        pred[node] = int(counts.argmax())
        if counts.max() == len(idx):
            return node
        cand = rng.choice(x.shape[1], size=max_features, replace=False)
        best = None
        for f in cand:
            found = _gini_best_split(x[idx, f], one_hot[idx])
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(f), found[1])
        if best is None:
            return node  # all candidate features constant on this node
        _, f, thr = best
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left])
        right[node] = build(idx[~go_left])
        return node

    build(np.arange(len(y)))
    return _Tree(np.array(feature), np.array(threshold), np.array(left),
                 np.array(right), np.array(pred))


@dataclass
class RandomForest:
    trees: list[_Tree]
    n_classes: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        votes = np.zeros((len(x), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            votes[np.arange(len(x)), tree.predict(x)] += 1
        return votes.argmax(axis=1)  # tie -> lowest class index


def train_rfc(data: FeatureMatrix, n_trees: int = 100, seed: int = 0,
              bootstrap: bool = True) -> RandomForest:
    """Bagged CART forest, Gini impurity, sqrt(d) feature candidates."""
    if len(data) == 0:
        raise EmptyInput("cannot train a forest on an empty feature matrix")
    if n_trees < 1:
        raise ValueError("need at least one tree")
    n, d = data.x.shape
    n_classes = int(data.y.max()) + 1
    max_features = max(1, math.isqrt(d) if math.isqrt(d) ** 2 == d
                       else math.isqrt(d) + 1)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng((seed, t))
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(_grow_tree(data.x[idx], data.y[idx], n_classes,
                                max_features, rng))
    return RandomForest(trees=trees, n_classes=n_classes)


def _smo_binary(k_mat: np.ndarray, y: np.ndarray, c: float, tol: float,
                rng: np.random.Generator, max_passes: int, max_sweeps: int):
    """Binary soft-margin SMO on a precomputed kernel matrix.

    The second index is drawn at random; when that pair is blocked (clipped
    range empty, eta >= 0, or negligible step) the remaining partners are
    tried in order so a clean sweep really means a fixpoint. Terminates
    after max_passes clean sweeps once every point passes the KKT scan, and
    raises NonConvergence at max_sweeps or on a violating fixpoint.
    """
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    f = np.zeros(n)  # decision values, maintained incrementally
    passes = 0
    sweeps = 0

    def step(i: int, j: int, ei: float) -> bool:
        nonlocal b, f
        ej = f[j] - y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj_old - ai_old), min(c, c + aj_old - ai_old)
        else:
            lo, hi = max(0.0, ai_old + aj_old - c), min(c, ai_old + aj_old)
        if lo == hi:
            return False
        eta = 2.0 * k_mat[i, j] - k_mat[i, i] - k_mat[j, j]
        if eta >= 0:
            return False
        aj = min(max(aj_old - y[j] * (ei - ej) / eta, lo), hi)
        if abs(aj - aj_old) < 1e-12:
            return False
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        di = y[i] * (ai - ai_old)
        dj = y[j] * (aj - aj_old)
        b1 = b - ei - di * k_mat[i, i] - dj * k_mat[i, j]
        b2 = b - ej - di * k_mat[i, j] - dj * k_mat[j, j]
        if 0 < ai < c:
            b_new = b1
        elif 0 < aj < c:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        f += di * k_mat[:, i] + dj * k_mat[:, j] + (b_new - b)
        alpha[i], alpha[j], b = ai, aj, b_new
        return True

    while passes < max_passes:
        sweeps += 1
        if sweeps > max_sweeps:
            raise NonConvergence(f"SMO did not converge within {max_sweeps} sweeps")
        changed = 0
        for i in range(n):
            ei = f[i] - y[i]
            if not ((y[i] * ei < -tol and alpha[i] < c)
                    or (y[i] * ei > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            if step(i, j, ei):
                changed += 1
                continue
            for j in range(n):
                if j != i and step(i, j, ei):
                    changed += 1
                    break
        passes = passes + 1 if changed == 0 else 0
    worst = _kkt_scan(alpha, f, y, c)
    if worst > tol:
        raise NonConvergence(f"SMO stalled with KKT violation {worst:.3g}")
    return alpha, b


def _kkt_scan(alpha, f, y, c) -> float:
    margin = y * f
    worst = 0.0
    for i in range(len(y)):
        if alpha[i] < 1e-12:
            worst = max(worst, 1.0 - margin[i])
        elif alpha[i] > c - 1e-12:
            worst = max(worst, margin[i] - 1.0)
        else:
            worst = max(worst, abs(margin[i] - 1.0))
    return float(worst)


def _linear_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b.T


def _rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SVCModel:
    """One-vs-rest SVM set; prediction is the argmax decision value."""

    kind: str  # "linear" or "rbf"
    gamma: float
    sv_x: list[np.ndarray] = field(default_factory=list)
    sv_coef: list[np.ndarray] = field(default_factory=list)  # alpha_i * y_i
    intercepts: list[float] = field(default_factory=list)
    n_classes: int = 0

    def _kernel(self, a, b):
        if self.kind == "linear":
            return _linear_kernel(a, b)
        return _rbf_kernel(a, b, self.gamma)

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        cols = []
        for sx, coef, b in zip(self.sv_x, self.sv_coef, self.intercepts):
            if len(sx) == 0:
                cols.append(np.full(len(x), b))
            else:
                cols.append(self._kernel(x, sx) @ coef + b)
        return np.stack(cols, axis=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.decision_values(x).argmax(axis=1)


def _train_svc(data: FeatureMatrix, kind: str, c: float, gamma: float,
               seed: int, tol: float, max_passes: int, max_sweeps: int) -> SVCModel:
    if len(data) == 0:
        raise EmptyInput("cannot train an SVM on an empty feature matrix")
    if c <= 0:
        raise ValueError("C must be positive")
    n_classes = int(data.y.max()) + 1
    k_full = (_linear_kernel(data.x, data.x) if kind == "linear"
              else _rbf_kernel(data.x, data.x, gamma))
    model = SVCModel(kind=kind, gamma=gamma, n_classes=max(n_classes, 2))
    for cls in range(model.n_classes):
        y = np.where(data.y == cls, 1.0, -1.0)
        rng = np.random.default_rng((seed, cls))
        alpha, b = _smo_binary(k_full, y, c, tol, rng, max_passes, max_sweeps)
        keep = alpha > 1e-12
        model.sv_x.append(data.x[keep])
        model.sv_coef.append(alpha[keep] * y[keep])
        model.intercepts.append(float(b))
    return model


def train_svc_linear(data: FeatureMatrix, c: float = 1.0, seed: int = 0,
                     tol: float = 1e-3, max_passes: int = 5,
                     max_sweeps: int = 2000) -> SVCModel:
    """Linear soft-margin SVC, one-vs-rest, solved by SMO."""
    return _train_svc(data, "linear", c, 0.0, seed, tol, max_passes, max_sweeps)


def default_gamma(data: FeatureMatrix) -> float:
    """Library-style 'scale' gamma: 1 / (d * var(X))."""
    var = float(data.x.var())
    return 1.0 / (data.x.shape[1] * var) if var > 0 else 1.0


def train_svc_rbf(data: FeatureMatrix, c: float = 1.0, gamma: float | None = None,
                  seed: int = 0, tol: float = 1e-3, max_passes: int = 5,
                  max_sweeps: int = 2000) -> SVCModel:
    """RBF-kernel soft-margin SVC, one-vs-rest, solved by SMO."""
    if gamma is None:
        gamma = default_gamma(data)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return _train_svc(data, "rbf", c, gamma, seed, tol, max_passes, max_sweeps)


def kkt_violation(alpha: np.ndarray, b: float, k_mat: np.ndarray,
                  y: np.ndarray, c: float) -> float:
    """Worst KKT violation of a binary SMO solution over its training set.

    At the optimum, margin = y*f satisfies: alpha = 0 needs margin >= 1,
    alpha = C needs margin <= 1, interior alphas need margin = 1. Returns
    the largest shortfall, which the solver keeps within its tolerance.
    """
    f = k_mat @ (alpha * y) + b
    return _kkt_scan(alpha, f, y, c)


@dataclass
class MLPConfig:
    n_features: int
    hidden_units: int
    n_classes: int


class MLP:
    """One hidden ReLU layer and a softmax head, trained by nn.train."""

    def __init__(self, config: MLPConfig, seed: int = 0):
        if config.hidden_units < 1:
            raise ValueError("need at least one hidden unit")
        self.config = config
        rng = np.random.default_rng((seed, 0))
        self.layers = [nn.Dense(config.n_features, config.hidden_units, rng),
                       nn.ReLU(),
                       nn.Dense(config.hidden_units, config.n_classes, rng)]

    def forward(self, x, mode: nn.Mode, rng=None):
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out, mode, rng)
        return out

    def backward(self, dlogits):
        grad = dlogits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((i, name, layer.params[name]))
        return out

    def get_state(self):
        return [(i, n, a.copy()) for i, n, a in self.parameters()]

    def set_state(self, state):
        for i, name, arr in state:
            self.layers[i].params[name] = arr.copy()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, nn.Mode.INFER).argmax(axis=1)


def train_mlp(data: FeatureMatrix, hidden_units: int = 100,
              cfg: nn.TrainConfig | None = None,
              val: FeatureMatrix | None = None) -> MLP:
    """Fit the MLP baseline; validation defaults to the training data."""
    if len(data) == 0:
        raise EmptyInput("cannot train an MLP on an empty feature matrix")
    cfg = cfg or nn.TrainConfig()
    n_classes = int(data.y.max()) + 1
    model = MLP(MLPConfig(data.x.shape[1], hidden_units, max(n_classes, 2)),
                seed=derive_seed(cfg.seed, 17))
    val = val or data
    nn.train(model, nn.LabeledTensors(data.x, data.y),
             nn.LabeledTensors(val.x, val.y), cfg)
    return model
