"""Support vector classification on extracted feature vectors.

Features are z-scored with statistics of the training set (stored in the
model and reused verbatim at prediction time).  Binary subproblems are
solved in the dual on the kernel Gram matrix with the bias folded in as a
constant offset; multiclass decisions are one-vs-rest with ties going to
the lowest class id.  Model selection is a stratified k-fold grid search
over the regularization constant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from ._dualcd import dual_cd

KERNELS = ("linear", "rbf", "poly", "precomputed")

#: Duality gap at which a binary subproblem counts as solved.
DEFAULT_GAP_TOL = 1e-3

_MAX_EPOCHS = 100000
_SOLVER_SEED = 0x5D17


def default_c_grid():
    """11 logarithmically spaced values covering 1e-2 through 1e3."""
    return np.logspace(-2.0, 3.0, 11)


@dataclass(frozen=True)
class CvReport:
    """Cross-validation accuracies per fold and grid point."""

    c_grid: np.ndarray
    fold_accuracy: np.ndarray
    mean_accuracy: np.ndarray
    selected_c: float
    selected_index: int


@dataclass
class SvmModel:
    """Trained one-vs-rest SVM with its standardization statistics.

    Linear models keep only the primal weight vectors; kernel models keep
    the dual coefficients (``alpha * y``, one row per class) together with
    the standardized training vectors they refer to.
    """

    kernel: str
    C: float
    classes: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray | None
    feature_std: np.ndarray | None
    gamma: float | None = None
    degree: int | None = None
    coef0: float | None = None
    weights: np.ndarray | None = None
    dual_coef: np.ndarray | None = None
    support_vectors: np.ndarray | None = None
    gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def n_features(self):
        if self.weights is not None:
            return self.weights.shape[1]
        if self.support_vectors is not None:
            return self.support_vectors.shape[1]
        return None


def _standardize_stats(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return mean, std


def _resolve_gamma(Xs, gamma):
    if gamma is not None:
        return float(gamma)
    var = float(Xs.var())
    if var <= 0.0:
        var = 1.0
    return 1.0 / (Xs.shape[1] * var)


def _gram(kernel, A, B, gamma, degree, coef0):
    lin = A @ B.T
    if kernel == "linear":
        return lin
    if kernel == "rbf":
        d2 = (np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :]
              - 2.0 * lin)
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-gamma * d2)
    if kernel == "poly":
        return (gamma * lin + coef0) ** degree
    raise ValueError(f"unknown kernel {kernel!r}")


def _solve_binary(Gp1, target, C, gap_tol, class_index):
    alpha, decision, gap, epochs = dual_cd(
        Gp1, target, float(C), float(gap_tol), _MAX_EPOCHS,
        _SOLVER_SEED + class_index,
    )
    if gap > gap_tol:
        warnings.warn(
            f"dual solver stopped at gap {gap:.2e} (target {gap_tol:.0e}) "
            f"after {epochs} epochs",
            RuntimeWarning,
            stacklevel=3,
        )
    return alpha, decision, gap


def _check_training_input(X, y, kernel):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be 2-d (n_trials, n_features)")
    if y.shape != (X.shape[0],):
        raise ValueError("labels length does not match the number of rows")
    if not np.isfinite(X).all():
        raise ValueError("features contain non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training data contains a single class")
    if kernel == "precomputed" and X.shape[0] != X.shape[1]:
        raise ValueError("precomputed kernel requires a square Gram matrix")
    return X, y, classes


def train_svm(X, y, kernel="linear", C=1.0, *, gamma=None, degree=3,
              coef0=1.0, gap_tol=DEFAULT_GAP_TOL):
    """Train a one-vs-rest SVM at a fixed regularization constant.

    Parameters
    ----------
    X : ndarray, shape (n_trials, n_features)
        Feature matrix, or the precomputed Gram matrix for
        ``kernel="precomputed"``.
    y : ndarray, shape (n_trials,)
        Class labels (at least two distinct values).
    kernel : {"linear", "rbf", "poly", "precomputed"}
    C : float
    gamma : float, optional
        Kernel scale for rbf/poly; defaults to
        ``1 / (n_features * var(standardized features))``.
    degree, coef0
        Polynomial kernel parameters.
    gap_tol : float
        Duality gap at which each binary subproblem stops.

    Returns
    -------
    SvmModel
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if C <= 0.0:
        raise ValueError("C must be positive")
    X, y, classes = _check_training_input(X, y, kernel)

    if kernel == "precomputed":
        Xs, mean, std = X, None, None
        G = X
    else:
        mean, std = _standardize_stats(X)
        Xs = (X - mean) / std
        if kernel in ("rbf", "poly"):
            gamma = _resolve_gamma(Xs, gamma)
        G = _gram(kernel, Xs, Xs, gamma, degree, coef0)

    Gp1 = np.ascontiguousarray(G + 1.0)
    n_classes = classes.size
    bias = np.zeros(n_classes)
    gaps = np.zeros(n_classes)
    dual = np.zeros((n_classes, X.shape[0]))
    for ci, c in enumerate(classes):
        target = np.where(y == c, 1.0, -1.0)
        alpha, _, gap = _solve_binary(Gp1, target, C, gap_tol, ci)
        dual[ci] = alpha * target
        bias[ci] = np.sum(alpha * target)
        gaps[ci] = gap

    model = SvmModel(
        kernel=kernel, C=float(C), classes=classes, bias=bias,
        feature_mean=mean, feature_std=std, gaps=gaps,
        gamma=None if kernel in ("linear", "precomputed") else float(gamma),
        degree=None if kernel != "poly" else int(degree),
        coef0=None if kernel != "poly" else float(coef0),
    )
    if kernel == "linear":
        model.weights = dual @ Xs
    elif kernel == "precomputed":
        model.dual_coef = dual
    else:
        model.dual_coef = dual
        model.support_vectors = Xs
    return model


def decision_scores(model, X):
    """One-vs-rest decision values, shape ``(n_trials, n_classes)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    if model.kernel == "precomputed":
        if X.shape[1] != model.dual_coef.shape[1]:
            raise ValueError("Gram matrix width does not match the training set")
        return X @ model.dual_coef.T + model.bias
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got {X.shape[1]}")
    Xs = (X - model.feature_mean) / model.feature_std
    if model.kernel == "linear":
        return Xs @ model.weights.T + model.bias
    K = _gram(model.kernel, Xs, model.support_vectors,
              model.gamma, model.degree, model.coef0)
    return K @ model.dual_coef.T + model.bias


def predict(model, X):
    """Predicted class labels; score ties resolve to the lowest class id."""
    scores = decision_scores(model, X)
    return model.classes[np.argmax(scores, axis=1)]


def stratified_fold_ids(y, k_folds, seed=0):
    """Assign each trial to one of ``k_folds`` class-balanced folds.

    Within each class the trials are shuffled by a counter-based generator
    and dealt round-robin, so the partition is deterministic in ``seed``.

    Raises
    ------
    ValueError
        If ``k_folds < 2`` or some class has fewer members than folds.
    """
    y = np.asarray(y)
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    rng = Generator(Philox(int(seed)))
    fold = np.empty(y.shape[0], dtype=np.int64)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < k_folds:
            raise ValueError(
                f"class {c} has {idx.size} trials, fewer than k_folds={k_folds}")
        perm = rng.permutation(idx)
        fold[perm] = np.arange(perm.size) % k_folds
    return fold


def grid_search_cv(X, y, kernel="linear", grid=None, k_folds=5, seed=0, *,
                   gamma=None, degree=3, coef0=1.0, gap_tol=DEFAULT_GAP_TOL):
    """Stratified k-fold grid search over the regularization constant.

    The selected C maximizes mean validation accuracy; among maximizers the
    smallest C wins.

    Parameters
    ----------
    X, y : feature matrix and labels.
    kernel : {"linear", "rbf", "poly"}
    grid : sequence of positive floats, optional
        Defaults to :func:`default_c_grid`; evaluated in ascending order.
    k_folds, seed : fold structure.

    Returns
    -------
    CvReport
    """
    if kernel == "precomputed":
        raise ValueError("grid search operates on feature matrices")
    X, y, classes = _check_training_input(X, y, kernel)
    grid = default_c_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("C grid is empty")
    if np.any(grid <= 0.0):
        raise ValueError("C grid values must be positive")
    grid = np.sort(grid)
    fold = stratified_fold_ids(y, k_folds, seed)

    acc = np.zeros((k_folds, grid.size))
    for f in range(k_folds):
        tr = fold != f
        va = ~tr
        mean, std = _standardize_stats(X[tr])
        Xtr = (X[tr] - mean) / std
        Xva = (X[va] - mean) / std
        g = gamma
        if kernel in ("rbf", "poly"):
            g = _resolve_gamma(Xtr, gamma)
        Gtr = np.ascontiguousarray(
            _gram(kernel, Xtr, Xtr, g, degree, coef0) + 1.0)
        Kva = _gram(kernel, Xva, Xtr, g, degree, coef0)
        ytr = y[tr]
        targets = [np.where(ytr == c, 1.0, -1.0) for c in classes]
        for gi, C in enumerate(grid):
            scores = np.empty((int(va.sum()), classes.size))
            for ci in range(classes.size):
                alpha, _, _ = _solve_binary(Gtr, targets[ci], C, gap_tol, ci)
                coef = alpha * targets[ci]
                scores[:, ci] = Kva @ coef + np.sum(coef)
            pred = classes[np.argmax(scores, axis=1)]
            acc[f, gi] = np.mean(pred == y[va])

    mean_acc = acc.mean(axis=0)
    best = int(np.argmax(mean_acc))
    return CvReport(c_grid=grid, fold_accuracy=acc, mean_accuracy=mean_acc,
                    selected_c=float(grid[best]), selected_index=best)
