"""Common spatial patterns for the 4-class one-vs-one filter bank.

Each class pair contributes the leading and trailing eigenvectors of the
generalized eigenproblem between the two class-mean covariances.  Features
are log-variances of the spatially filtered window, normalized across the
filters of the bank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spd
from .errors import NumericError

#: Unordered class pairs in fixed order; filter blocks follow this order.
PAIR_ORDER = ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))

#: Relative tolerance of the generalized eigendecomposition residual check.
_GEVD_RTOL = 1e-8


@dataclass(frozen=True)
class CspBank:
    """Spatial filter bank of one (window, band) leaf.

    ``filters`` has shape ``(n_channels, n_filters)`` with filter columns
    grouped by class pair in :data:`PAIR_ORDER`; ``pair_labels`` records the
    class pair of each column.
    """

    window_index: int
    band_index: int
    filters: np.ndarray
    pair_labels: tuple

    def __post_init__(self):
        filters = np.ascontiguousarray(self.filters, dtype=np.float64)
        if filters.ndim != 2:
            raise ValueError("filters must be a 2-d (n_channels, n_filters) array")
        if len(self.pair_labels) != filters.shape[1]:
            raise ValueError("pair_labels length must match the filter count")
        filters.setflags(write=False)
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "pair_labels", tuple(self.pair_labels))

    @property
    def n_filters(self):
        return self.filters.shape[1]


def _canonicalize(U):
    """Unit-norm columns with the largest-magnitude entry made positive."""
    U = U / np.linalg.norm(U, axis=0, keepdims=True)
    j = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[j, np.arange(U.shape[1])])
    s[s == 0.0] = 1.0
    return U * s


def gevd(C1, C2):
    """Generalized eigendecomposition ``C1 u = lam C2 u`` for SPD inputs.

    Eigenvalues come back in descending order (ties broken stably) and the
    eigenvectors are sign-canonicalized, so equal inputs always produce
    bit-identical output.

    Parameters
    ----------
    C1, C2 : ndarray, shape (n, n), SPD

    Returns
    -------
    (lam, U)
        ``lam`` descending, ``U`` columns the matching eigenvectors.

    Raises
    ------
    NumericError
        If ``C2`` is not positive definite or the eigenpair residual check
        ``norm(C1 u - lam C2 u) <= 1e-8 * norm(C1, 'fro')`` fails.
    """
    lam_asc, U = spd.gen_eigh(C1, C2)
    order = np.argsort(-lam_asc, kind="stable")
    lam = lam_asc[order]
    U = _canonicalize(U[:, order])
    resid = np.linalg.norm(C1 @ U - C2 @ U * lam[None, :], axis=0)
    bound = _GEVD_RTOL * np.linalg.norm(C1)
    if np.max(resid) > bound:
        raise NumericError(
            f"eigenpair residual {np.max(resid):.3e} exceeds {bound:.3e}",
            residual=float(np.max(resid)),
        )
    return lam, U


def _class_mean_cov(covs):
    # Accumulation order is fixed by sorting the matrices themselves, so a
    # permutation of the trials reproduces the mean bit-for-bit.
    flat = covs.reshape(covs.shape[0], -1)
    order = np.lexsort(flat.T[::-1])
    return np.add.reduce(covs[order]) / covs.shape[0]


def _pair_filters(covs_a, covs_b, n_per_side):
    n_ch = covs_a.shape[-1]
    if n_per_side < 1 or 2 * n_per_side > n_ch:
        raise ValueError(f"n_per_side must lie in [1, {n_ch // 2}]")
    Ca = _class_mean_cov(covs_a)
    Cb = _class_mean_cov(covs_b)
    _, U = gevd(Ca, Cb)
    return np.hstack([U[:, :n_per_side], U[:, -n_per_side:]])


def train_csp_pair(trials_a, trials_b, n_per_side=2):
    """Spatial filters separating two classes of trial windows.

    The class-mean covariances are averages of the per-trial regularized
    covariance estimates.  The returned columns are the ``n_per_side``
    eigenvectors from each end of the generalized eigenvalue spectrum.

    Parameters
    ----------
    trials_a, trials_b : sequence of ndarray, each (n_channels, n_samples)
    n_per_side : int

    Returns
    -------
    ndarray, shape (n_channels, 2 * n_per_side)
    """
    if len(trials_a) == 0 or len(trials_b) == 0:
        raise ValueError("both classes need at least one trial")
    covs_a = spd.covariances(np.stack([np.asarray(t, float) for t in trials_a]))
    covs_b = spd.covariances(np.stack([np.asarray(t, float) for t in trials_b]))
    return _pair_filters(covs_a, covs_b, n_per_side)


def train_csp_from_covariances(covs_by_class, n_per_side=2,
                               window_index=0, band_index=0):
    """Assemble a one-vs-one filter bank from per-trial covariances.

    Parameters
    ----------
    covs_by_class : mapping class id -> ndarray (n_trials, n_ch, n_ch)
        All four classes must be present and non-empty.
    n_per_side : int
    window_index, band_index : int
        Leaf position recorded on the bank.

    Returns
    -------
    CspBank
    """
    for a, b in PAIR_ORDER:
        for c in (a, b):
            if c not in covs_by_class or len(covs_by_class[c]) == 0:
                raise ValueError(f"class {c} has no trials")
    blocks = []
    labels = []
    for a, b in PAIR_ORDER:
        W = _pair_filters(np.asarray(covs_by_class[a]),
                          np.asarray(covs_by_class[b]), n_per_side)
        blocks.append(W)
        labels.extend([(a, b)] * W.shape[1])
    return CspBank(window_index=window_index, band_index=band_index,
                   filters=np.hstack(blocks), pair_labels=tuple(labels))


def train_csp_multiclass(trials_by_class, n_per_side=2,
                         window_index=0, band_index=0):
    """Like :func:`train_csp_from_covariances`, starting from raw windows."""
    covs = {}
    for c, trials in trials_by_class.items():
        if len(trials):
            covs[c] = spd.covariances(
                np.stack([np.asarray(t, float) for t in trials]))
        else:
            covs[c] = np.zeros((0, 1, 1))
    return train_csp_from_covariances(covs, n_per_side=n_per_side,
                                      window_index=window_index,
                                      band_index=band_index)


def csp_features(bank, x):
    """Normalized log-variance features of one trial window.

    For each filter ``w`` the feature is
    ``log(var_w / sum_k var_k)`` with ``var_w = w.T @ X @ X.T @ w``, so the
    exponentials of the features sum to one and the features are invariant
    to rescaling of the input.

    Parameters
    ----------
    bank : CspBank or ndarray (n_channels, n_filters)
    x : ndarray, shape (n_channels, n_samples)

    Returns
    -------
    ndarray, shape (n_filters,)

    Raises
    ------
    NumericError
        If the window yields zero or non-finite variance ("degenerate
        window").
    """
    W = bank.filters if isinstance(bank, CspBank) else np.asarray(bank, float)
    x = np.asarray(x, dtype=np.float64)
    P = W.T @ x
    powers = np.einsum("fs,fs->f", P, P)
    total = powers.sum()
    if not np.isfinite(total) or total <= 0.0 or np.any(powers <= 0.0):
        raise NumericError("degenerate window: spatially filtered variance "
                           "is zero or non-finite")
    return np.log(powers / total)
