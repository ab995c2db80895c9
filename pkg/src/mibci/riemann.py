"""Tangent-space features of trial covariances.

A per-band reference matrix (geometric, arithmetic, or identity mean of the
training covariances pooled across temporal windows) anchors the tangent
space.  A trial covariance ``C`` maps to the half-vectorization of
``logm(Cref^(-1/2) C Cref^(-1/2))``; plain dot products of these feature
vectors equal the affine-invariant tangent inner products at the reference,
so a linear kernel on the features is already the Riemannian kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spd

MEAN_KINDS = ("geometric", "arithmetic", "identity")


@dataclass(frozen=True)
class RiemannRef:
    """Reference point of one frequency band and its cached inverse root."""

    band_index: int
    kind: str
    ref: np.ndarray
    inv_sqrt: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in MEAN_KINDS:
            raise ValueError(f"unknown mean kind {self.kind!r}")
        ref = np.ascontiguousarray(self.ref, dtype=np.float64)
        inv_sqrt = np.ascontiguousarray(self.inv_sqrt, dtype=np.float64)
        ref.setflags(write=False)
        inv_sqrt.setflags(write=False)
        object.__setattr__(self, "ref", ref)
        object.__setattr__(self, "inv_sqrt", inv_sqrt)

    @property
    def n_channels(self):
        return self.ref.shape[0]


def fit_reference(covs, kind, band_index=0, tol=1e-8, max_iter=50):
    """Fit the reference matrix of one band from pooled training covariances.

    Parameters
    ----------
    covs : ndarray, shape (n_pool, n, n)
        Non-empty pool of SPD matrices.
    kind : {"geometric", "arithmetic", "identity"}
    band_index : int
    tol, max_iter
        Passed through to the Karcher mean for ``kind="geometric"``.

    Returns
    -------
    RiemannRef
    """
    A = np.asarray(covs, dtype=np.float64)
    if A.ndim != 3 or A.shape[0] == 0:
        raise ValueError("expected a non-empty pool of square matrices")
    if kind == "geometric":
        ref = spd.geometric_mean(A, tol=tol, max_iter=max_iter)
    elif kind == "arithmetic":
        ref = spd.arithmetic_mean(A)
    elif kind == "identity":
        ref = np.eye(A.shape[-1])
    else:
        raise ValueError(f"unknown mean kind {kind!r}")
    return RiemannRef(band_index=band_index, kind=kind, ref=ref,
                      inv_sqrt=spd.invsqrtm(ref))


def riemann_features_batch(covs, ref):
    """Tangent-space feature vectors of a batch of SPD matrices.

    Parameters
    ----------
    covs : ndarray, shape (m, n, n)
    ref : RiemannRef

    Returns
    -------
    ndarray, shape (m, n * (n + 1) / 2)
    """
    R = ref.inv_sqrt
    M = R[None] @ np.asarray(covs, dtype=np.float64) @ R[None]
    S = spd.logm(0.5 * (M + np.swapaxes(M, -1, -2)))
    return spd.vect(S)


def riemann_features(C, ref):
    """Tangent-space feature vector of one SPD matrix at ``ref``."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise ValueError("expected a single square matrix")
    return riemann_features_batch(C[None], ref)[0]
