"""Discrete measures <-> Jacobi matrices, plus spectral utilities.

The conversion uses the rotation-based reduction of the bordered-diagonal
(nodes on the diagonal, square-root weights in the border) matrix to
tridiagonal form, which stays accurate for clustered nodes and weight
ratios far beyond what a naive Stieltjes procedure survives.  A Lanczos
path with full reorthogonalization is kept behind a flag as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal

from ._rkpw import rkpw_dd, rkpw_double
from .errors import DuplicateNodesError, PoleError
from .measures import WeightedDiscreteMeasure
from .polydyn import _as_readonly


@dataclass(frozen=True)
class JacobiMatrix:
    """Symmetric tridiagonal matrix with strictly positive off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "diag", _as_readonly(self.diag))
        object.__setattr__(self, "offdiag", _as_readonly(self.offdiag))
        if self.offdiag.size != max(self.diag.size - 1, 0):
            raise ValueError("offdiag must have length d - 1")
        if np.any(self.offdiag <= 0):
            raise ValueError("off-diagonal entries must be strictly positive")

    @property
    def size(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        d = self.size
        M = np.zeros((d, d))
        M[np.arange(d), np.arange(d)] = self.diag
        if d > 1:
            idx = np.arange(d - 1)
            M[idx, idx + 1] = self.offdiag
            M[idx + 1, idx] = self.offdiag
        return M

    def to_csv_rows(self):
        rows = []
        for k in range(self.size):
            b = repr(float(self.offdiag[k - 1])) if k >= 1 else ""
            rows.append((str(k), repr(float(self.diag[k])), b))
        return rows


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues, orthogonal eigenvector matrix, and its first row."""

    eigenvalues: np.ndarray
    eigvec_matrix: np.ndarray
    first_components: np.ndarray


def _lanczos_full_reorth(nodes: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Lanczos for the multiplication operator, reorthogonalizing
    against the full basis twice per step."""
    d = nodes.size
    a = np.zeros(d)
    b = np.zeros(max(d - 1, 0))
    q = np.ones(d) / np.sqrt(np.sum(weights))
    basis = np.empty((d, d))
    basis[0] = q
    q_prev = np.zeros(d)
    beta_prev = 0.0
    for j in range(d):
        w = nodes * q
        a[j] = np.sum(weights * q * w)
        w = w - a[j] * q - beta_prev * q_prev
        for _ in range(2):
            proj = basis[: j + 1] @ (weights * w)
            w = w - basis[: j + 1].T @ proj
        beta = np.sqrt(np.sum(weights * w * w))
        if j < d - 1:
            if beta <= 0:
                raise DuplicateNodesError("Lanczos breakdown: coincident nodes")
            b[j] = beta
            q_prev, q = q, w / beta
            basis[j + 1] = q
            beta_prev = beta
    return a, b


def jacobi_from_measure(
    mu: WeightedDiscreteMeasure,
    algorithm: str = "rotation",
    precision: str = "double",
) -> JacobiMatrix:
    """Jacobi matrix whose e_0 spectral measure is ``mu``.

    ``algorithm`` is "rotation" (default) or "lanczos" (cross-check path);
    ``precision`` is "double" or "extended" (compensated double-double,
    rotation path only).
    """
    nodes = np.asarray(mu.nodes, dtype=float)
    d = nodes.size
    if d == 1:
        return JacobiMatrix(nodes.copy(), np.empty(0))
    if np.min(np.diff(nodes)) < 1e-15 * (1.0 + np.max(np.abs(nodes))):
        raise DuplicateNodesError("measure nodes coincide below resolvable separation")
    weights = mu.weights
    if algorithm == "lanczos":
        a, b = _lanczos_full_reorth(nodes, weights)
        return JacobiMatrix(a, b)
    if algorithm != "rotation":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if precision == "extended":
        alpha, beta_sq = rkpw_dd(nodes, weights)
    elif precision == "double":
        alpha, beta_sq = rkpw_double(nodes, weights)
    else:
        raise ValueError(f"unknown precision {precision!r}")
    b = np.sqrt(beta_sq[1:d])
    if np.any(~np.isfinite(b)) or np.any(b <= 0):
        raise DuplicateNodesError("reduction produced a non-positive off-diagonal entry")
    return JacobiMatrix(alpha[:d], b)


def spectral_decomposition(J: JacobiMatrix) -> SpectralData:
    if J.size == 1:
        return SpectralData(J.diag.copy(), np.ones((1, 1)), np.ones(1))
    vals, vecs = eigh_tridiagonal(J.diag, J.offdiag)
    return SpectralData(vals, vecs, vecs[0].copy())


def spectral_measure(J: JacobiMatrix) -> WeightedDiscreteMeasure:
    """Nodes = eigenvalues, weights = squared first eigenvector components."""
    sd = spectral_decomposition(J)
    w = sd.first_components**2
    w = np.maximum(w, 1e-300)
    lw = np.log(w)
    from scipy.special import logsumexp

    lw = lw - logsumexp(lw)
    return WeightedDiscreteMeasure(sd.eigenvalues, lw)


def resolvent_00(J: JacobiMatrix, z: complex) -> complex:
    """(0,0) resolvent entry by bottom-up continued fraction."""
    z = complex(z)
    if abs(z.imag) < 1e-12:
        evs = J.diag if J.size == 1 else eigvalsh_tridiagonal(J.diag, J.offdiag)
        if np.min(np.abs(z.real - evs)) <= 1e-13:
            raise PoleError(f"z={z} lies on the spectrum within 1e-13")
    d = J.size
    r = 1.0 / (z - J.diag[d - 1])
    for k in range(d - 2, -1, -1):
        den = z - J.diag[k] - J.offdiag[k] ** 2 * r
        if den == 0:
            raise PoleError(f"continued fraction pole at z={z}")
        r = 1.0 / den
    return complex(r)


def ortho_polys_at(J: JacobiMatrix, lam) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal polynomial values and derivatives at lam.

    Accepts scalar or array lam; returns arrays of shape (d,) + shape(lam)
    with P_0 = 1, P'_0 = 0 and the three-term recurrence driven by J.
    """
    lam = np.asarray(lam, dtype=float)
    d = J.size
    P = np.empty((d,) + lam.shape)
    Pd = np.empty_like(P)
    P[0] = 1.0
    Pd[0] = 0.0
    if d > 1:
        P[1] = (lam - J.diag[0]) / J.offdiag[0]
        Pd[1] = 1.0 / J.offdiag[0]
    for k in range(1, d - 1):
        P[k + 1] = ((lam - J.diag[k]) * P[k] - J.offdiag[k - 1] * P[k - 1]) / J.offdiag[k]
        Pd[k + 1] = (P[k] + (lam - J.diag[k]) * Pd[k] - J.offdiag[k - 1] * Pd[k - 1]) / J.offdiag[k]
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Pd))):
        raise OverflowError("orthonormal polynomial recurrence overflowed; lam too far outside the hull")
    return P, Pd


def opnorm(M: np.ndarray) -> float:
    """Largest singular value of a dense matrix (symmetric fast path)."""
    M = np.asarray(M)
    if M.shape == (1, 1):
        return float(abs(M[0, 0]))
    if np.allclose(M, M.T.conj(), rtol=0, atol=1e-14 * (1 + np.max(np.abs(M)))):
        return float(np.max(np.abs(np.linalg.eigvalsh(M))))
    return float(np.linalg.svd(M, compute_uv=False)[0])


def tridiag_opnorm(diag: np.ndarray, offdiag: np.ndarray) -> float:
    """Operator norm of a symmetric tridiagonal matrix via edge eigenvalues."""
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    d = diag.size
    if d == 1:
        return float(abs(diag[0]))
    lo = eigvalsh_tridiagonal(diag, offdiag, select="i", select_range=(0, 0))[0]
    hi = eigvalsh_tridiagonal(diag, offdiag, select="i", select_range=(d - 1, d - 1))[0]
    return float(max(abs(lo), abs(hi)))


def jacobi_diff_norm(J1: JacobiMatrix, J2: JacobiMatrix) -> float:
    if J1.size != J2.size:
        raise ValueError("matrices must share dimensions")
    return tridiag_opnorm(J1.diag - J2.diag, J1.offdiag - J2.offdiag)
