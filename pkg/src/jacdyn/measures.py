"""Balanced measures, transfer-operator pullbacks, and pressure estimation.

Weights live in the natural-log domain throughout; base-N logs appear only
in pressure reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import WeightUnderflowError
from .polydyn import (
    DEFAULT_NODE_CAP,
    BackwardOrbit,
    ExpandingPolynomial,
    _as_readonly,
    _branch_roots,
    backward_orbit,
)

_LOG_UNDERFLOW = np.log(1e-280)


@dataclass(frozen=True)
class WeightedDiscreteMeasure:
    """Sorted nodes with normalized log-domain weights."""

    nodes: np.ndarray
    log_weights: np.ndarray
    merged_collisions: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes", _as_readonly(self.nodes))
        object.__setattr__(self, "log_weights", _as_readonly(self.log_weights))
        if self.nodes.size != self.log_weights.size:
            raise ValueError("nodes and log_weights must have equal length")
        if self.nodes.size > 1 and np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        total = np.exp(logsumexp(self.log_weights))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, expected 1 within 1e-12")

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def to_csv_rows(self):
        return [(repr(float(x)), repr(float(lw))) for x, lw in zip(self.nodes, self.log_weights)]


def measure_from_weights(nodes, weights) -> WeightedDiscreteMeasure:
    """Normalize raw positive weights into a measure (sorting canonically)."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    order = np.argsort(nodes)
    lw = np.log(weights[order])
    lw = lw - logsumexp(lw)
    return WeightedDiscreteMeasure(nodes[order], lw)


def point_mass(x: float) -> WeightedDiscreteMeasure:
    return WeightedDiscreteMeasure(np.array([float(x)]), np.zeros(1))


def balanced_measure(orbit: BackwardOrbit, t: float) -> WeightedDiscreteMeasure:
    """Measure with weights proportional to |T'(lam_k)|^{-t}, normalized."""
    lw = -t * orbit.log_abs_Tprime
    lw = lw - logsumexp(lw)
    if np.min(lw) < _LOG_UNDERFLOW:
        raise WeightUnderflowError(
            "normalized weight underflows double precision; reduce the depth n "
            "or use the extended-precision build"
        )
    return WeightedDiscreteMeasure(orbit.nodes, lw)


def pfr_pullback(
    p: ExpandingPolynomial,
    mu: WeightedDiscreteMeasure,
    t: float,
    tol: float = 1e-14,
) -> WeightedDiscreteMeasure:
    """One normalized transfer-operator pullback of a discrete measure.

    Each node of ``mu`` spawns its N one-step preimages, weighted by the
    parent weight times |f'(lam)|^{-t}; the result is globally renormalized.
    Exactly colliding preimage nodes are merged and counted.
    """
    if np.any(np.abs(mu.nodes) > 1.0):
        raise ValueError("pullback requires measure nodes inside [-1, 1]")
    nodes = []
    lws = []
    for b in range(p.degree):
        lam = _branch_roots(p, b, mu.nodes, tol)
        nodes.append(lam)
        lws.append(mu.log_weights - t * np.log(np.abs(p.deriv(lam))))
    nodes = np.concatenate(nodes)
    lws = np.concatenate(lws)
    order = np.argsort(nodes)
    nodes, lws = nodes[order], lws[order]
    merged = 0
    if nodes.size > 1:
        close = np.diff(nodes) < 1e-13 * (1.0 + np.abs(nodes[1:]))
        if np.any(close):
            keep_nodes = [nodes[0]]
            keep_lws = [lws[0]]
            for k in range(1, nodes.size):
                if close[k - 1]:
                    keep_lws[-1] = np.logaddexp(keep_lws[-1], lws[k])
                    merged += 1
                else:
                    keep_nodes.append(nodes[k])
                    keep_lws.append(lws[k])
            nodes = np.asarray(keep_nodes)
            lws = np.asarray(keep_lws)
    lws = lws - logsumexp(lws)
    return WeightedDiscreteMeasure(nodes, lws, merged_collisions=merged)


@dataclass(frozen=True)
class PressureCurve:
    """Pressure values (log base N) on a t-grid, with regression residuals."""

    t_grid: np.ndarray
    P_values: np.ndarray
    n_range: tuple[int, int]
    residuals: np.ndarray

    def __post_init__(self):
        for name in ("t_grid", "P_values", "residuals"):
            object.__setattr__(self, name, _as_readonly(getattr(self, name)))

    def validate(self, p0_tol: float = 1e-9) -> None:
        t, P = self.t_grid, self.P_values
        at0 = np.isclose(t, 0.0, atol=1e-15)
        if np.any(at0) and np.max(np.abs(P[at0] - 1.0)) > p0_tol:
            raise ValueError("pressure at t=0 deviates from 1")
        if np.any(np.diff(P) >= 0):
            raise ValueError("pressure grid is not strictly decreasing")
        mid = P[1:-1] - 0.5 * (P[:-2] + P[2:])
        if np.any(mid > 1e-9):
            raise ValueError("pressure grid violates midpoint convexity")


def _log_partition(orbit_logs: np.ndarray, t: float) -> float:
    """ln of the partition sum over one orbit's |T'| data."""
    return float(logsumexp(-t * orbit_logs))


def _fit_pressure(logs_by_n: dict[int, np.ndarray], N: int, t: float) -> tuple[float, float]:
    ns = np.array(sorted(logs_by_n), dtype=float)
    y = np.array([_log_partition(logs_by_n[int(n)], t) for n in ns]) / np.log(N)
    A = np.stack([ns, np.ones_like(ns)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), resid


def _orbit_logs(p, n_range, x, cap) -> dict[int, np.ndarray]:
    n_lo, n_hi = n_range
    return {
        n: backward_orbit(p, n, x, cap=cap).log_abs_Tprime
        for n in range(n_lo, n_hi + 1)
    }


def pressure_estimate(
    p: ExpandingPolynomial,
    t: float,
    n_range: tuple[int, int] = (2, 8),
    x: float = 0.5,
    cap: int = DEFAULT_NODE_CAP,
    full: bool = False,
):
    """Least-squares slope of log_N(partition sum) against n.

    Returns P(t); with ``full=True`` returns (P, rms_residual).
    """
    logs = _orbit_logs(p, n_range, x, cap)
    P, resid = _fit_pressure(logs, p.degree, t)
    return (P, resid) if full else P


def pressure_curve(
    p: ExpandingPolynomial,
    t_grid,
    n_range: tuple[int, int] = (2, 8),
    x: float = 0.5,
    cap: int = DEFAULT_NODE_CAP,
) -> PressureCurve:
    logs = _orbit_logs(p, n_range, x, cap)
    t_grid = np.asarray(t_grid, dtype=float)
    fits = [_fit_pressure(logs, p.degree, t) for t in t_grid]
    return PressureCurve(
        t_grid,
        np.array([f[0] for f in fits]),
        (int(n_range[0]), int(n_range[1])),
        np.array([f[1] for f in fits]),
    )


def pressure_root(
    p: ExpandingPolynomial,
    n_range: tuple[int, int] = (2, 8),
    x: float = 0.5,
    cap: int = DEFAULT_NODE_CAP,
    tol_P: float = 1e-3,
) -> float:
    """Bisection root of the estimated pressure; the dimension-like exponent."""
    logs = _orbit_logs(p, n_range, x, cap)
    N = p.degree

    def P(t: float) -> float:
        return _fit_pressure(logs, N, t)[0]

    lo, hi = 1e-9, 1.0
    plo, phi = P(lo), P(hi)
    if not (plo > 0.0 > phi):
        raise ValueError(
            f"no pressure sign change on (0, 1]: P({lo})={plo:.3g}, P(1)={phi:.3g}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pm = P(mid)
        if abs(pm) <= tol_P:
            return mid
        if pm > 0:
            lo = mid
        else:
            hi = mid
    raise ValueError("pressure root bisection failed to converge")


@dataclass(frozen=True)
class TwoSidedPressureReport:
    t_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    max_value: float = 0.0
    passed: bool = False


def two_sided_pressure_check(
    p: ExpandingPolynomial,
    eps_hat: float = 0.05,
    n_range: tuple[int, int] = (2, 8),
    x: float = 0.5,
    cap: int = DEFAULT_NODE_CAP,
    points: int = 43,
) -> TwoSidedPressureReport:
    """Grid check that P(t) + P(2-t) stays negative on [-eps, 2+eps].

    The grid is symmetric about t = 1 so the symmetry of the expression is
    exact in floating point.
    """
    if points % 2 == 0:
        points += 1
    offs = np.linspace(-(1.0 + eps_hat), 1.0 + eps_hat, points)
    t_grid = 1.0 + offs
    logs = _orbit_logs(p, n_range, x, cap)
    P = {i: _fit_pressure(logs, p.degree, t)[0] for i, t in enumerate(t_grid)}
    vals = np.array([P[i] + P[points - 1 - i] for i in range(points)])
    mx = float(np.max(vals))
    return TwoSidedPressureReport(t_grid, vals, mx, mx < 0.0)


def partition_ratio_band(
    p: ExpandingPolynomial,
    t: float,
    n_range: tuple[int, int] = (2, 8),
    x: float = 0.5,
    cap: int = DEFAULT_NODE_CAP,
) -> tuple[float, float]:
    """Max deviation factor of successive partition-sum ratios from N^P(t).

    Returns (C_fit, C_max): the factor observed at the shallowest step and
    the worst factor over the whole range; finite-n stand-in for the
    comparison-constant statement behind the pressure limit.
    """
    logs = _orbit_logs(p, n_range, x, cap)
    ns = sorted(logs)
    P, _ = _fit_pressure(logs, p.degree, t)
    target = P * np.log(p.degree)
    factors = []
    for n0, n1 in zip(ns[:-1], ns[1:]):
        ratio_log = _log_partition(logs[n1], t) - _log_partition(logs[n0], t)
        factors.append(np.exp(abs(ratio_log / (n1 - n0) - target)))
    return float(factors[0]), float(max(factors))
