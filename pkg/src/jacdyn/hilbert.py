"""Explicit two-weight Hilbert-transform matrices on preimage nodes and the
interval testing machinery: step weights, box averages, closed-form Poisson
averages, dyadic-level decay profiles, and doubling checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polydyn import (
    DEFAULT_NODE_CAP,
    BackwardOrbit,
    ExpandingPolynomial,
    IntervalSystem,
    _as_readonly,
    backward_orbit,
    dyadic_intervals,
)

HT_DENSE_LIMIT = 512


@dataclass(frozen=True)
class HtMatrix:
    """Dense weighted-kernel matrix attached to one backward orbit and t."""

    matrix: np.ndarray
    t: float
    orbit: BackwardOrbit

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_readonly(self.matrix))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def offdiag_part(self) -> np.ndarray:
        B = self.matrix.copy()
        np.fill_diagonal(B, 0.0)
        return B


def build_Ht(orbit: BackwardOrbit, t: float) -> HtMatrix:
    """Matrix |T'_i|^{-(1-t/2)} K_ij |T'_j|^{-t/2} with the kernel
    K_ij = 1/(lam_i - lam_j) off the diagonal and
    K_ii = ((1-t)/2) (log|T'|)'(lam_i)."""
    lam = orbit.nodes
    d = lam.size
    if d > 1:
        min_gap = np.min(np.diff(lam))
        if min_gap < 1e-13:
            raise ValueError(
                f"node spacing {min_gap:.2e} below 1e-13; upstream preimage data broken"
            )
    left = np.exp(-(1.0 - 0.5 * t) * orbit.log_abs_Tprime)
    right = np.exp(-0.5 * t * orbit.log_abs_Tprime)
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, 1.0)
    K = 1.0 / diff
    np.fill_diagonal(K, 0.5 * (1.0 - t) * orbit.Tsecond_over_Tprime)
    M = left[:, None] * K * right[None, :]
    return HtMatrix(M, float(t), orbit)


def _power_opnorm(M: np.ndarray, iters: int = 200, rtol: float = 1e-12) -> float:
    v = np.ones(M.shape[1]) / math.sqrt(M.shape[1])
    prev = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        est = math.sqrt(nrm)
        if abs(est - prev) <= rtol * est:
            return est
        prev = est
    return prev


def ht_opnorm(M: np.ndarray) -> float:
    """Largest singular value; dense SVD for small d, power iteration above."""
    if M.shape[0] <= HT_DENSE_LIMIT:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    return _power_opnorm(M)


def discrete_two_weight_norm(orbit: BackwardOrbit, t: float) -> float:
    """Norm of the pure-kernel (zero-diagonal) part of the weighted matrix."""
    return ht_opnorm(build_Ht(orbit, t).offdiag_part())


@dataclass(frozen=True)
class HtScanRow:
    t: float
    n: int
    x: float
    ht_norm: float
    b_norm: float
    diag_max: float
    koebe_max: float  # max_i |T''/T'^2|, the distortion quantity behind diag_max


def ht_norm_scan(
    p: ExpandingPolynomial,
    t_grid,
    n_range: tuple[int, int],
    x_grid,
    cap: int = DEFAULT_NODE_CAP,
) -> list[HtScanRow]:
    rows = []
    for n in range(n_range[0], n_range[1] + 1):
        if p.degree**n > cap:
            break
        orbits = {x: backward_orbit(p, n, x, cap=cap) for x in x_grid}
        for t in t_grid:
            for x in x_grid:
                orbit = orbits[x]
                H = build_Ht(orbit, t)
                koebe = float(np.max(np.abs(orbit.Tsecond_over_Tprime / orbit.Tprime)))
                rows.append(
                    HtScanRow(
                        t=float(t), n=n, x=float(x),
                        ht_norm=ht_opnorm(H.matrix),
                        b_norm=ht_opnorm(H.offdiag_part()),
                        diag_max=float(np.max(np.abs(np.diag(H.matrix)))),
                        koebe_max=koebe,
                    )
                )
    return rows


@dataclass(frozen=True)
class TwoWeightSystem:
    """Piecewise-constant weight pair on the level-n interval components.

    The representative value on each component is |T'| at the preimage node
    it contains; the two exponents are (t-1) and (1-t), so the pointwise
    product of the weights is exactly one on the support.
    """

    intervals: IntervalSystem
    u_levels: np.ndarray
    v_levels: np.ndarray
    t: float
    eps_hat: float

    def __post_init__(self):
        object.__setattr__(self, "u_levels", _as_readonly(self.u_levels))
        object.__setattr__(self, "v_levels", _as_readonly(self.v_levels))

    @property
    def level(self) -> int:
        return self.intervals.level


def step_weights(
    p: ExpandingPolynomial,
    n: int,
    t: float,
    x: float = 0.5,
    eps_hat: float = 0.05,
    cap: int = DEFAULT_NODE_CAP,
) -> TwoWeightSystem:
    sys = dyadic_intervals(p, n, cap=cap)
    orbit = backward_orbit(p, n, x, cap=cap)
    lam = orbit.nodes
    comp = sys.dyadic
    if not np.all((lam >= comp[:, 0] - 1e-12) & (lam <= comp[:, 1] + 1e-12)):
        raise AssertionError("preimage nodes fell outside their components")
    u = np.exp((t - 1.0) * orbit.log_abs_Tprime)
    v = np.exp((1.0 - t) * orbit.log_abs_Tprime)
    return TwoWeightSystem(sys, u, v, float(t), float(eps_hat))


def _piecewise_box_integral(comp: np.ndarray, values: np.ndarray,
                            lo: float, hi: float) -> float:
    overlap = np.minimum(comp[:, 1], hi) - np.maximum(comp[:, 0], lo)
    overlap = np.maximum(overlap, 0.0)
    return float(np.sum(values * overlap))


def box_averages(sys: TwoWeightSystem, interval: tuple[float, float]) -> tuple[float, float]:
    """Averages of u^{1+eps} and v^{1+eps} over the interval (exact piecewise)."""
    lo, hi = float(interval[0]), float(interval[1])
    width = hi - lo
    if width <= 0:
        raise ValueError("interval must have positive length")
    g = 1.0 + sys.eps_hat
    comp = sys.intervals.dyadic
    au = _piecewise_box_integral(comp, sys.u_levels**g, lo, hi) / width
    av = _piecewise_box_integral(comp, sys.v_levels**g, lo, hi) / width
    return au, av


def box_test(sys: TwoWeightSystem, interval: tuple[float, float]) -> float:
    au, av = box_averages(sys, interval)
    return au * av


def poisson_average_piecewise(pieces, interval: tuple[float, float]) -> float:
    """Poisson extension of a piecewise-constant function evaluated at
    center(I) + i |I|; pieces are (a, b, value) with a <= b, possibly infinite."""
    lo, hi = float(interval[0]), float(interval[1])
    h = hi - lo
    if h <= 0:
        raise ValueError("interval must have positive length")
    c = 0.5 * (lo + hi)
    total = 0.0
    for a, b, val in pieces:
        if val == 0.0:
            continue
        total += val * (math.atan((b - c) / h) - math.atan((a - c) / h))
    return total / math.pi


def poisson_averages(sys: TwoWeightSystem, interval: tuple[float, float]) -> tuple[float, float]:
    g = 1.0 + sys.eps_hat
    comp = sys.intervals.dyadic
    pu = poisson_average_piecewise(
        [(a, b, u) for (a, b), u in zip(comp, sys.u_levels**g)], interval)
    pv = poisson_average_piecewise(
        [(a, b, v) for (a, b), v in zip(comp, sys.v_levels**g)], interval)
    return pu, pv


def poisson_test(sys: TwoWeightSystem, interval: tuple[float, float]) -> float:
    pu, pv = poisson_averages(sys, interval)
    return pu * pv


@dataclass(frozen=True)
class IntervalSource:
    """Interval generator for testing-condition scans: every dyadic interval,
    seeded random subintervals, and gap-straddling adversarial ones."""

    systems: tuple[IntervalSystem, ...]
    n_random: int = 1000
    seed: int = 0
    adversarial: bool = True

    def random_intervals(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        pts = rng.uniform(-1.0, 1.0, size=(self.n_random, 2))
        lo = np.minimum(pts[:, 0], pts[:, 1])
        hi = np.maximum(pts[:, 0], pts[:, 1])
        hi = np.maximum(hi, lo + 1e-6)
        return np.stack([lo, hi], axis=1)

    def adversarial_intervals(self) -> np.ndarray:
        out = []
        for sys in self.systems:
            for a, b in sys.gaps:
                w = b - a
                out.append((max(a - 1.5 * w, -1.0), min(b + 1.5 * w, 1.0)))
        return np.asarray(out) if out else np.empty((0, 2))


@dataclass(frozen=True)
class PoissonTestReport:
    sup_dyadic: float
    sup_random: float
    sup_adversarial: float
    per_level: list = field(repr=False)  # (k, sup box product, sup poisson product)
    doubling_min_factor: float = 0.0
    doubling_per_level: list = field(repr=False, default=None)
    fitted_exponent: float = 0.0  # decay rate of the poisson profile, log_N per level
    seed: int = 0

    @property
    def sup_overall(self) -> float:
        return max(self.sup_dyadic, self.sup_random, self.sup_adversarial)


def poisson_test_scan(sys: TwoWeightSystem, source: IntervalSource) -> PoissonTestReport:
    n = sys.level
    N_branches = None
    per_level = []
    sup_dyadic = 0.0
    for isys in sorted(source.systems, key=lambda s: s.level):
        if N_branches is None and isys.level == 1:
            N_branches = isys.count
        box_sup = 0.0
        poisson_sup = 0.0
        for a, b in isys.dyadic:
            box_sup = max(box_sup, box_test(sys, (a, b)))
            poisson_sup = max(poisson_sup, poisson_test(sys, (a, b)))
        per_level.append((isys.level, box_sup, poisson_sup))
        sup_dyadic = max(sup_dyadic, poisson_sup)
    sup_random = max(
        (poisson_test(sys, (a, b)) for a, b in source.random_intervals()), default=0.0
    )
    sup_adv = max(
        (poisson_test(sys, (a, b)) for a, b in source.adversarial_intervals()), default=0.0
    )
    # Doubling factors: parent integral of u^{1+eps} over each child's.
    g = 1.0 + sys.eps_hat
    uvals = sys.u_levels**g
    comp_n = sys.intervals.dyadic
    by_level = {s.level: s for s in source.systems}
    doubling_min = math.inf
    doubling_rows = []
    for m in range(0, n):
        if m not in by_level or (m + 1) not in by_level:
            continue
        parents = by_level[m].dyadic
        children = by_level[m + 1].dyadic
        level_min = math.inf
        for a, b in parents:
            tot = _piecewise_box_integral(comp_n, uvals, a, b)
            inside = children[(children[:, 0] >= a - 1e-12) & (children[:, 1] <= b + 1e-12)]
            for ca, cb in inside:
                child_tot = _piecewise_box_integral(comp_n, uvals, ca, cb)
                if child_tot > 0:
                    level_min = min(level_min, tot / child_tot)
        if level_min < math.inf:
            doubling_rows.append((m, level_min))
            doubling_min = min(doubling_min, level_min)
    # Fit the poisson-profile decay rate (log_N per level of n - k).
    ks = np.array([k for k, _, ps in per_level if ps > 0], dtype=float)
    ys = np.array([math.log(ps) for _, _, ps in per_level if ps > 0])
    NN = max(2, comp_n.shape[0] ** (1.0 / max(n, 1)))
    if ks.size >= 2:
        A = np.stack([n - ks, np.ones_like(ks)], axis=1)
        coef, *_ = np.linalg.lstsq(A, ys / math.log(NN), rcond=None)
        fitted = float(-coef[0])
    else:
        fitted = 0.0
    return PoissonTestReport(
        sup_dyadic=float(sup_dyadic),
        sup_random=float(sup_random),
        sup_adversarial=float(sup_adv),
        per_level=per_level,
        doubling_min_factor=float(doubling_min if doubling_min < math.inf else 0.0),
        doubling_per_level=doubling_rows,
        fitted_exponent=fitted,
        seed=source.seed,
    )


def partition_moment_bounds(
    p: ExpandingPolynomial,
    n_range: tuple[int, int],
    x: float = 0.5,
    cap: int = DEFAULT_NODE_CAP,
) -> dict:
    """Finite-n forms of the two partition-sum bounds used by the testing
    conditions: d * sum 1/|T'|^2 decays like d^{-tau} and sum 1/|T'| stays
    bounded (it tracks the cover length)."""
    rows = []
    for n in range(n_range[0], n_range[1] + 1):
        if p.degree**n > cap:
            break
        orbit = backward_orbit(p, n, x, cap=cap)
        d = orbit.size
        s1 = float(np.sum(np.exp(-orbit.log_abs_Tprime)))
        s2 = float(d * np.sum(np.exp(-2.0 * orbit.log_abs_Tprime)))
        rows.append((n, d, s1, s2))
    logs_d = np.log([r[1] for r in rows])
    logs_s2 = np.log([r[3] for r in rows])
    A = np.stack([logs_d, np.ones_like(logs_d)], axis=1)
    coef, *_ = np.linalg.lstsq(A, logs_s2, rcond=None)
    return {
        "rows": rows,
        "tau_hat": float(-coef[0]),
        "s1_first": rows[0][2],
        "s1_max": max(r[2] for r in rows),
    }
