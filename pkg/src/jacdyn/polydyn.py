"""Expanding real polynomials: preimage trees, derivative accumulation,
hyperbolicity certificates, and the dynamical interval systems.

All polynomials are normalized at construction so that every real solution
of f(x) = +-1 lies in [-1, 1]; downstream code never sees any other scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    BranchBracketError,
    EmptyCoverIntersectionError,
    NodeCapExceededError,
    OverlappingIntervalsError,
    RootRefinementError,
)

DEFAULT_NODE_CAP = 4096
DEFAULT_ROOT_TOL = 1e-14


def _as_readonly(a) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ExpandingPolynomial:
    """A real polynomial whose preimages of [-1, 1] stay inside [-1, 1].

    ``coefficients`` are ascending-degree.  Critical points are all real and
    interior, and every critical value has magnitude > 1; together these make
    each of the N monotone branches cover [-1, 1] exactly once, so preimage
    enumeration is branch-by-branch bracketed root finding.
    """

    coefficients: np.ndarray
    degree: int
    critical_points: np.ndarray
    critical_values: np.ndarray
    family_tag: str
    family_param: float | None = None
    _d1: np.ndarray = field(repr=False, default=None)
    _d2: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _as_readonly(self.coefficients))
        object.__setattr__(self, "critical_points", _as_readonly(self.critical_points))
        object.__setattr__(self, "critical_values", _as_readonly(self.critical_values))
        object.__setattr__(self, "_d1", _as_readonly(npoly.polyder(self.coefficients)))
        object.__setattr__(self, "_d2", _as_readonly(npoly.polyder(self.coefficients, 2)))

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)

    def deriv(self, x):
        return npoly.polyval(x, self._d1)

    def deriv2(self, x):
        return npoly.polyval(x, self._d2)

    @property
    def branch_edges(self) -> np.ndarray:
        """Endpoints [-1, c_1, ..., c_{N-1}, 1] of the N monotone branches."""
        return np.concatenate(([-1.0], self.critical_points, [1.0]))

    def to_config(self) -> dict:
        if self.family_tag in ("quadratic_a", "scaled_cheb3"):
            key = "a" if self.family_tag == "quadratic_a" else "c"
            return {"family": self.family_tag, key: self.family_param}
        return {"family": "custom", "coefficients": [repr(c) for c in self.coefficients]}


def _validate_expanding(coeffs: np.ndarray, family_tag: str, family_param=None) -> ExpandingPolynomial:
    coeffs = np.asarray(coeffs, dtype=float)
    degree = len(coeffs) - 1
    if degree < 2:
        raise ValueError("degree must be at least 2")
    dcoeffs = npoly.polyder(coeffs)
    roots = npoly.polyroots(dcoeffs)
    if np.max(np.abs(roots.imag)) > 1e-9 * (1 + np.max(np.abs(roots))):
        raise ValueError("all critical points must be real")
    crit = np.sort(roots.real)
    if len(crit) != degree - 1 or (len(crit) > 1 and np.min(np.diff(crit)) < 1e-12):
        raise ValueError("critical points must be simple (supported families)")
    if np.any(np.abs(crit) >= 1.0):
        raise ValueError("critical points must lie inside (-1, 1)")
    cvals = npoly.polyval(crit, coeffs)
    if np.any(np.abs(cvals) <= 1.0):
        raise ValueError("every critical value must have magnitude > 1")
    # Normalization: real solutions of f = +-1 must stay in [-1, 1].
    for y in (1.0, -1.0):
        r = npoly.polyroots(np.concatenate(([coeffs[0] - y], coeffs[1:])))
        real = r.real[np.abs(r.imag) <= 1e-9 * (1 + np.abs(r))]
        if real.size and np.max(np.abs(real)) > 1.0 + 1e-9:
            raise ValueError("not normalized: a real solution of f = +-1 leaves [-1, 1]")
    # Monotone branches must each cross all of [-1, 1]: values at the branch
    # edges alternate sides of the strip.
    edges = np.concatenate(([-1.0], crit, [1.0]))
    vals = npoly.polyval(edges, coeffs)
    for i in range(degree):
        lo, hi = vals[i], vals[i + 1]
        if not ((lo <= -1.0 + 1e-12 and hi >= 1.0 - 1e-12) or (lo >= 1.0 - 1e-12 and hi <= -1.0 + 1e-12)):
            raise ValueError(f"branch {i} does not cover [-1, 1]; Julia set not real")
    return ExpandingPolynomial(coeffs, degree, crit, cvals, family_tag, family_param)


def make_quadratic(a: float) -> ExpandingPolynomial:
    """Degree-2 family b*z^2 - a/b with b = (1+sqrt(1+4a))/2, so f(+-1) = 1.

    Rejects a <= 2, where the invariant Cantor set stops being a real
    hyperbolic repeller for this family.
    """
    if not a > 2:
        raise ValueError("quadratic family requires a > 2")
    beta = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * a))
    return _validate_expanding([-a / beta, 0.0, beta], "quadratic_a", float(a))


def make_scaled_cheb3(c: float) -> ExpandingPolynomial:
    """Degree-3 family c*(4z^3 - 3z); critical values -+c."""
    if not c > 1:
        raise ValueError("scaled cubic family requires c > 1")
    return _validate_expanding([0.0, -3.0 * c, 0.0, 4.0 * c], "scaled_cheb3", float(c))


def make_custom(coefficients: Sequence[float]) -> ExpandingPolynomial:
    """Validate user-supplied ascending coefficients as an expanding polynomial.

    The coefficients must already be normalized (f^{-1}([-1,1]) inside [-1,1]);
    no automatic rescaling is attempted.
    """
    return _validate_expanding(np.asarray(coefficients, dtype=float), "custom")


def from_config(cfg: dict) -> ExpandingPolynomial:
    family = cfg.get("family")
    if family == "quadratic_a":
        return make_quadratic(float(cfg["a"]))
    if family == "scaled_cheb3":
        return make_scaled_cheb3(float(cfg["c"]))
    if family == "custom":
        return make_custom([float(c) for c in cfg["coefficients"]])
    raise ValueError(f"unknown polynomial family {family!r}")


def _branch_roots(p: ExpandingPolynomial, branch: int, y: np.ndarray, tol: float) -> np.ndarray:
    """Solve f(lam) = y_k on one monotone branch for an array of targets.

    Bisection (certified by the bracket) followed by two clipped Newton
    polish steps; roots returned clipped into [-1, 1].
    """
    edges = p.branch_edges
    lo_e, hi_e = edges[branch], edges[branch + 1]
    y = np.asarray(y, dtype=float)
    glo = p(lo_e) - y
    ghi = p(hi_e) - y
    bad = glo * ghi > 0
    # Brackets can only fail through roundoff at |y| = 1 where the root sits
    # exactly on a branch edge; those show up as tiny same-sign residuals.
    if np.any(bad):
        worst = np.max(np.minimum(np.abs(glo[bad]), np.abs(ghi[bad])))
        if worst > 1e-9:
            k = int(np.argmax(bad))
            raise BranchBracketError(
                f"branch {branch} ([{lo_e}, {hi_e}]) does not bracket y={y[k]!r}"
            )
    lo = np.full_like(y, lo_e)
    hi = np.full_like(y, hi_e)
    slo = np.sign(glo)
    done_lo = glo == 0.0
    done_hi = ghi == 0.0
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        gm = p(mid) - y
        take_lo = np.sign(gm) == slo
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    root = 0.5 * (lo + hi)
    for _ in range(2):
        g = p(root) - y
        dg = p.deriv(root)
        step = np.where(dg != 0.0, g / np.where(dg == 0.0, 1.0, dg), 0.0)
        root = np.clip(root - step, lo, hi)
    root = np.where(done_lo, lo_e, np.where(done_hi, hi_e, root))
    return np.clip(root, -1.0, 1.0)


def preimages_one_step(p: ExpandingPolynomial, y: float, tol: float = DEFAULT_ROOT_TOL) -> np.ndarray:
    """All N real solutions of f(lam) = y for |y| <= 1, sorted ascending."""
    if abs(y) > 1.0 + 1e-12:
        raise ValueError("preimages are only taken for |y| <= 1")
    ys = np.array([min(max(y, -1.0), 1.0)])
    roots = np.concatenate([_branch_roots(p, b, ys, tol) for b in range(p.degree)])
    return np.sort(roots)


@dataclass(frozen=True)
class BackwardOrbit:
    """Sorted preimage tree data of depth n under T = f^n.

    ``log_abs_Tprime`` carries log|T'(lam_k)| accumulated level by level in
    the log domain; ``sign_Tprime`` the separately tracked sign; and
    ``Tsecond_over_Tprime`` the chain-rule accumulated ratio T''/T'.
    """

    base_point: float
    level: int
    nodes: np.ndarray
    log_abs_Tprime: np.ndarray
    sign_Tprime: np.ndarray
    Tsecond_over_Tprime: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "log_abs_Tprime", "sign_Tprime", "Tsecond_over_Tprime"):
            object.__setattr__(self, name, _as_readonly(getattr(self, name)))

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def abs_Tprime(self) -> np.ndarray:
        return np.exp(self.log_abs_Tprime)

    @property
    def Tprime(self) -> np.ndarray:
        return self.sign_Tprime * np.exp(self.log_abs_Tprime)


def backward_orbit(
    p: ExpandingPolynomial,
    n: int,
    x: float,
    cap: int = DEFAULT_NODE_CAP,
    tol: float = DEFAULT_ROOT_TOL,
) -> BackwardOrbit:
    """Expand the full preimage tree of x to depth n with derivative data."""
    if n < 1:
        raise ValueError("level must be >= 1")
    if abs(x) > 1.0:
        raise ValueError("base point must satisfy |x| <= 1")
    d = p.degree**n
    if d > cap:
        raise NodeCapExceededError(f"N^n = {d} exceeds cap {cap}")
    nodes = np.array([x], dtype=float)
    logd = np.zeros(1)
    sgn = np.ones(1)
    s2 = np.zeros(1)
    for _ in range(n):
        children = np.concatenate([_branch_roots(p, b, nodes, tol) for b in range(p.degree)])
        fp = p.deriv(children)
        fpp = p.deriv2(children)
        logd = np.log(np.abs(fp)) + np.tile(logd, p.degree)
        sgn = np.sign(fp) * np.tile(sgn, p.degree)
        s2 = fpp / fp + np.tile(s2, p.degree) * fp
        nodes = children
    order = np.argsort(nodes)
    nodes, logd, sgn, s2 = nodes[order], logd[order], sgn[order], s2[order]
    if np.any(np.diff(nodes) <= 0):
        raise RootRefinementError("preimage nodes are not strictly increasing")
    # Residual check |T(lam) - x| <= 10 tol (1 + |T'|).
    fwd = nodes.copy()
    for _ in range(n):
        fwd = p(fwd)
    bound = 10.0 * tol * (1.0 + np.exp(logd))
    if np.any(np.abs(fwd - x) > bound):
        raise RootRefinementError(
            f"orbit residual {np.max(np.abs(fwd - x)):.3e} exceeds tolerance"
        )
    return BackwardOrbit(x, n, nodes, logd, sgn, s2)


@dataclass(frozen=True)
class IntervalSystem:
    """Level-m components of (f^m)^{-1}([-1,1]) and their complementary gaps."""

    level: int
    dyadic: np.ndarray  # shape (count, 2), sorted, disjoint closed intervals
    gaps: np.ndarray  # shape (gap_count, 2), open intervals of [-1,1] \ dyadic

    def __post_init__(self):
        object.__setattr__(self, "dyadic", _as_readonly(self.dyadic))
        object.__setattr__(self, "gaps", _as_readonly(self.gaps))

    @property
    def count(self) -> int:
        return self.dyadic.shape[0]

    def lengths(self) -> np.ndarray:
        return self.dyadic[:, 1] - self.dyadic[:, 0]

    def total_length(self) -> float:
        return float(np.sum(self.lengths()))

    def locate(self, pt: float) -> int:
        """Index of the component containing pt, or -1 if in a gap."""
        idx = int(np.searchsorted(self.dyadic[:, 0], pt, side="right")) - 1
        if idx >= 0 and pt <= self.dyadic[idx, 1]:
            return idx
        return -1


_EMPTY_GAP_LEN = 1e-12


def dyadic_intervals(p: ExpandingPolynomial, m: int, cap: int = DEFAULT_NODE_CAP,
                     tol: float = DEFAULT_ROOT_TOL) -> IntervalSystem:
    """Components of (f^m)^{-1}([-1,1]) via branchwise endpoint pullback."""
    if m < 0:
        raise ValueError("level must be >= 0")
    if p.degree**m > cap:
        raise NodeCapExceededError(f"N^m = {p.degree ** m} exceeds cap {cap}")
    intervals = np.array([[-1.0, 1.0]])
    for _ in range(m):
        los, his = intervals[:, 0], intervals[:, 1]
        pieces = []
        for b in range(p.degree):
            a_end = _branch_roots(p, b, los, tol)
            b_end = _branch_roots(p, b, his, tol)
            pieces.append(np.stack([np.minimum(a_end, b_end), np.maximum(a_end, b_end)], axis=1))
        intervals = np.concatenate(pieces, axis=0)
        intervals = intervals[np.argsort(intervals[:, 0])]
        if np.any(intervals[1:, 0] <= intervals[:-1, 1]):
            raise OverlappingIntervalsError(
                "pullback components overlap; polynomial is not expanding at this level"
            )
    gaps = []
    if intervals[0, 0] > -1.0 + _EMPTY_GAP_LEN:
        gaps.append((-1.0, intervals[0, 0]))
    for i in range(intervals.shape[0] - 1):
        gaps.append((intervals[i, 1], intervals[i + 1, 0]))
    if intervals[-1, 1] < 1.0 - _EMPTY_GAP_LEN:
        gaps.append((intervals[-1, 1], 1.0))
    gaps_arr = np.asarray(gaps, dtype=float) if gaps else np.empty((0, 2))
    return IntervalSystem(m, intervals, gaps_arr)


def smallest_dyadic_containing(
    systems: Sequence[IntervalSystem], i0: tuple[float, float]
) -> tuple[tuple[float, float], int, float]:
    """Smallest interval of the nested family containing I0 intersected with
    the deepest-level cover.

    Returns (interval, level, |I0| / |interval|).  Raises
    EmptyCoverIntersectionError when I0 misses the deepest cover entirely.
    """
    lo0, hi0 = float(i0[0]), float(i0[1])
    if hi0 < lo0:
        raise ValueError("interval endpoints out of order")
    systems = sorted(systems, key=lambda s: s.level)
    deepest = systems[-1]
    comp = deepest.dyadic
    mask = (comp[:, 1] >= lo0) & (comp[:, 0] <= hi0)
    if not np.any(mask):
        raise EmptyCoverIntersectionError("interval misses the deepest-level cover")
    hit = comp[mask]
    hull_lo = max(lo0, hit[0, 0])
    hull_hi = min(hi0, hit[-1, 1])
    for sys in reversed(systems):
        i_lo = sys.locate(hull_lo)
        if i_lo >= 0 and i_lo == sys.locate(hull_hi):
            interval = (float(sys.dyadic[i_lo, 0]), float(sys.dyadic[i_lo, 1]))
            width = interval[1] - interval[0]
            return interval, sys.level, (hi0 - lo0) / width
    raise AssertionError("level-0 interval [-1,1] must contain the hull")


@dataclass(frozen=True)
class HyperbolicityCertificate:
    """Sampled expansion data and critical-value clearance for a polynomial."""

    is_hyperbolic: bool
    expansion_Q: float
    expansion_c: float
    sufficiency_A: float
    levels_checked: int
    meets_A_threshold: bool


def _interval_distance(point: float, intervals: np.ndarray) -> float:
    lo, hi = intervals[:, 0], intervals[:, 1]
    inside = (point >= lo) & (point <= hi)
    if np.any(inside):
        return 0.0
    return float(np.min(np.maximum(lo - point, point - hi)))


def verify_hyperbolic(
    p: ExpandingPolynomial,
    max_level: int = 8,
    A_threshold: float = 9.0,
    cap: int = DEFAULT_NODE_CAP,
) -> HyperbolicityCertificate:
    """Estimate the expansion rate Q and the critical-value clearance A.

    Q is the minimum of |(f^n)'|^{1/n} over sampled cover points at each
    level up to max_level; A is the distance from the critical values to the
    deepest-level cover.
    """
    levels = max_level
    while p.degree**levels > cap and levels > 1:
        levels -= 1
    min_logs = []
    deepest = None
    for mlev in range(1, levels + 1):
        sys = dyadic_intervals(p, mlev, cap=cap)
        orbit = backward_orbit(p, mlev, 0.0, cap=cap)
        # Sample |T'| both at interior preimages and at the cover endpoints.
        log_at_ends = _log_abs_iter_deriv(p, mlev, sys.dyadic.reshape(-1))
        logs = np.concatenate([orbit.log_abs_Tprime, log_at_ends])
        min_logs.append(float(np.min(logs[np.isfinite(logs)])))
        deepest = sys
    expansion_Q = float(np.exp(min(lg / (m + 1) for m, lg in enumerate(min_logs))))
    c_min = min(np.exp(lg) / expansion_Q ** (m + 1) for m, lg in enumerate(min_logs))
    suff_A = float(min(_interval_distance(cv, deepest.dyadic) for cv in p.critical_values))
    is_hyp = expansion_Q > 1.0 + 1e-9 and suff_A > 0.0
    return HyperbolicityCertificate(
        is_hyperbolic=bool(is_hyp),
        expansion_Q=expansion_Q,
        expansion_c=float(c_min),
        sufficiency_A=suff_A,
        levels_checked=levels,
        meets_A_threshold=bool(suff_A >= A_threshold),
    )


def _log_abs_iter_deriv(p: ExpandingPolynomial, n: int, x: np.ndarray) -> np.ndarray:
    """log|(f^n)'(x)| by forward chain rule (no preimage tree needed)."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    cur = x.copy()
    with np.errstate(divide="ignore"):
        for _ in range(n):
            total += np.log(np.abs(p.deriv(cur)))
            cur = p(cur)
    return total
