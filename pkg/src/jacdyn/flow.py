"""Non-isospectral Toda-type flow operators for the preimage family J(x),
their commutator identities, and finite-difference verification of the
evolution equation dJ/dx = F(J) + [G, J].

Conventions fixed by the d=2 symbolic oracle (see tests):

* D is the differentiation matrix in the orthonormal-polynomial basis,
  D[k, m] = sum_i w_i P_k'(lam_i) P_m(lam_i) (strictly lower triangular);
* the node-basis conjugation R = Pmat^{-1} (D F) Pmat has entries
  r_ij = 1 / (T'(lam_i) (lam_j - lam_i)) off the diagonal and
  r_ii = T''(lam_i) / (2 T'(lam_i)^2), with every column summing to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jacobi import JacobiMatrix, jacobi_from_measure, opnorm
from .measures import balanced_measure
from .polydyn import BackwardOrbit, ExpandingPolynomial, backward_orbit

FLOW_DIM_CAP = 256


@dataclass(frozen=True)
class FlowOperators:
    """Dense operators attached to one (polynomial, depth, t, base point)."""

    J: JacobiMatrix
    Pmat: np.ndarray  # P_k(lam_i), rows indexed by degree
    PPmat: np.ndarray  # orthogonal sqrt-weighted version
    D: np.ndarray
    F_of_J: np.ndarray
    H: np.ndarray
    G: np.ndarray
    R: np.ndarray
    K: np.ndarray
    phi_prime_diag: np.ndarray
    t: float
    orbit: BackwardOrbit
    orthogonality_defect: float = field(default=0.0)

    @property
    def size(self) -> int:
        return self.J.size


def _flow_ops_from_orbit(orbit: BackwardOrbit, t: float,
                         precision: str = "double") -> FlowOperators:
    if orbit.size > FLOW_DIM_CAP:
        raise ValueError(f"flow operators capped at d <= {FLOW_DIM_CAP}")
    mu = balanced_measure(orbit, t)
    J = jacobi_from_measure(mu, precision=precision)
    lam = orbit.nodes
    w = mu.weights
    d = lam.size
    if d == 1:
        F = np.array([[1.0 / orbit.Tprime[0]]])
        zero = np.zeros((1, 1))
        phi = np.array([-t * orbit.Tsecond_over_Tprime[0]])
        H = 0.5 * phi[0] * F
        return FlowOperators(J, np.ones((1, 1)), np.ones((1, 1)), zero, F, H,
                             zero.copy(), zero.copy(), zero.copy(), phi, t, orbit)
    from .jacobi import ortho_polys_at

    Pvals, Pder = ortho_polys_at(J, lam)
    sqw = np.sqrt(w)
    PP = Pvals * sqw[None, :]
    orth_defect = float(np.max(np.abs(PP @ PP.T - np.eye(d))))
    if orth_defect > 1e-6:
        raise ValueError(f"orthogonality defect {orth_defect:.2e}; build unreliable")
    Tprime = orbit.Tprime
    Fdiag = 1.0 / Tprime
    F = (PP * Fdiag[None, :]) @ PP.T
    D = (Pder * w[None, :]) @ Pvals.T
    phi_prime = -t * orbit.Tsecond_over_Tprime
    phiJ = (PP * phi_prime[None, :]) @ PP.T
    H = D @ F + 0.5 * phiJ @ F
    Gu = np.triu(H, 1)
    G = Gu - Gu.T
    DF = D @ F
    # Pmat^{-1} = diag(w) Pmat^T by weighted orthonormality of the rows.
    R = (w[:, None] * Pvals.T) @ DF @ Pvals
    K = PP.T @ DF @ PP
    return FlowOperators(J, Pvals, PP, D, F, H, G, R, K, phi_prime, t, orbit,
                         orth_defect)


def build_flow_ops(p: ExpandingPolynomial, n: int, t: float, x: float,
                   cap: int = FLOW_DIM_CAP, precision: str = "double") -> FlowOperators:
    orbit = backward_orbit(p, n, x, cap=min(cap, FLOW_DIM_CAP))
    return _flow_ops_from_orbit(orbit, t, precision=precision)


@dataclass(frozen=True)
class DIdentityReport:
    """Residuals for the commutator identity [J, D] = I - (rank one in the
    last row), and the cascade identity [J, DF] e = F e off e_0."""

    identity_rows_residual: float
    last_row_fit_residual: float
    c_from_fit: float
    c_from_Pv: float
    c_rel_mismatch: float
    dfeq_residual: float
    degenerate: bool = False


def verify_D_identity(ops: FlowOperators) -> DIdentityReport:
    d = ops.size
    if d == 1:
        # 1x1 commutators vanish identically; nothing to verify.
        return DIdentityReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, degenerate=True)
    J = ops.J.to_dense()
    C = J @ ops.D - ops.D @ J
    eye = np.eye(d)
    rows_resid = float(np.max(np.abs(C[:-1] - eye[:-1])))
    r = eye[-1] - C[-1]
    Tprime = ops.orbit.Tprime
    u = (ops.PPmat * Tprime[None, :]) @ ops.PPmat.T[:, 0]  # F^{-1} e_0
    c_fit = float(r @ u / (u @ u))
    denom = max(np.max(np.abs(r)), 1e-300)
    fit_resid = float(np.max(np.abs(r - c_fit * u)) / denom)
    Pv = ops.Pmat @ (1.0 / Tprime)
    c_pv = float(Pv[-1])
    lead = float(np.max(np.abs(Pv[:-1])) / max(abs(c_pv), 1e-300))
    c_mis = abs(c_fit - c_pv) / max(abs(c_fit), 1e-300)
    DF = ops.D @ ops.F_of_J
    M = (J @ DF - DF @ J) - ops.F_of_J
    dfeq = float(np.max(np.abs(M[:, 1:])))
    return DIdentityReport(rows_resid, max(fit_resid, lead), c_fit, c_pv,
                           float(c_mis), dfeq)


@dataclass(frozen=True)
class RClosedFormReport:
    max_entry_residual: float
    max_column_sum: float
    lambda_commutator_residual: float


def closed_form_R(orbit: BackwardOrbit) -> np.ndarray:
    lam = orbit.nodes
    Tp = orbit.Tprime
    s2 = orbit.Tsecond_over_Tprime
    diff = lam[None, :] - lam[:, None]
    np.fill_diagonal(diff, 1.0)
    R = 1.0 / (Tp[:, None] * diff)
    np.fill_diagonal(R, s2 / (2.0 * Tp))
    return R


def verify_R_closed_form(ops: FlowOperators) -> RClosedFormReport:
    orbit = ops.orbit
    if ops.size == 1:
        # Degenerate: R = 0 and the residue-based closed form needs d >= 2.
        return RClosedFormReport(0.0, float(abs(ops.R[0, 0])), 0.0)
    Rc = closed_form_R(orbit)
    entry = float(np.max(np.abs(ops.R - Rc)))
    colsum = float(np.max(np.abs(np.sum(ops.R, axis=0))))
    lam = orbit.nodes
    LR = lam[:, None] * ops.R - ops.R * lam[None, :]
    expected = np.tile((-1.0 / orbit.Tprime)[:, None], (1, lam.size))
    np.fill_diagonal(expected, 0.0)
    lr_resid = float(np.max(np.abs(LR - expected)))
    return RClosedFormReport(entry, colsum, lr_resid)


def flow_residual(p: ExpandingPolynomial, n: int, t: float, x: float,
                  h: float, cap: int = FLOW_DIM_CAP) -> float:
    """Operator norm of the centered-difference defect of the flow equation."""
    if abs(x) + h > 1.0:
        raise ValueError("x +- h must stay inside [-1, 1]")
    ops = build_flow_ops(p, n, t, x, cap=cap)
    Jp = jacobi_from_measure(balanced_measure(backward_orbit(p, n, x + h), t))
    Jm = jacobi_from_measure(balanced_measure(backward_orbit(p, n, x - h), t))
    Jdot = (Jp.to_dense() - Jm.to_dense()) / (2.0 * h)
    J = ops.J.to_dense()
    rhs = ops.F_of_J + ops.G @ J - J @ ops.G
    return opnorm(Jdot - rhs)


@dataclass(frozen=True)
class CommutatorScanRow:
    t: float
    n: int
    x: float
    comm_norm: float
    jdot_norm: float
    F_norm: float
    G_norm: float
    H_norm: float
    # Largest diagonal entry of H conjugated to the node basis; vanishes
    # identically at t = 1.
    H0_max: float


def commutator_uniformity_scan(
    p: ExpandingPolynomial,
    t_grid,
    n_range: tuple[int, int],
    x_grid,
    h: float = 1e-5,
    cap: int = FLOW_DIM_CAP,
) -> list[CommutatorScanRow]:
    """Tabulate commutator and derivative norms over a (t, n, x) grid."""
    rows = []
    for n in range(n_range[0], n_range[1] + 1):
        if p.degree**n > cap:
            break
        orbits = {x: backward_orbit(p, n, x) for x in x_grid}
        for t in t_grid:
            for x in x_grid:
                ops = _flow_ops_from_orbit(orbits[x], t)
                J = ops.J.to_dense()
                comm = ops.G @ J - J @ ops.G
                Jp = jacobi_from_measure(balanced_measure(backward_orbit(p, n, x + h), t))
                Jm = jacobi_from_measure(balanced_measure(backward_orbit(p, n, x - h), t))
                jdot = opnorm((Jp.to_dense() - Jm.to_dense()) / (2 * h))
                h0 = np.diag(ops.K) + 0.5 * ops.phi_prime_diag / orbits[x].Tprime
                rows.append(
                    CommutatorScanRow(
                        t=float(t), n=n, x=float(x),
                        comm_norm=opnorm(comm),
                        jdot_norm=jdot,
                        F_norm=opnorm(ops.F_of_J),
                        G_norm=opnorm(ops.G),
                        H_norm=opnorm(ops.H),
                        H0_max=float(np.max(np.abs(h0))),
                    )
                )
    return rows


def three_diagonal_reduction_residual(ops: FlowOperators) -> float:
    """Worst defect of the sub/super-diagonal reduction identities relating
    [G, J] entries to diagonal and off-diagonal entries of H.

    Both identities hold modulo terms controlled by ||F(J)||; the caller
    compares the returned residual against that budget.
    """
    J = ops.J
    dflat = J.to_dense()
    comm = ops.G @ dflat - dflat @ ops.G
    d = ops.size
    b = J.offdiag
    Hd = np.diag(ops.H)
    worst = 0.0
    for m in range(1, d):
        lhs = comm[m - 1, m]
        rhs = b[m - 1] * Hd[m] - (b[m - 2] * Hd[m - 1] if m >= 2 else 0.0)
        worst = max(worst, abs(lhs - rhs))
    for m in range(d):
        lhs = comm[m, m]
        rhs = 0.0
        if m + 1 < d:
            rhs += 2.0 * b[m] * ops.H[m + 1, m]
        if m >= 1:
            rhs -= 2.0 * b[m - 1] * ops.H[m, m - 1]
        worst = max(worst, abs(lhs - rhs))
    return worst
