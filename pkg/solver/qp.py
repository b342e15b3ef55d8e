"""Dense convex QP: minimise 1/2 u'Hu + g'u  s.t.  lb <= A_ineq u <= ub,  A_eq u = b_eq.

Solved by a primal-dual interior point method with Mehrotra predictor-corrector
steps on the dense KKT system. Problems here stay below a few hundred
variables, so dense LU factorisations are fine.
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.io import mmwrite

from config.settings import (
    PSD_SHIFT,
    QP_MAX_ITER,
    QP_TOL_COMPLEMENTARITY,
    QP_TOL_PRIMAL,
    QP_TOL_STATIONARITY,
)
from utils.logger import setup_logger

logger = setup_logger()

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

_TIE_TOL = 1e-12
_STEP_FRACTION = 0.99
_DUAL_BLOWUP = 1e10


@dataclass
class DenseQP:
    H: np.ndarray
    g: np.ndarray
    A_ineq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be square, got {self.H.shape}")
        self.g = np.asarray(self.g, dtype=float).reshape(n)

        if self.A_ineq is None:
            self.A_ineq = np.zeros((0, n))
        self.A_ineq = np.asarray(self.A_ineq, dtype=float).reshape(-1, n)
        m = self.A_ineq.shape[0]
        self.lb = np.full(m, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(m)
        self.ub = np.full(m, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(m)

        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        q = self.A_eq.shape[0]
        self.b_eq = np.zeros(q) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).reshape(q)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.A_ineq.shape[0]

    @property
    def q(self) -> int:
        return self.A_eq.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.H @ u + self.g @ u)


@dataclass
class QpSolution:
    u_star: np.ndarray
    lam_lower: np.ndarray
    lam_upper: np.ndarray
    nu: np.ndarray
    status: str
    kkt_residual: float
    primal_residual: float = 0.0
    iterations: int = 0
    objective: float = float("nan")
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class _Reduced:
    """One-sided form  G u <= h,  E u = b  plus the maps back to the caller's rows."""
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray
    b: np.ndarray
    upper_rows: np.ndarray
    lower_rows: np.ndarray
    tied_rows: np.ndarray
    eq_keep: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def check_psd(H: np.ndarray) -> np.ndarray:
    """Symmetrise H and confirm it is PSD up to a 1e-10 diagonal shift (scaled by its magnitude)."""
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if not np.allclose(H, H.T, atol=1e-9 * scale):
        raise ValueError("H is not symmetric")
    H = 0.5 * (H + H.T)
    if H.size == 0:
        return H
    try:
        linalg.cholesky(H + PSD_SHIFT * scale * np.eye(H.shape[0]), lower=True)
    except linalg.LinAlgError:
        worst = float(np.min(np.linalg.eigvalsh(H)))
        raise ValueError(f"H is not positive semidefinite (min eigenvalue {worst:.3e})")
    return H


def _empty_solution(qp: DenseQP, status: str, message: str) -> QpSolution:
    return QpSolution(
        u_star=np.zeros(qp.n),
        lam_lower=np.zeros(qp.m),
        lam_upper=np.zeros(qp.m),
        nu=np.zeros(qp.q),
        status=status,
        kkt_residual=float("inf"),
        primal_residual=float("inf"),
        message=message,
    )


def _reduce(qp: DenseQP):
    """Split two-sided rows into one-sided ones; drop empty rows. Returns None when trivially infeasible."""
    A, lb, ub = qp.A_ineq, qp.lb, qp.ub
    finite_lo = np.isfinite(lb)
    finite_up = np.isfinite(ub)
    tied = np.zeros(qp.m, dtype=bool)
    both = finite_lo & finite_up
    tied[both] = (ub[both] - lb[both]) <= _TIE_TOL * (1.0 + np.abs(ub[both]))

    upper_rows = np.flatnonzero(finite_up & ~tied)
    lower_rows = np.flatnonzero(finite_lo & ~tied)
    tied_rows = np.flatnonzero(tied)

    # rows with no decision dependence are checked once and removed
    row_norm = np.max(np.abs(A), axis=1) if qp.m else np.zeros(0)
    empty = row_norm == 0.0
    if np.any(empty & finite_up & (ub < -QP_TOL_PRIMAL)) or np.any(empty & finite_lo & (lb > QP_TOL_PRIMAL)):
        return None
    upper_rows = upper_rows[~empty[upper_rows]]
    lower_rows = lower_rows[~empty[lower_rows]]
    tied_rows = tied_rows[~empty[tied_rows]]

    G = np.vstack([A[upper_rows], -A[lower_rows]])
    h = np.concatenate([ub[upper_rows], -lb[lower_rows]])

    E_all = np.vstack([qp.A_eq, A[tied_rows]])
    b_all = np.concatenate([qp.b_eq, 0.5 * (lb[tied_rows] + ub[tied_rows])])
    eq_norm = np.max(np.abs(E_all), axis=1) if E_all.shape[0] else np.zeros(0)
    eq_empty = eq_norm == 0.0
    if np.any(np.abs(b_all[eq_empty]) > QP_TOL_PRIMAL):
        return None
    eq_keep = np.flatnonzero(~eq_empty)
    return _Reduced(
        G=G.reshape(-1, qp.n), h=h, E=E_all[eq_keep].reshape(-1, qp.n), b=b_all[eq_keep],
        upper_rows=upper_rows, lower_rows=lower_rows, tied_rows=tied_rows, eq_keep=eq_keep,
    )


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _norm_inf(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def _interior_point(H, g, red: _Reduced, u0: np.ndarray, max_iter: int):
    G, h, E, b = red.G, red.h, red.E, red.b
    n, m, q = len(g), len(h), len(b)
    u = u0.copy()
    s = np.maximum(h - G @ u, 1.0)
    z = np.ones(m)
    nu = np.zeros(q)
    eye_n = np.eye(n)
    reg_q = PSD_SHIFT * np.eye(q)

    status = MAX_ITER
    iterations = 0
    for it in range(max_iter + 1):
        r_d = H @ u + g + G.T @ z + E.T @ nu
        r_p = G @ u + s - h
        r_e = E @ u - b
        slack = h - G @ u
        stationarity = _norm_inf(r_d)
        primal = max(_norm_inf(np.maximum(-slack, 0.0)), _norm_inf(r_e))
        complementarity = _norm_inf(z * slack)
        if (
            stationarity <= QP_TOL_STATIONARITY
            and complementarity <= QP_TOL_COMPLEMENTARITY
            and primal <= QP_TOL_PRIMAL
        ):
            status = OPTIMAL
            break
        if it == max_iter:
            break
        if m and _norm_inf(z) > _DUAL_BLOWUP:
            status = INFEASIBLE
            break

        d = z / s
        K = H + G.T @ (d[:, None] * G) + PSD_SHIFT * eye_n
        kkt = np.block([[K, E.T], [E, -reg_q]])
        lu = linalg.lu_factor(kkt, check_finite=False)

        def direction(r_c):
            rhs_u = -r_d - G.T @ ((r_c + z * r_p) / s)
            sol = linalg.lu_solve(lu, np.concatenate([rhs_u, -r_e]), check_finite=False)
            du, dnu = sol[:n], sol[n:]
            ds = -r_p - G @ du
            dz = (r_c - z * ds) / s
            return du, dnu, ds, dz

        if m:
            mu = float(s @ z) / m
            du, dnu, ds, dz = direction(-s * z)
            alpha_aff = min(1.0, _max_step(s, ds), _max_step(z, dz))
            mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / m
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            du, dnu, ds, dz = direction(-s * z + sigma * mu - ds * dz)
            alpha = min(1.0, _STEP_FRACTION * min(_max_step(s, ds), _max_step(z, dz)))
        else:
            du, dnu, ds, dz = direction(np.zeros(0))
            alpha = 1.0

        u = u + alpha * du
        nu = nu + alpha * dnu
        s = s + alpha * ds
        z = z + alpha * dz
        iterations += 1

    if status == MAX_ITER and primal > 1e-6:
        status = INFEASIBLE
    return u, z, nu, status, iterations


def solve_qp(qp: DenseQP, warm_start=None, max_iter: int = QP_MAX_ITER) -> QpSolution:
    """Solve a dense convex QP.

    ``warm_start`` may be a previous QpSolution or a primal vector; only the
    primal part is used as the starting point. Infeasibility is reported
    through ``status``; a non-PSD H raises ValueError.
    """
    if qp.m and np.any(qp.lb > qp.ub):
        return _empty_solution(qp, INFEASIBLE, "bound conflict lb > ub")
    H = check_psd(qp.H)

    red = _reduce(qp)
    if red is None:
        return _empty_solution(qp, INFEASIBLE, "constant row violates its bounds")

    n = qp.n
    if red.E.shape[0]:
        u_ls, *_ = np.linalg.lstsq(red.E, red.b, rcond=None)
        residual = _norm_inf(red.E @ u_ls - red.b)
        if residual > 1e-8 * max(1.0, _norm_inf(red.b)):
            return _empty_solution(qp, INFEASIBLE, f"inconsistent equalities (residual {residual:.2e})")
    else:
        u_ls = np.zeros(n)

    if isinstance(warm_start, QpSolution):
        u0 = np.asarray(warm_start.u_star, dtype=float)
    elif warm_start is not None:
        u0 = np.asarray(warm_start, dtype=float)
    else:
        u0 = u_ls
    if u0.shape != (n,) or not np.all(np.isfinite(u0)):
        u0 = u_ls

    u, z, nu_red, status, iterations = _interior_point(H, qp.g, red, u0, max_iter)

    lam_lower = np.zeros(qp.m)
    lam_upper = np.zeros(qp.m)
    n_up = len(red.upper_rows)
    lam_upper[red.upper_rows] = z[:n_up]
    lam_lower[red.lower_rows] = z[n_up:]

    nu_all = np.zeros(qp.q + len(red.tied_rows))
    nu_all[red.eq_keep] = nu_red
    nu = nu_all[:qp.q]
    nu_tied = nu_all[qp.q:]
    lam_upper[red.tied_rows] = np.maximum(nu_tied, 0.0)
    lam_lower[red.tied_rows] = np.maximum(-nu_tied, 0.0)

    kkt, primal = kkt_residuals(qp, u, lam_lower, lam_upper, nu)
    if status != OPTIMAL:
        logger.debug(f"QP ended with status={status} after {iterations} iterations (kkt={kkt:.2e}, primal={primal:.2e})")
    return QpSolution(
        u_star=u,
        lam_lower=lam_lower,
        lam_upper=lam_upper,
        nu=nu,
        status=status,
        kkt_residual=kkt,
        primal_residual=primal,
        iterations=iterations,
        objective=qp.objective(u),
    )


def kkt_residuals(qp: DenseQP, u, lam_lower, lam_upper, nu) -> tuple[float, float]:
    """(max of stationarity and complementarity, primal violation) in the caller's row layout."""
    Au = qp.A_ineq @ u
    stationarity = qp.H @ u + qp.g + qp.A_ineq.T @ (lam_upper - lam_lower) + qp.A_eq.T @ nu
    with np.errstate(invalid="ignore"):
        up_gap = np.where(np.isfinite(qp.ub), qp.ub - Au, 0.0)
        lo_gap = np.where(np.isfinite(qp.lb), Au - qp.lb, 0.0)
    complementarity = max(_norm_inf(lam_upper * up_gap), _norm_inf(lam_lower * lo_gap))
    primal = max(
        _norm_inf(np.maximum(-up_gap, 0.0)),
        _norm_inf(np.maximum(-lo_gap, 0.0)),
        _norm_inf(qp.A_eq @ u - qp.b_eq),
    )
    return max(_norm_inf(stationarity), complementarity), primal


def polish(qp: DenseQP, sol: QpSolution) -> np.ndarray:
    """Re-solve on the active set read off ``sol`` as an equality-constrained KKT system.

    A row counts as active when its multiplier exceeds its slack.
    """
    u = sol.u_star
    Au = qp.A_ineq @ u
    with np.errstate(invalid="ignore"):
        up_gap = np.where(np.isfinite(qp.ub), qp.ub - Au, np.inf)
        lo_gap = np.where(np.isfinite(qp.lb), Au - qp.lb, np.inf)
    active_up = sol.lam_upper > up_gap
    active_lo = (sol.lam_lower > lo_gap) & ~active_up
    A = np.vstack([qp.A_eq, qp.A_ineq[active_up], qp.A_ineq[active_lo]])
    b = np.concatenate([qp.b_eq, qp.ub[active_up], qp.lb[active_lo]])
    n, k = qp.n, A.shape[0]
    kkt = np.block([[qp.H, A.T], [A, np.zeros((k, k))]])
    x, *_ = np.linalg.lstsq(kkt, np.concatenate([-qp.g, b]), rcond=None)
    return x[:n]


def dump_qp(qp: DenseQP, stem) -> list[Path]:
    """Write the QP as matrix-market files ``<stem>_<part>.mtx`` for external cross-checks."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    parts = {
        "H": qp.H,
        "g": qp.g.reshape(-1, 1),
        "A_ineq": qp.A_ineq,
        "lb": qp.lb.reshape(-1, 1),
        "ub": qp.ub.reshape(-1, 1),
        "A_eq": qp.A_eq,
        "b_eq": qp.b_eq.reshape(-1, 1),
    }
    written = []
    for name, matrix in parts.items():
        if matrix.size == 0:
            continue
        path = stem.with_name(f"{stem.name}_{name}.mtx")
        mmwrite(str(path), matrix, comment=f"{name} of a {qp.n}-variable dense QP")
        written.append(path)
    logger.info(f"Dumped QP ({qp.n} vars, {qp.m} ineq, {qp.q} eq) to {stem.parent}")
    return written
