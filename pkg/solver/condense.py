"""Condensed (stacked) prediction form: states and outputs as affine maps of the input sequence.

Every stack covers steps 0..N. Output stacks append the step's input after the
selected states; the input at step N is not a decision and is held at zero.
"""
from dataclasses import dataclass

import numpy as np

from models.vehicle import LtvLateralModel, SimParams, longitudinal_model, ov_model


@dataclass(frozen=True)
class CondensedSystem:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    E_tilde: np.ndarray | None
    Cf: np.ndarray
    Df: np.ndarray
    Ef: np.ndarray | None
    Cz: np.ndarray
    Dz: np.ndarray
    Ez: np.ndarray | None
    x0: np.ndarray
    exo: np.ndarray | None
    N: int
    nx: int

    def _offset(self, C, E) -> np.ndarray:
        offset = C @ self.x0
        if E is not None and self.exo is not None:
            offset = offset + E @ self.exo
        return offset

    @property
    def x_const(self) -> np.ndarray:
        return self._offset(self.A_tilde, self.E_tilde)

    @property
    def f_const(self) -> np.ndarray:
        return self._offset(self.Cf, self.Ef)

    @property
    def z_const(self) -> np.ndarray:
        return self._offset(self.Cz, self.Ez)

    def states(self, u) -> np.ndarray:
        """Predicted states as an (N+1, nx) array."""
        x = self.x_const + self.B_tilde @ np.asarray(u, dtype=float)
        return x.reshape(self.N + 1, self.nx)

    def f(self, u) -> np.ndarray:
        return self.f_const + self.Df @ np.asarray(u, dtype=float)

    def z(self, u) -> np.ndarray:
        return self.z_const + self.Dz @ np.asarray(u, dtype=float)

    def tracking(self, q_diag, z_ref):
        """Quadratic form of sum_k (z_k - z_ref)' diag(q) (z_k - z_ref) as (H, g, const) in the inputs."""
        weights = np.tile(np.asarray(q_diag, dtype=float), self.N + 1)
        error = self.z_const - np.tile(np.asarray(z_ref, dtype=float), self.N + 1)
        WD = weights[:, None] * self.Dz
        H = 2.0 * self.Dz.T @ WD
        g = 2.0 * WD.T @ error
        return 0.5 * (H + H.T), g, float(error @ (weights * error))


def _stack(A_seq, B_seq, E_seq, nx: int, N: int):
    nu = B_seq.shape[2] if N else 1
    A_t = np.zeros((nx * (N + 1), nx))
    B_t = np.zeros((nx * (N + 1), N * nu))
    E_t = None if E_seq is None else np.zeros((nx * (N + 1), N * E_seq.shape[2] if N else 0))
    A_t[:nx] = np.eye(nx)
    for k in range(N):
        cur = slice(k * nx, (k + 1) * nx)
        nxt = slice((k + 1) * nx, (k + 2) * nx)
        A_t[nxt] = A_seq[k] @ A_t[cur]
        B_t[nxt] = A_seq[k] @ B_t[cur]
        B_t[nxt, k * nu:(k + 1) * nu] += B_seq[k]
        if E_t is not None:
            ne = E_seq.shape[2]
            E_t[nxt] = A_seq[k] @ E_t[cur]
            E_t[nxt, k * ne:(k + 1) * ne] += E_seq[k]
    return A_t, B_t, E_t


def _outputs(A_t, B_t, E_t, nx: int, N: int, state_idx: list[int]):
    """Per-step output [selected states..., input] stacked over k = 0..N."""
    width = len(state_idx) + 1
    rows = width * (N + 1)
    C = np.zeros((rows, nx))
    D = np.zeros((rows, B_t.shape[1]))
    E = None if E_t is None else np.zeros((rows, E_t.shape[1]))
    for k in range(N + 1):
        for j, idx in enumerate(state_idx):
            src = k * nx + idx
            dst = k * width + j
            C[dst] = A_t[src]
            D[dst] = B_t[src]
            if E is not None:
                E[dst] = E_t[src]
        if k < N:
            D[k * width + width - 1, k] = 1.0
    return C, D, E


def _check_initial(x0, nx: int, name: str) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (nx,):
        raise ValueError(f"{name} must have {nx} entries, got {x0.shape[0]}")
    return x0


def condense_lateral(x_y0, ltv: LtvLateralModel, N: int | None = None) -> CondensedSystem:
    """Lateral stack over [s_y, psi] with f- and z-outputs [s_y, psi, delta] per step."""
    N = ltv.N if N is None else N
    if ltv.N != N:
        raise ValueError(f"LTV model has {ltv.N} steps, horizon is {N}")
    x0 = _check_initial(x_y0, 2, "x_y0")
    A_t, B_t, _ = _stack(ltv.A_seq, ltv.B_seq, None, 2, N)
    C, D, _ = _outputs(A_t, B_t, None, 2, N, [0, 1])
    return CondensedSystem(
        A_tilde=A_t, B_tilde=B_t, E_tilde=None,
        Cf=C, Df=D, Ef=None, Cz=C.copy(), Dz=D.copy(), Ez=None,
        x0=x0, exo=None, N=N, nx=2,
    )


def condense_ov(x_o0, u_e, N: int, params: SimParams) -> CondensedSystem:
    """OV stack over [s_x, v_o]; f-outputs [v_o, a_o], z-outputs [s_x, v_o, a_o] per step.

    ``u_e`` is the exogenous EV speed per step, i.e. v*(k+1|t-1).
    """
    x0 = _check_initial(x_o0, 2, "x_o0")
    u_e = np.asarray(u_e, dtype=float).ravel()
    if len(u_e) < N:
        raise ValueError(f"exogenous speed sequence has {len(u_e)} entries, horizon is {N}")
    u_e = u_e[:N]
    A_o, B_o, E_o = ov_model(params)
    A_seq = np.tile(A_o, (N, 1, 1))
    B_seq = np.tile(B_o, (N, 1, 1))
    E_seq = np.tile(E_o, (N, 1, 1))
    A_t, B_t, E_t = _stack(A_seq, B_seq, E_seq, 2, N)
    Cf, Df, Ef = _outputs(A_t, B_t, E_t, 2, N, [1])
    Cz, Dz, Ez = _outputs(A_t, B_t, E_t, 2, N, [0, 1])
    return CondensedSystem(
        A_tilde=A_t, B_tilde=B_t, E_tilde=E_t,
        Cf=Cf, Df=Df, Ef=Ef, Cz=Cz, Dz=Dz, Ez=Ez,
        x0=x0, exo=u_e, N=N, nx=2,
    )


def condense_longitudinal(x_x0, a_o_seq, N: int, params: SimParams) -> CondensedSystem:
    """Longitudinal stack over [s_x, v, v_o] with the OV acceleration as the exogenous channel.

    f-outputs are [v, a] per step and z-outputs [s_x, v, a].
    """
    x0 = _check_initial(x_x0, 3, "x_x0")
    a_o = np.asarray(a_o_seq, dtype=float).ravel()
    if len(a_o) < N:
        raise ValueError(f"OV acceleration sequence has {len(a_o)} entries, horizon is {N}")
    a_o = a_o[:N]
    A_x, B_x, E_x = longitudinal_model(params)
    A_t, B_t, E_t = _stack(np.tile(A_x, (N, 1, 1)), np.tile(B_x, (N, 1, 1)), np.tile(E_x, (N, 1, 1)), 3, N)
    Cf, Df, Ef = _outputs(A_t, B_t, E_t, 3, N, [1])
    Cz, Dz, Ez = _outputs(A_t, B_t, E_t, 3, N, [0, 1])
    return CondensedSystem(
        A_tilde=A_t, B_tilde=B_t, E_tilde=E_t,
        Cf=Cf, Df=Df, Ef=Ef, Cz=Cz, Dz=Dz, Ez=Ez,
        x0=x0, exo=a_o, N=N, nx=3,
    )
