"""Decentralized feedback strategy and its deterministic mean-field path.

Each agent pairs with one generic agent of the opposite team and applies

    (u_i, u_j) = Theta1 (x_i, x_j) + Theta2 (E(x_i, x_j) - (x_i, x_j)),

where ``E(x_i, x_j)`` is precomputed offline from the expectation ODE
``dEx/dt = (A + B Theta1 + F) Ex``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ccmat import CCMatrices
from .errors import GridMismatch
from .model import ProblemSpec
from .riccati import RiccatiSolution

PARTNER_RULE = "round-robin"
HOMOGENEOUS_ROWS = (1, 2, 6, 7)  # p1*, p2*, p^2*, p^1*


@dataclass(frozen=True)
class MeanFieldPath:
    grid: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    mbar: np.ndarray
    Ex: np.ndarray

    def at(self, t) -> np.ndarray:
        """Linear interpolation of ``Ex`` at time(s) ``t``."""
        T, M = self.grid[-1], self.grid.size - 1
        t = np.clip(np.asarray(t, dtype=float), 0.0, T)
        k = np.minimum((t * M / T).astype(int), M - 1)
        w = (t * M / T - k)[..., None]
        return (1 - w) * self.Ex[k] + w * self.Ex[k + 1]

    def to_csv(self, path, header: dict | None = None) -> None:
        n = self.m1.shape[1]
        with open(path, "w", newline="") as fh:
            for key in sorted(header or {}):
                fh.write(f"# {key}={header[key]}\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{nm}[{a}]" for nm in ("m1", "m2", "mbar") for a in range(n)])
            for k, t in enumerate(self.grid):
                row = np.concatenate([self.m1[k], self.m2[k], self.mbar[k]])
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class StrategyGains:
    ric: RiccatiSolution
    mf: MeanFieldPath
    n: int
    m: int
    partner_rule: str = PARTNER_RULE

    def __post_init__(self):
        if self.ric.grid.shape != self.mf.grid.shape:
            raise GridMismatch("Riccati solution and mean-field path use different grids")

    @property
    def T(self) -> float:
        return self.ric.T

    def linear_policy(self, t) -> tuple[np.ndarray, np.ndarray]:
        """``(Gx, g)`` such that the stacked control is ``Gx @ (x_i, x_j) + g``."""
        th1, th2 = self.ric.gains_at(t)
        Ex = self.mf.at(t)
        return th1 - th2, np.einsum("...ab,...b->...a", th2, Ex)


def partner_of(team: int, index: int, pop_sizes: tuple[int, int]) -> int:
    """Round-robin partner index in the opposite team."""
    return index % pop_sizes[1] if team == 1 else index % pop_sizes[0]


def propagate_mean_field(cc: CCMatrices, ric: RiccatiSolution, spec: ProblemSpec) -> MeanFieldPath:
    """RK4 solution of ``dEx/dt = (A + B Theta1 + F) Ex`` on the Riccati grid.

    Midpoint gains come from cubic Hermite interpolation of P, which keeps
    the scheme fourth order.
    """
    if not np.isclose(ric.T, spec.T):
        raise GridMismatch(f"solution horizon {ric.T} differs from spec horizon {spec.T}")
    n = cc.n
    L = -np.linalg.solve(cc.Rbf, cc.Btil.T)
    drift = cc.Abf + cc.Fbf

    def mat(P):
        return drift + cc.Bbf @ L @ P

    h = ric.dt
    Ex = np.empty((ric.M + 1, 2 * n))
    Ex[0] = np.concatenate([spec.init1.mean, spec.init2.mean])
    for k in range(ric.M):
        a0, a2 = mat(ric.P[k]), mat(ric.P[k + 1])
        a1 = mat(ric.hermite(ric.grid[k] + 0.5 * h)[0])
        x = Ex[k]
        k1 = a0 @ x
        k2 = a1 @ (x + 0.5 * h * k1)
        k3 = a1 @ (x + 0.5 * h * k2)
        k4 = a2 @ (x + h * k3)
        Ex[k + 1] = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    m1, m2 = Ex[:, :n].copy(), Ex[:, n:].copy()
    mbar = spec.pi1 * m1 + spec.pi2 * m2
    return MeanFieldPath(ric.grid, m1, m2, mbar, Ex)


def build_gains(cc: CCMatrices, ric: RiccatiSolution, spec: ProblemSpec) -> StrategyGains:
    return StrategyGains(ric, propagate_mean_field(cc, ric, spec), cc.n, cc.m)


def control(gains: StrategyGains, t: float, xi, xpartner) -> tuple[np.ndarray, np.ndarray]:
    """Controls of the pair ``(x_i, x_partner)``; returns ``(u_i, u_partner)``."""
    x = np.concatenate([np.atleast_1d(xi), np.atleast_1d(xpartner)]).astype(float)
    th1, th2 = gains.ric.gains_at(t)
    u = th1 @ x + th2 @ (gains.mf.at(t) - x)
    return u[:gains.m], u[gains.m:]


def fbsde_residual(cc: CCMatrices, ric: RiccatiSolution, mf: MeanFieldPath) -> dict:
    """Consistency of ``Ey = P Ex`` with the mean of the backward CC equation.

    Returns the max interior residual (centered differences) and the
    terminal mismatch, where both sides should vanish.
    """
    if ric.grid.shape != mf.grid.shape:
        raise GridMismatch("Riccati solution and mean-field path use different grids")
    Ey = np.einsum("kab,kb->ka", ric.P, mf.Ex)
    rhs = (np.einsum("ab,kb->ka", cc.Abar + cc.Ftil, mf.Ex)
           + np.einsum("ab,kb->ka", cc.Bbar + cc.Htil, Ey))
    dEy = (Ey[2:] - Ey[:-2]) / (2 * ric.dt)
    interior = float(np.abs(dEy - rhs[1:-1]).max()) if ric.M > 1 else 0.0
    return {"interior": interior, "terminal_y": float(np.abs(Ey[-1]).max()),
            "scale": 1.0 + cc.coefficient_norm()}


def homogeneity_deviation(ric: RiccatiSolution, mf: MeanFieldPath, n: int) -> float:
    """Max spread over the grid of the mean adjoints p1*, p2*, p^2*, p^1*."""
    Ey = np.einsum("kab,kb->ka", ric.P, mf.Ex)
    comps = np.stack([Ey[:, r * n:(r + 1) * n] for r in HOMOGENEOUS_ROWS])
    return float((comps.max(axis=0) - comps.min(axis=0)).max())
