"""Coupled non-symmetric Riccati equations of the CC system.

The pair ``(P, K)`` (each 10n x 2n) satisfies, backward from ``P(T) = K(T) = 0``,

    P' = -P (A + F) + (Htil + Bbar) P + P G P + (Abar + Ftil)
    K' = -K (A - G P) + (Bbar + P G) K - K G K - P F + Ftil + Htil P

with ``G = B R^{-1} Btil^T``.  Two independent routes are provided: the
linear-fractional closed form built from the fundamental matrices, and a
fixed-step RK4 integration.  Gains are ``Theta1 = -R^{-1} Btil^T P`` and
``Theta2 = -R^{-1} Btil^T K``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ccmat import CCMatrices, assemble_hamiltonian
from .errors import BlowUp, GridMismatch, NearSingularFactor, NonFinite

COND_MAX = 1e10
OVERFLOW_GUARD = 1e12
DEFAULT_M = 2000

# Pade(13) numerator coefficients; the denominator uses the same with alternating signs.
_PADE13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
           129060195264000.0, 10559470521600.0, 670442572800.0, 33522128640.0, 1323241920.0,
           40840800.0, 960960.0, 16380.0, 182.0, 1.0)
_SCALE_THRESHOLD = 0.5


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a degree-13 Pade approximant."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expm expects a square matrix")
    if not np.all(np.isfinite(M)):
        raise NonFinite("expm input")
    norm = np.linalg.norm(M, 1)
    s = 0
    if norm > _SCALE_THRESHOLD:
        s = int(np.ceil(np.log2(norm / _SCALE_THRESHOLD)))
        M = M / 2.0 ** s
    b = _PADE13
    ident = np.eye(M.shape[0])
    M2 = M @ M
    M4 = M2 @ M2
    M6 = M2 @ M4
    U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2) + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
    V = M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2) + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


@dataclass(frozen=True)
class RiccatiSolution:
    """Grid samples of ``(P, K)``, their time derivatives and the feedback gains.

    ``condition_log`` holds the 2-norm condition numbers of the inverted
    10n x 10n factors (columns: P factor, K factor); it is NaN for the
    integrated solver.
    """

    grid: np.ndarray
    P: np.ndarray
    K: np.ndarray
    Pdot: np.ndarray
    Kdot: np.ndarray
    Theta1: np.ndarray
    Theta2: np.ndarray
    condition_log: np.ndarray
    method: str

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    @property
    def M(self) -> int:
        return self.grid.size - 1

    @property
    def dt(self) -> float:
        return self.T / self.M

    def _locate(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.T)
        k = np.minimum((t / self.dt).astype(int), self.M - 1)
        return k, t / self.dt - k

    def gains_at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Linearly interpolated ``(Theta1, Theta2)`` at time(s) ``t``."""
        k, w = self._locate(t)
        w = np.asarray(w)[..., None, None]
        th1 = (1 - w) * self.Theta1[k] + w * self.Theta1[k + 1]
        th2 = (1 - w) * self.Theta2[k] + w * self.Theta2[k + 1]
        return th1, th2

    def hermite(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Cubic Hermite interpolation of ``(P, K)`` using the exact derivatives."""
        k, w = self._locate(t)
        w = np.asarray(w)[..., None, None]
        h = self.dt
        h00 = (1 + 2 * w) * (1 - w) ** 2
        h10 = w * (1 - w) ** 2
        h01 = w ** 2 * (3 - 2 * w)
        h11 = w ** 2 * (w - 1)
        P = h00 * self.P[k] + h * h10 * self.Pdot[k] + h01 * self.P[k + 1] + h * h11 * self.Pdot[k + 1]
        K = h00 * self.K[k] + h * h10 * self.Kdot[k] + h01 * self.K[k + 1] + h * h11 * self.Kdot[k + 1]
        return P, K

    def export(self, json_path, csv_path, meta: dict | None = None) -> None:
        """Metadata to JSON and one flattened CSV row (t, P, K, Theta1, Theta2) per grid point."""
        doc = {
            "method": self.method, "T": self.T, "M": self.M,
            "shapes": {"P": list(self.P.shape[1:]), "K": list(self.K.shape[1:]),
                       "Theta1": list(self.Theta1.shape[1:]), "Theta2": list(self.Theta2.shape[1:])},
            "max_condition": None if np.all(np.isnan(self.condition_log))
            else float(np.nanmax(self.condition_log)),
        }
        doc.update(meta or {})
        Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        names = []
        for name in ("P", "K", "Theta1", "Theta2"):
            r, c = getattr(self, name).shape[1:]
            names += [f"{name}[{i}][{j}]" for i in range(r) for j in range(c)]
        with open(csv_path, "w", newline="") as fh:
            for key in sorted(meta or {}):
                fh.write(f"# {key}={meta[key]}\n")
            w = csv.writer(fh)
            w.writerow(["t"] + names)
            for k, t in enumerate(self.grid):
                vals = np.concatenate([getattr(self, nm)[k].ravel() for nm in ("P", "K", "Theta1", "Theta2")])
                w.writerow([repr(float(t))] + [repr(float(v)) for v in vals])


def riccati_rhs(cc: CCMatrices, P: np.ndarray, K: np.ndarray, G: np.ndarray | None = None):
    """Time derivatives ``(P', K')`` of the coupled Riccati pair."""
    G = cc.G if G is None else G
    PG = P @ G
    dP = -P @ (cc.Abf + cc.Fbf) + (cc.Htil + cc.Bbar) @ P + PG @ P + (cc.Abar + cc.Ftil)
    dK = (-K @ (cc.Abf - G @ P) + (cc.Bbar + PG) @ K - K @ G @ K
          - P @ cc.Fbf + cc.Ftil + cc.Htil @ P)
    return dP, dK


def _gains(cc: CCMatrices, P: np.ndarray, K: np.ndarray):
    L = -np.linalg.solve(cc.Rbf, cc.Btil.T)
    return L @ P, L @ K


def _finish(cc, grid, P, K, cond, method) -> RiccatiSolution:
    G = cc.G
    Pdot = np.empty_like(P)
    Kdot = np.empty_like(K)
    for k in range(grid.size):
        Pdot[k], Kdot[k] = riccati_rhs(cc, P[k], K[k], G)
    th1, th2 = _gains(cc, P, K)
    for arr in (grid, P, K, Pdot, Kdot, th1, th2, cond):
        arr.setflags(write=False)
    return RiccatiSolution(grid, P, K, Pdot, Kdot, th1, th2, cond, method)


def _fractional(W: np.ndarray, d2: int):
    """``-V^{-1} U`` for ``W = [U V]`` together with ``cond(V)`` and ``sign(det V)``."""
    U, V = W[:, :d2], W[:, d2:]
    sign, _ = np.linalg.slogdet(V)
    return -np.linalg.solve(V, U), np.linalg.cond(V), sign


def _guard(t: float, cond: float, sign: float, prev_sign: float, cond_max: float) -> None:
    # det V = 1 at T and is continuous in t, so a sign flip between grid points
    # means V was singular in between even when no grid point lands close to it.
    if not np.isfinite(cond) or cond > cond_max:
        raise NearSingularFactor(t, cond, cond_max)
    if sign != prev_sign:
        raise NearSingularFactor(t, np.inf, cond_max)


_GAUSS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def solve_closed_form(cc: CCMatrices, T: float, M: int = DEFAULT_M, cond_max: float = COND_MAX) -> RiccatiSolution:
    """Closed-form ``(P, K)`` from the fundamental matrices.

    P uses ``exp(Psi (T - t))`` at every grid point.  ``Phi`` depends on
    ``P(t)``, so K uses the ordered exponential of ``Phi`` (fourth-order
    Magnus steps with P evaluated in closed form at the Gauss nodes); this
    reduces to ``exp(Phi (T - t))`` whenever Phi is constant.

    Raises
    ------
    NearSingularFactor
        If a 10n x 10n factor has condition number above ``cond_max``.
    """
    d2 = 2 * cc.n
    Psi, phi = assemble_hamiltonian(cc)
    grid = np.linspace(0.0, T, M + 1)
    h = T / M

    def p_at(t):
        W = expm(Psi * (T - t))[d2:]
        return _fractional(W, d2)

    P = np.zeros((M + 1, 10 * cc.n, d2))
    K = np.zeros_like(P)
    cond = np.ones((M + 1, 2))
    prev = 1.0
    for k in range(M - 1, -1, -1):
        P[k], cond[k, 0], sign = p_at(grid[k])
        _guard(grid[k], cond[k, 0], sign, prev, cond_max)
        prev = sign

    dim = Psi.shape[0]
    W = np.eye(dim)[d2:]
    prev = 1.0
    r3 = np.sqrt(3.0)
    for k in range(M - 1, -1, -1):
        # Right-multiplied ODE in reversed time: Omega = h/2 (A1 + A2) + sqrt(3) h^2 / 12 [A1, A2],
        # with A1 at the later Gauss node.
        ph_late = phi(p_at(grid[k] + _GAUSS[1] * h)[0])
        ph_early = phi(p_at(grid[k] + _GAUSS[0] * h)[0])
        omega = 0.5 * h * (ph_late + ph_early) + (r3 / 12.0) * h * h * (ph_late @ ph_early - ph_early @ ph_late)
        W = W @ expm(omega)
        K[k], cond[k, 1], sign = _fractional(W, d2)
        _guard(grid[k], cond[k, 1], sign, prev, cond_max)
        prev = sign
    return _finish(cc, grid, P, K, cond, "closed_form")


def solve_integrated(cc: CCMatrices, T: float, M: int = DEFAULT_M,
                     overflow_guard: float = OVERFLOW_GUARD) -> RiccatiSolution:
    """Backward fixed-step RK4 integration of the Riccati pair.

    P and K are advanced together as one system, so K's stages see P at the
    exact RK stage times.

    Raises
    ------
    BlowUp
        If any entry exceeds ``overflow_guard`` (finite escape on [0, T]).
    """
    grid = np.linspace(0.0, T, M + 1)
    h = -T / M
    G = cc.G
    P = np.zeros((M + 1, 10 * cc.n, 2 * cc.n))
    K = np.zeros_like(P)
    p, q = P[M].copy(), K[M].copy()
    for k in range(M, 0, -1):
        k1 = riccati_rhs(cc, p, q, G)
        k2 = riccati_rhs(cc, p + 0.5 * h * k1[0], q + 0.5 * h * k1[1], G)
        k3 = riccati_rhs(cc, p + 0.5 * h * k2[0], q + 0.5 * h * k2[1], G)
        k4 = riccati_rhs(cc, p + h * k3[0], q + h * k3[1], G)
        p = p + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        q = q + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        big = max(np.abs(p).max(), np.abs(q).max())
        if not np.isfinite(big) or big > overflow_guard:
            raise BlowUp(grid[k - 1], big)
        P[k - 1], K[k - 1] = p, q
    cond = np.full((M + 1, 2), np.nan)
    return _finish(cc, grid, P, K, cond, "integrated")


def solve(cc: CCMatrices, T: float, M: int = DEFAULT_M, method: str = "closed_form") -> RiccatiSolution:
    """Dispatch to a solver; ``method="auto"`` falls back to integration on a singular factor."""
    if method == "closed_form":
        return solve_closed_form(cc, T, M)
    if method == "integrated":
        return solve_integrated(cc, T, M)
    if method == "auto":
        try:
            return solve_closed_form(cc, T, M)
        except NearSingularFactor:
            return solve_integrated(cc, T, M)
    raise ValueError(f"unknown method {method!r}")


def residual(cc: CCMatrices, sol: RiccatiSolution) -> tuple[float, float]:
    """Max-norm residual of both Riccati equations with centered differences on interior points."""
    h = sol.dt
    dP = (sol.P[2:] - sol.P[:-2]) / (2 * h)
    dK = (sol.K[2:] - sol.K[:-2]) / (2 * h)
    G = cc.G
    rp = rk = 0.0
    for k in range(1, sol.M):
        fp, fk = riccati_rhs(cc, sol.P[k], sol.K[k], G)
        rp = max(rp, float(np.abs(dP[k - 1] - fp).max()))
        rk = max(rk, float(np.abs(dK[k - 1] - fk).max()))
    return rp, rk


def max_difference(a: RiccatiSolution, b: RiccatiSolution) -> tuple[float, float]:
    """Max-norm difference of P and of K between two solutions on the same grid."""
    if a.grid.shape != b.grid.shape or not np.allclose(a.grid, b.grid):
        raise GridMismatch("solutions live on different grids")
    return float(np.abs(a.P - b.P).max()), float(np.abs(a.K - b.K).max())
