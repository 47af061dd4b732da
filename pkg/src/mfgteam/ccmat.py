"""Block matrices of the consistency-condition (CC) forward-backward system.

The CC system couples the stacked generic state ``x = (x_i, x_j)`` (2n) with
ten n-dimensional adjoint components ``y`` (10n), in this frozen order::

    0 y_i      1 p1*     2 p2*     3 p1*_i    4 p2*_j
    5 y_j      6 p^2*    7 p^1*    8 p^2*_j   9 p^1*_i

(``p^`` are the hatted adjoints of team 2's auxiliary problem).  It reads

    dx = (A x + B u + F Ex) dt + sig1 dW_i + sig2 dW_j
    dy = (Abar x + Bbar y + Ftil Ex + Htil Ey) dt + z1 dW_i + z2 dW_j
    R u + Btil^T y = 0,    x(0) = x0,  y(T) = 0.

``assemble`` reproduces the published block layout entry for entry
(``variant="printed"``).  ``variant="derived"`` rebuilds ``Htil`` from the
adjoint equations of the auxiliary problems instead; it is a diagnostic, not
the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .model import ProblemSpec

Y_COMPONENTS = ("y_i", "p1*", "p2*", "p1*_i", "p2*_j", "y_j", "p^2*", "p^1*", "p^2*_j", "p^1*_i")
VARIANTS = ("printed", "derived")


@dataclass(frozen=True)
class CCMatrices:
    n: int
    m: int
    Abf: np.ndarray
    Bbf: np.ndarray
    Fbf: np.ndarray
    Rbf: np.ndarray
    Abar: np.ndarray
    Btil: np.ndarray
    Bbar: np.ndarray
    Ftil: np.ndarray
    Htil: np.ndarray
    sigma_blocks: tuple[np.ndarray, np.ndarray]
    variant: str = "printed"

    BLOCKS = ("Abf", "Bbf", "Fbf", "Rbf", "Abar", "Btil", "Bbar", "Ftil", "Htil")

    @property
    def G(self) -> np.ndarray:
        """``B R^{-1} Btil^T`` (2n x 10n), the control coupling in both Riccati equations."""
        return self.Bbf @ np.linalg.solve(self.Rbf, self.Btil.T)

    def coefficient_norm(self) -> float:
        return max(float(np.linalg.norm(getattr(self, b))) for b in self.BLOCKS)

    def block(self, name: str, row: int, col: int) -> np.ndarray:
        """The (row, col) n x n (or n x m) sub-block of a named matrix."""
        M = getattr(self, name)
        rs = self.m if name == "Rbf" else self.n
        cs = self.m if name in ("Bbf", "Btil", "Rbf") else self.n
        return M[row * rs:(row + 1) * rs, col * cs:(col + 1) * cs]

    def to_json(self) -> dict:
        doc = {"n": self.n, "m": self.m, "variant": self.variant, "y_order": list(Y_COMPONENTS)}
        for b in self.BLOCKS:
            doc[b] = getattr(self, b).tolist()
        doc["sigma_blocks"] = [s.tolist() for s in self.sigma_blocks]
        return doc

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def _grid(nrows: int, ncols: int, entries: dict, n: int, m_col: int | None = None) -> np.ndarray:
    cs = n if m_col is None else m_col
    out = np.zeros((nrows * n, ncols * cs))
    for (r, c), val in entries.items():
        out[r * n:(r + 1) * n, c * cs:(c + 1) * cs] += val
    return out


def assemble(spec: ProblemSpec, variant: str = "printed") -> CCMatrices:
    """Assemble all CC blocks with the limiting fractions ``spec.pi``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    n, m = spec.n, spec.m
    A1, A2, B1, B2 = spec.A1, spec.A2, spec.B1, spec.B2
    F1, F2, Q1, Q2 = spec.F1, spec.F2, spec.Q1, spec.Q2
    G1, G2 = spec.Gamma1, spec.Gamma2
    p1, p2 = spec.pi1, spec.pi2
    a, b = spec.alpha, spec.beta
    Z = np.zeros((n, n))

    Abf = np.block([[A1, Z], [Z, A2]])
    Bbf = np.block([[B1, np.zeros((n, m))], [np.zeros((n, m)), B2]])
    Fbf = np.block([[p1 * F1, p2 * F1], [p1 * F2, p2 * F2]])
    Rbf = np.block([[spec.R1, np.zeros((m, m))], [np.zeros((m, m)), spec.R2]])

    Abar = _grid(10, 2, {(0, 0): -Q1, (3, 0): -Q1, (4, 1): -a * Q2, (5, 1): -Q2,
                         (8, 1): -Q2, (9, 0): -b * Q1}, n)
    Btil = _grid(10, 2, {(0, 0): B1, (5, 1): B2}, n, m_col=m)

    f1, f2 = p1 * F1.T, p2 * F2.T
    Bbar = _grid(10, 10, {
        (0, 0): -A1.T, (0, 1): -f1, (0, 2): -f2,
        (1, 1): -A1.T - f1, (1, 2): -f2,
        (2, 1): -f1, (2, 2): -A2.T - f2,
        (3, 3): -A1.T,
        (4, 4): -A2.T,
        (5, 5): -A2.T, (5, 6): -f2, (5, 7): -f1,
        (6, 6): -A2.T - f2, (6, 7): -f1,
        (7, 6): -f2, (7, 7): -A1.T - f1,
        (8, 8): -A2.T,
        (9, 9): -A1.T,
    }, n)

    QG1, GQ1, GQG1 = Q1 @ G1, G1.T @ Q1, G1.T @ Q1 @ G1
    QG2, GQ2, GQG2 = Q2 @ G2, G2.T @ Q2, G2.T @ Q2 @ G2
    row0 = (p1 * (QG1 + GQ1 - p1 * GQG1 - a * p2 * GQG2),
            p2 * (QG1 + a * GQ2 - p1 * GQG1 - a * p2 * GQG2))
    row2 = (p1 * (GQ1 + a * QG2 - p1 * GQG1 - a * p2 * GQG2),
            p2 * (a * QG2 + a * GQ2 - p1 * GQG1 - a * p2 * GQG2))
    row5 = (p1 * (QG2 + b * GQ1 - b * p1 * GQG1 - p2 * GQG2),
            p2 * (QG2 + GQ2 - b * p1 * GQG1 - p2 * GQG2))
    row7 = (p1 * (b * QG1 + b * GQ1 - p1 * GQG1 - p2 * GQG2),
            p2 * (b * QG1 + GQ2 - p1 * GQG1 - p2 * GQG2))
    fent = {}
    for r, row in ((0, row0), (1, row0), (2, row2), (5, row5), (6, row5), (7, row7)):
        fent[(r, 0)], fent[(r, 1)] = row
    Ftil = _grid(10, 2, fent, n)

    if variant == "printed":
        hent = {
            (0, 1): -f1, (0, 2): -f2, (0, 3): -f1, (0, 4): -f2,
            (1, 1): -f1, (1, 2): -f2, (1, 3): -A1.T - f1, (1, 4): -f2,
            (2, 1): -f1, (2, 2): -A2.T - f2, (2, 3): -f1, (2, 4): -f2,
            (5, 6): -f2, (5, 7): -f1, (5, 8): -f2, (5, 9): -f1,
            (6, 6): -A2.T - f2, (6, 7): -f1, (6, 8): -f2, (6, 9): -f1,
            (7, 6): -f2, (7, 7): -A1.T - f1, (7, 8): -f2, (7, 9): -f1,
        }
    else:
        # Only the expectations of the generic-agent adjoints enter through Ey;
        # the deterministic p*, p^* components are already carried by Bbar.
        hent = {}
        for r in (0, 1, 2):
            hent[(r, 3)], hent[(r, 4)] = -f1, -f2
        for r in (5, 6, 7):
            hent[(r, 8)], hent[(r, 9)] = -f2, -f1
    Htil = _grid(10, 10, hent, n)

    sig = (np.vstack([spec.sigma1, np.zeros_like(spec.sigma1)]),
           np.vstack([np.zeros_like(spec.sigma2), spec.sigma2]))
    mats = dict(Abf=Abf, Bbf=Bbf, Fbf=Fbf, Rbf=Rbf, Abar=Abar, Btil=Btil, Bbar=Bbar, Ftil=Ftil, Htil=Htil)
    for v in mats.values():
        v.setflags(write=False)
    return CCMatrices(n=n, m=m, sigma_blocks=sig, variant=variant, **mats)


def assemble_hamiltonian(cc: CCMatrices) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Return ``Psi`` (12n x 12n) and a builder ``P -> Phi(P)``.

    ``Psi = [[A + F, -G], [Abar + Ftil, Htil + Bbar]]`` generates the
    Riccati solution P; ``Phi(P)`` does the same for K once P is known.
    """
    G = cc.G
    Psi = np.block([[cc.Abf + cc.Fbf, -G], [cc.Abar + cc.Ftil, cc.Htil + cc.Bbar]])

    def phi(P: np.ndarray) -> np.ndarray:
        return np.block([
            [cc.Abf - G @ P, G],
            [-(P @ cc.Fbf - cc.Ftil - cc.Htil @ P), cc.Bbar + P @ G],
        ])

    return Psi, phi
