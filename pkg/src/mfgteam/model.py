"""Problem data for two-team linear-quadratic mean-field game-team models.

A :class:`ProblemSpec` holds the homogeneous per-team coefficients of the
weakly-coupled dynamics

    dx_i = (A_k x_i + B_k u_i + F_k x^(N)) dt + sigma_k(t) dW_i

and the individual costs

    J_i = 1/2 E int_0^T |x_i - Gamma_k x^(N)|^2_{Q_k} + |u_i|^2_{R_k} dt,

together with the coalition weights (alpha, beta) that mix the two team
costs, the limiting team fractions and the initial-condition laws.

Coalition matrices live here too, since classification only needs entries.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = "mfgt-spec/1"
PD_RTOL = 1e-12

_MATRIX_FIELDS = ("A1", "A2", "B1", "B2", "F1", "F2", "Gamma1", "Gamma2", "Q1", "Q2", "R1", "R2")


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_sigma(s, n: int, name: str) -> np.ndarray:
    arr = np.array(s, dtype=float)
    if arr.ndim == 0:
        arr = np.full((1, n), float(arr))
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(f"{name} must have shape (pieces, {n}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class InitLaw:
    """Gaussian law of the i.i.d. initial states of one team."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(mean.size)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def root(self) -> np.ndarray:
        """Square root ``L`` with ``L L^T = cov``; eigh rather than Cholesky so singular laws work."""
        w, v = np.linalg.eigh(self.cov)
        return v * np.sqrt(np.clip(w, 0.0, None))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        # Always consume n normals so the stream layout does not depend on cov.
        return self.mean + self.root @ rng.standard_normal(self.mean.size)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of the mixed game-team problem.

    Matrices are stored read-only.  ``sigma1``/``sigma2`` have shape
    ``(pieces, n)`` and are piecewise constant on ``pieces`` equal
    sub-intervals of ``[0, T]``; a single row means constant noise.
    """

    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    Gamma1: np.ndarray
    Gamma2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    alpha: float
    beta: float
    T: float
    pi1: float
    pi2: float
    init1: InitLaw
    init2: InitLaw

    def __post_init__(self):
        for name in _MATRIX_FIELDS:
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        n = self.A1.shape[0]
        object.__setattr__(self, "sigma1", _as_sigma(self.sigma1, n, "sigma1"))
        object.__setattr__(self, "sigma2", _as_sigma(self.sigma2, n, "sigma2"))
        for name in ("init1", "init2"):
            law = getattr(self, name)
            if not isinstance(law, InitLaw):
                law = InitLaw(**law)
                object.__setattr__(self, name, law)
        for name in ("alpha", "beta", "T", "pi1", "pi2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        shapes = {
            "A1": (n, n), "A2": (n, n), "F1": (n, n), "F2": (n, n),
            "Gamma1": (n, n), "Gamma2": (n, n), "Q1": (n, n), "Q2": (n, n),
            "B1": (n, self.m), "B2": (n, self.m), "R1": (self.m, self.m), "R2": (self.m, self.m),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("init1", "init2"):
            law = getattr(self, name)
            if law.mean.shape != (n,) or law.cov.shape != (n, n):
                raise ValueError(f"{name} must have mean ({n},) and cov ({n}, {n})")

    @property
    def n(self) -> int:
        return self.A1.shape[0]

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def pi(self) -> tuple[float, float]:
        return (self.pi1, self.pi2)

    def team(self, k: int) -> dict[str, np.ndarray]:
        """Coefficients of team ``k`` (1 or 2) under short names."""
        if k not in (1, 2):
            raise ValueError("team index must be 1 or 2")
        s = str(k)
        return {
            "A": getattr(self, "A" + s), "B": getattr(self, "B" + s), "F": getattr(self, "F" + s),
            "Gamma": getattr(self, "Gamma" + s), "Q": getattr(self, "Q" + s),
            "R": getattr(self, "R" + s), "sigma": getattr(self, "sigma" + s),
            "init": getattr(self, "init" + s),
        }

    def sigma_at(self, k: int, t) -> np.ndarray:
        """Noise loading of team ``k`` at time(s) ``t``; shape ``(..., n)``."""
        table = self.sigma1 if k == 1 else self.sigma2
        pieces = table.shape[0]
        idx = np.clip(np.floor(np.asarray(t) / self.T * pieces).astype(int), 0, pieces - 1)
        return table[idx]

    def coefficient_norm(self) -> float:
        return max(float(np.linalg.norm(getattr(self, f))) for f in _MATRIX_FIELDS)

    def replace(self, **changes) -> ProblemSpec:
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data.update(changes)
        return ProblemSpec(**data)

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        doc = {"schema": SCHEMA}
        for name in _MATRIX_FIELDS:
            doc[name] = getattr(self, name).tolist()
        doc["sigma1"] = self.sigma1.tolist()
        doc["sigma2"] = self.sigma2.tolist()
        for name in ("alpha", "beta", "T", "pi1", "pi2"):
            doc[name] = getattr(self, name)
        doc["init1"] = self.init1.to_json()
        doc["init2"] = self.init2.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> ProblemSpec:
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}")
        data = {k: v for k, v in doc.items() if k != "schema"}
        data["init1"] = InitLaw(**data["init1"])
        data["init2"] = InitLaw(**data["init2"])
        return cls(**data)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> ProblemSpec:
        return cls.from_json(json.loads(Path(path).read_text()))


def make_spec(n: int = 1, m: int | None = None, **kw) -> ProblemSpec:
    """Build a spec with identity weights and zero dynamics unless overridden.

    Scalars given for matrix fields are broadcast to multiples of the identity
    (``B`` to the first ``min(n, m)`` columns).  ``init1``/``init2`` accept a
    mean vector or an :class:`InitLaw`.
    """
    m = n if m is None else m
    eye_n, eye_m = np.eye(n), np.eye(m)
    b_default = np.eye(n, m)
    defaults = dict(
        A1=0.0, A2=0.0, B1=b_default, B2=b_default, F1=0.0, F2=0.0, Gamma1=0.0, Gamma2=0.0,
        Q1=eye_n, Q2=eye_n, R1=eye_m, R2=eye_m, sigma1=np.zeros(n), sigma2=np.zeros(n),
        alpha=0.0, beta=0.0, T=1.0, pi1=0.5, pi2=0.5,
        init1=InitLaw(np.zeros(n), np.zeros((n, n))), init2=InitLaw(np.zeros(n), np.zeros((n, n))),
    )
    defaults.update(kw)
    for name in _MATRIX_FIELDS:
        val = defaults[name]
        if np.ndim(val) == 0:
            base = b_default if name.startswith("B") else (eye_m if name.startswith("R") else eye_n)
            defaults[name] = float(val) * base
    for name in ("init1", "init2"):
        law = defaults[name]
        if not isinstance(law, InitLaw):
            defaults[name] = InitLaw(np.broadcast_to(np.asarray(law, float), (n,)), np.zeros((n, n)))
    return ProblemSpec(**defaults)


# -- assumptions ---------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    assumption: str
    field: str
    message: str
    value: float | None = None

    def __str__(self) -> str:
        return f"{self.assumption}: {self.message}"


def _lambda_min(M: np.ndarray) -> tuple[float, float]:
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(w[0]), float(w[-1])


def validate(spec: ProblemSpec) -> list[Violation]:
    """Check the standing assumptions (H1)-(H4); an empty list means valid."""
    out: list[Violation] = []
    for name in _MATRIX_FIELDS + ("sigma1", "sigma2"):
        if not np.all(np.isfinite(getattr(spec, name))):
            out.append(Violation("(H1)", name, f"{name} has non-finite entries"))
    for name in ("Q1", "Q2", "R1", "R2"):
        M = getattr(spec, name)
        if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max())):
            out.append(Violation("(H2)", name, f"{name} not symmetric"))
        lo, hi = _lambda_min(M)
        if not lo > PD_RTOL * max(hi, 0.0) or hi <= 0.0:
            out.append(Violation("(H2)", name, f"{name} not positive definite, λ_min = {lo:g}", lo))
    for name in ("init1", "init2"):
        lo, _ = _lambda_min(getattr(spec, name).cov)
        if lo < -1e-12:
            out.append(Violation("(H3)", name, f"{name} covariance not PSD, λ_min = {lo:g}", lo))
    if min(spec.pi1, spec.pi2) <= 0.0:
        out.append(Violation("(H4)", "pi", f"min π_k must be > 0, got {min(spec.pi1, spec.pi2):g}",
                             min(spec.pi1, spec.pi2)))
    if abs(spec.pi1 + spec.pi2 - 1.0) > 1e-12:
        out.append(Violation("(H4)", "pi", f"π_1 + π_2 must equal 1, got {spec.pi1 + spec.pi2:g}",
                             spec.pi1 + spec.pi2))
    if not spec.T > 0.0:
        out.append(Violation("(H1)", "T", f"horizon must be positive, got {spec.T:g}", spec.T))
    return out


# -- populations ---------------------------------------------------------


@dataclass(frozen=True)
class PopulationSpec:
    N1: int
    N2: int
    pi1: float = 0.5
    pi2: float = 0.5

    def __post_init__(self):
        if self.N1 < 1 or self.N2 < 1:
            raise ValueError("team sizes must be positive")

    @classmethod
    def from_total(cls, N: int, spec: ProblemSpec) -> PopulationSpec:
        N1 = int(round(spec.pi1 * N))
        N1 = min(max(N1, 1), N - 1)
        return cls(N1, N - N1, spec.pi1, spec.pi2)

    @property
    def N(self) -> int:
        return self.N1 + self.N2

    @property
    def pi1N(self) -> float:
        return self.N1 / self.N

    @property
    def pi2N(self) -> float:
        return self.N2 / self.N

    @property
    def epsN(self) -> float:
        return max(abs(self.pi1N - self.pi1), abs(self.pi2N - self.pi2))


# -- coalition matrices --------------------------------------------------


class CoalitionKind(enum.Enum):
    MG = "MG"
    MT = "MT"
    MIX_C4 = "MIX_C4"
    GENERAL_C5 = "GENERAL_C5"


@dataclass(frozen=True)
class CoalitionMatrix:
    """Block coalition matrix with all-ones diagonal blocks.

    ``weights[a][b]`` is the scalar filling the off-diagonal block (a, b);
    diagonal entries of ``weights`` are ignored.
    """

    sizes: tuple[int, ...]
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError("block sizes must be positive")
        w = np.zeros((len(sizes), len(sizes))) if self.weights is None else np.array(self.weights, float)
        if w.shape != (len(sizes), len(sizes)):
            raise ValueError("weights must be n_c x n_c")
        np.fill_diagonal(w, 1.0)
        w.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "weights", w)

    @property
    def N(self) -> int:
        return sum(self.sizes)

    def to_dense(self) -> np.ndarray:
        return np.repeat(np.repeat(self.weights, self.sizes, axis=0), self.sizes, axis=1)

    @classmethod
    def identity(cls, N: int) -> CoalitionMatrix:
        return cls((1,) * N)

    @classmethod
    def ones(cls, N: int) -> CoalitionMatrix:
        return cls((N,))

    @classmethod
    def two_team(cls, N1: int, N2: int, alpha: float, beta: float) -> CoalitionMatrix:
        return cls((N1, N2), [[1.0, alpha], [beta, 1.0]])


@dataclass(frozen=True)
class Classification:
    kind: CoalitionKind
    sizes: tuple[int, ...]
    regime: str | None = None
    alpha: float | None = None
    beta: float | None = None


def _block_structure(C: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
    N = C.shape[0]
    if C.shape != (N, N) or N == 0:
        raise ValueError("coalition matrix must be square and non-empty")
    if not np.all(np.diag(C) == 1.0):
        raise ValueError("coalition matrix diagonal must be all ones")
    starts = []
    s = 0
    while s < N:
        e = s + 1
        while e < N and np.all(C[s:e + 1, s:e + 1] == 1.0):
            e += 1
        starts.append((s, e))
        s = e
    nb = len(starts)
    W = np.eye(nb)
    for a, (sa, ea) in enumerate(starts):
        for b, (sb, eb) in enumerate(starts):
            if a == b:
                continue
            blk = C[sa:ea, sb:eb]
            if not np.all(blk == blk.flat[0]):
                raise ValueError(f"off-diagonal block ({a}, {b}) is not a scalar multiple of ones")
            W[a, b] = blk.flat[0]
    return tuple(e - s for s, e in starts), W


def classify(C) -> Classification:
    """Classify a coalition matrix from its entries alone."""
    dense = C.to_dense() if isinstance(C, CoalitionMatrix) else np.asarray(C, dtype=float)
    sizes, W = _block_structure(dense)
    N = dense.shape[0]
    if len(sizes) == 1:
        return Classification(CoalitionKind.MT, sizes)
    if len(sizes) == N and np.all(W[~np.eye(N, dtype=bool)] == 0.0):
        return Classification(CoalitionKind.MG, sizes)
    if len(sizes) == 2:
        alpha, beta = float(W[0, 1]), float(W[1, 0])
        if alpha < 0 and beta < 0:
            regime = "competitive"
        elif alpha > 0 and beta > 0:
            regime = "cooperative"
        else:
            regime = "asymmetric"
        return Classification(CoalitionKind.MIX_C4, sizes, regime, alpha, beta)
    return Classification(CoalitionKind.GENERAL_C5, sizes)


def effective_costs(C, J) -> np.ndarray:
    """Effective cost vector ``K = C @ J``."""
    dense = C.to_dense() if isinstance(C, CoalitionMatrix) else np.asarray(C, dtype=float)
    J = np.asarray(J, dtype=float)
    if dense.shape[1] != J.shape[0]:
        raise ValueError(f"dimension mismatch: C is {dense.shape}, J has length {J.shape[0]}")
    return dense @ J
