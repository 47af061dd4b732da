"""Exact finite-N best response against a frozen opposing team.

The N agents are stacked into one ``N n`` state.  Time is discretized with
the simulator's explicit Euler step ``X+ = X + h (drift) + noise`` and its
cost quadrature (trapezoid in the state term, left point in the controls), so
the values below are the exact expectations of what ``sim.simulate`` samples.
One team's controls are free; the other team applies its decentralized law.

``best_response_value`` solves the resulting affine-LQ problem by the backward
recursion

    S_k = Q_k + Phi' S Phi - Phi' S B H^{-1} B' S Phi,    H = h R + B' S B
    s_k = q_k + Phi' v - Phi' S B H^{-1} B' v,            v = S e + s
    r_k = c_k + e' S e + 2 s' e + r + tr(S W) - v' B H^{-1} B' v

and ``policy_value`` runs the same recursion for a fixed linear policy.
Both return ``1/2 (mu' S_0 mu + tr(S_0 Sigma_0) + 2 s_0' mu + r_0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .fit import loglog_slope
from .model import InitLaw, PopulationSpec, ProblemSpec
from .strategy import StrategyGains

MAX_STACKED_DIM = 512


@dataclass(frozen=True)
class StackedLQ:
    """Time-varying affine-LQ data for the ``own`` team's best response.

    Attributes
    ----------
    Abig : (D, D) uncontrolled drift, agent dynamics plus the ``F x^(N)`` coupling.
    Bown, Bother : input maps of the two teams' stacked controls.
    Qstate : (D, D) weight of ``sum_a w_a |x_a - Gamma x^(N)|^2_Q``.
    Rown, Rother : block-diagonal control weights.
    """

    spec: ProblemSpec
    gains: StrategyGains
    pop: PopulationSpec
    own: int
    steps: int
    Abig: np.ndarray
    Bown: np.ndarray
    Bother: np.ndarray
    Qstate: np.ndarray
    Rown: np.ndarray
    Rother: np.ndarray
    w_other: float
    mu0: np.ndarray
    Sigma0: np.ndarray

    @property
    def h(self) -> float:
        return self.spec.T / self.steps

    @property
    def dim(self) -> int:
        return self.Abig.shape[0]

    def time(self, k: int) -> float:
        return k * self.h

    def weight(self, k: int) -> float:
        """Trapezoid weight of the state cost at step k."""
        return 0.5 * self.h if k in (0, self.steps) else self.h

    def noise_cov(self, k: int) -> np.ndarray:
        t = self.time(k)
        blocks = [self.spec.sigma_at(1, t)] * self.pop.N1 + [self.spec.sigma_at(2, t)] * self.pop.N2
        sig = np.concatenate(blocks)
        # Independent scalar Brownian motion per agent: block-diagonal outer products.
        n = self.spec.n
        W = np.zeros((self.dim, self.dim))
        for a in range(self.pop.N):
            s = sig[a * n:(a + 1) * n]
            W[a * n:(a + 1) * n, a * n:(a + 1) * n] = np.outer(s, s)
        return self.h * W

    def team_policy(self, team: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked decentralized law of ``team`` at step k: ``u = L X + d``."""
        return team_policy(self.gains, self.pop, team, self.time(k))


def _agent_slice(pop: PopulationSpec, team: int, idx: int, n: int) -> slice:
    a = idx if team == 1 else pop.N1 + idx
    return slice(a * n, (a + 1) * n)


def team_policy(gains: StrategyGains, pop: PopulationSpec, team: int, t: float):
    """Matrices ``(L, d)`` with the team's stacked controls ``u = L X + d`` at time t."""
    n, m = gains.n, gains.m
    Gx, g = gains.linear_policy(t)
    size = pop.N1 if team == 1 else pop.N2
    D = pop.N * n
    L = np.zeros((size * m, D))
    d = np.zeros(size * m)
    rows = slice(0, m) if team == 1 else slice(m, 2 * m)
    for idx in range(size):
        if team == 1:
            own, other = _agent_slice(pop, 1, idx, n), _agent_slice(pop, 2, idx % pop.N2, n)
            first, second = own, other
        else:
            own, other = _agent_slice(pop, 2, idx, n), _agent_slice(pop, 1, idx % pop.N1, n)
            first, second = other, own
        ur = slice(idx * m, (idx + 1) * m)
        L[ur, first] += Gx[rows, :n]
        L[ur, second] += Gx[rows, n:]
        d[ur] = g[rows]
    return L, d


def build_stacked(spec: ProblemSpec, gains: StrategyGains, pop: PopulationSpec, own: int = 1,
                  steps: int | None = None) -> StackedLQ:
    """Assemble the stacked best-response problem for team ``own``.

    Raises
    ------
    ValueError
        If ``N n`` exceeds ``MAX_STACKED_DIM``.
    """
    if own not in (1, 2):
        raise ValueError("own must be 1 or 2")
    n, m, N = spec.n, spec.m, pop.N
    D = N * n
    if D > MAX_STACKED_DIM:
        raise ValueError(f"stacked dimension {D} exceeds the oracle limit {MAX_STACKED_DIM}")
    steps = gains.ric.M if steps is None else int(steps)
    A = np.zeros((D, D))
    B1 = np.zeros((D, pop.N1 * m))
    B2 = np.zeros((D, pop.N2 * m))
    Q = np.zeros((D, D))
    w_other = spec.alpha if own == 1 else spec.beta
    avg = np.kron(np.ones((1, N)), np.eye(n)) / N
    for team, size, Bmat in ((1, pop.N1, B1), (2, pop.N2, B2)):
        p = spec.team(team)
        wt = 1.0 if team == own else w_other
        for idx in range(size):
            sl = _agent_slice(pop, team, idx, n)
            A[sl, sl] += p["A"]
            A[sl] += p["F"] @ avg
            Bmat[sl, idx * m:(idx + 1) * m] = p["B"]
            E = -p["Gamma"] @ avg
            E[:, sl] += np.eye(n)
            Q += wt * E.T @ p["Q"] @ E
    Q = 0.5 * (Q + Q.T)
    R1 = np.kron(np.eye(pop.N1), spec.R1)
    R2 = np.kron(np.eye(pop.N2), spec.R2)
    mu0 = np.concatenate([np.tile(spec.init1.mean, pop.N1), np.tile(spec.init2.mean, pop.N2)])
    Sigma0 = np.zeros((D, D))
    for a in range(N):
        cov = spec.init1.cov if a < pop.N1 else spec.init2.cov
        Sigma0[a * n:(a + 1) * n, a * n:(a + 1) * n] = cov
    Bown, Bother = (B1, B2) if own == 1 else (B2, B1)
    Rown, Rother = (R1, R2) if own == 1 else (R2, R1)
    return StackedLQ(spec, gains, pop, own, steps, A, Bown, Bother, Q, Rown, Rother,
                     float(w_other), mu0, Sigma0)


def _recursion(lq: StackedLQ, optimize: bool, mu0=None, Sigma0=None) -> float:
    h, D = lq.h, lq.dim
    other = 2 if lq.own == 1 else 1
    I = np.eye(D)
    S = lq.weight(lq.steps) * lq.Qstate
    s = np.zeros(D)
    r = 0.0
    for k in range(lq.steps - 1, -1, -1):
        Lo, do = lq.team_policy(other, k)
        Phi = I + h * (lq.Abig + lq.Bother @ Lo)
        e = h * lq.Bother @ do
        Qk = lq.weight(k) * lq.Qstate + lq.w_other * h * Lo.T @ lq.Rother @ Lo
        qk = lq.w_other * h * Lo.T @ lq.Rother @ do
        ck = lq.w_other * h * do @ lq.Rother @ do
        B = h * lq.Bown
        if not optimize:
            Lw, dw = lq.team_policy(lq.own, k)
            Phi = Phi + B @ Lw
            e = e + B @ dw
            Qk = Qk + h * Lw.T @ lq.Rown @ Lw
            qk = qk + h * Lw.T @ lq.Rown @ dw
            ck = ck + h * dw @ lq.Rown @ dw
        W = lq.noise_cov(k)
        v = S @ e + s
        S_new = Qk + Phi.T @ S @ Phi
        s_new = qk + Phi.T @ v
        r_new = ck + e @ S @ e + 2 * s @ e + r + np.sum(S * W)
        if optimize:
            H = h * lq.Rown + B.T @ S @ B
            H = 0.5 * (H + H.T)
            try:
                C = np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                raise NumericalError(f"best-response Hessian not positive definite at step {k}")
            Y = np.linalg.solve(C, B.T @ np.column_stack([S @ Phi, v]))
            YS, Yv = Y[:, :-1], Y[:, -1]
            S_new -= YS.T @ YS
            s_new -= YS.T @ Yv
            r_new -= Yv @ Yv
        S, s, r = 0.5 * (S_new + S_new.T), s_new, r_new
        if not np.all(np.isfinite(S)) or np.abs(S).max() > 1e12:
            raise NumericalError(f"value recursion blew up at step {k}")
    mu = lq.mu0 if mu0 is None else mu0
    Sig = lq.Sigma0 if Sigma0 is None else Sigma0
    return 0.5 * float(mu @ S @ mu + np.sum(S * Sig) + 2 * s @ mu + r)


def best_response_value(lq: StackedLQ, mu0=None, Sigma0=None) -> float:
    """Exact optimal expected mixed cost of the free team (full-information feedback)."""
    return _recursion(lq, True, mu0, Sigma0)


def policy_value(lq: StackedLQ, mu0=None, Sigma0=None) -> float:
    """Exact expected mixed cost when the free team also plays its decentralized law."""
    return _recursion(lq, False, mu0, Sigma0)


def optimal_feedback(lq: StackedLQ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-step optimal affine feedback ``u_k = Kx_k X + kc_k`` of the free team."""
    h, D = lq.h, lq.dim
    other = 2 if lq.own == 1 else 1
    I = np.eye(D)
    S = lq.weight(lq.steps) * lq.Qstate
    s = np.zeros(D)
    out = [None] * lq.steps
    for k in range(lq.steps - 1, -1, -1):
        Lo, do = lq.team_policy(other, k)
        Phi = I + h * (lq.Abig + lq.Bother @ Lo)
        e = h * lq.Bother @ do
        Qk = lq.weight(k) * lq.Qstate + lq.w_other * h * Lo.T @ lq.Rother @ Lo
        qk = lq.w_other * h * Lo.T @ lq.Rother @ do
        B = h * lq.Bown
        v = S @ e + s
        H = h * lq.Rown + B.T @ S @ B
        Kx = -np.linalg.solve(H, B.T @ S @ Phi)
        kc = -np.linalg.solve(H, B.T @ v)
        out[k] = (Kx, kc)
        S_new = Qk + Phi.T @ S @ Phi + Phi.T @ S @ B @ Kx
        s_new = qk + Phi.T @ v + Phi.T @ S @ B @ kc
        S, s = 0.5 * (S_new + S_new.T), s_new
    return out


@dataclass(frozen=True)
class GapRow:
    N: int
    N1: int
    N2: int
    eps_N: float
    J_dec: tuple[float, float]
    J_opt: tuple[float, float]

    @property
    def gap(self) -> tuple[float, float]:
        return ((self.J_dec[0] - self.J_opt[0]) / self.N1, (self.J_dec[1] - self.J_opt[1]) / self.N2)

    @property
    def per_capita_cost(self) -> tuple[float, float]:
        return self.J_dec[0] / self.N, self.J_dec[1] / self.N


def gap_at(spec: ProblemSpec, gains: StrategyGains, pop: PopulationSpec, steps: int | None = None) -> GapRow:
    """Decentralized vs optimal mixed cost for both teams at one population."""
    J_dec, J_opt = [], []
    for own in (1, 2):
        lq = build_stacked(spec, gains, pop, own, steps)
        J_dec.append(policy_value(lq))
        J_opt.append(best_response_value(lq))
    return GapRow(pop.N, pop.N1, pop.N2, pop.epsN, tuple(J_dec), tuple(J_opt))


def optimality_gap_study(spec: ProblemSpec, gains: StrategyGains, N_list, steps: int | None = None) -> dict:
    """Per-capita gaps over ``N_list`` (team sizes ``round(pi1 N)``) with fitted log-log slopes."""
    rows = [gap_at(spec, gains, PopulationSpec.from_total(N, spec), steps) for N in N_list]
    out = {"rows": rows}
    for t in (0, 1):
        g = np.array([r.gap[t] for r in rows])
        N1 = [r.N1 if t == 0 else r.N2 for r in rows]
        out[f"slope{t + 1}"] = loglog_slope(N1, g)
    return out


def epsilon_sweep(spec: ProblemSpec, gains: StrategyGains, N: int, N1_list, steps: int | None = None) -> list[GapRow]:
    """Fixed N, varying team split (hence ``eps_N``)."""
    return [gap_at(spec, gains, PopulationSpec(N1, N - N1, spec.pi1, spec.pi2), steps) for N1 in N1_list]


def deterministic(spec: ProblemSpec) -> ProblemSpec:
    """Same spec with zero noise and point-mass initial laws at the means."""
    n = spec.n
    return spec.replace(sigma1=np.zeros_like(spec.sigma1), sigma2=np.zeros_like(spec.sigma2),
                        init1=InitLaw(spec.init1.mean, np.zeros((n, n))),
                        init2=InitLaw(spec.init2.mean, np.zeros((n, n))))


def optimal_open_loop(lq: StackedLQ) -> np.ndarray:
    """Roll out the optimal feedback from ``mu0`` without noise; returns controls (steps, N1, m)."""
    h = lq.h
    other = 2 if lq.own == 1 else 1
    X = lq.mu0.copy()
    m = lq.spec.m
    out = np.empty((lq.steps, lq.Bown.shape[1] // m, m))
    for k, (Kx, kc) in enumerate(optimal_feedback(lq)):
        u = Kx @ X + kc
        Lo, do = lq.team_policy(other, k)
        X = X + h * (lq.Abig @ X + lq.Bother @ (Lo @ X + do) + lq.Bown @ u)
        out[k] = u.reshape(-1, m)
    return out


def quadratic_checks(spec: ProblemSpec, gains: StrategyGains, pop: PopulationSpec,
                     n_dirs: int = 10, seed: int = 0) -> dict:
    """Probe ``u1 -> J_mix^(1)(u1, u2_dec)`` by deterministic simulation around the oracle optimum.

    Along random directions ``d`` with ``|d| = |u*|`` returns the relative third
    differences, the relative central directional derivatives at ``u*`` and
    the second differences (curvatures).
    """
    from .sim import SimulationConfig, simulate

    det = deterministic(spec)
    lq = build_stacked(det, gains, pop, 1)
    ustar = optimal_open_loop(lq)
    cfg = SimulationConfig(pop, 1, seed)

    def J(u):
        return float(simulate(det, gains, cfg, control_table=u).J_mix(1)[0])

    J0 = J(ustar)
    scale = np.linalg.norm(ustar) or 1.0
    rng = np.random.default_rng(seed)
    third, deriv, curv = [], [], []
    for _ in range(n_dirs):
        d = rng.standard_normal(ustar.shape)
        d *= scale / np.linalg.norm(d)
        Jp, Jm, J2, J3 = J(ustar + d), J(ustar - d), J(ustar + 2 * d), J(ustar + 3 * d)
        third.append(abs(J3 - 3 * J2 + 3 * Jp - J0) / abs(J0))
        deriv.append(abs(0.5 * (Jp - Jm)) / abs(J0))
        curv.append(Jp - 2 * J0 + Jm)
    return {"J_star": J0, "oracle_value": best_response_value(lq), "third_rel": third,
            "stationarity_rel": deriv, "curvature": curv}
