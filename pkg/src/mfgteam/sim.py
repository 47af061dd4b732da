"""Euler-Maruyama simulation of the N-agent two-team system.

Agents drift with the realized average ``x^(N)`` while their controls use only
their own state, their partner's state and the offline mean field.  Every
(path, team, agent) owns a Philox substream keyed by ``(seed, path, team,
index)``; it first yields the n normals of the initial state and then the
scalar Brownian increments, so growing N never reshuffles existing agents.

Costs use the trapezoid rule in the state term and the left-point rule in the
control term (controls are piecewise constant over a step).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFinite
from .model import PopulationSpec, ProblemSpec
from .fit import loglog_slope
from .strategy import StrategyGains

_BATCH_BUDGET = 10_000_000  # normals generated per batch of paths (~80 MB)


@dataclass(frozen=True)
class SimulationConfig:
    pop: PopulationSpec
    n_paths: int = 400
    seed: int = 0
    substeps: int = 1
    store_every: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1 (dt_sim may not exceed the solver step)")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SimulationResult:
    """Monte-Carlo output.

    ``costs`` holds per-path per-agent costs (team 1 first); ``team_costs``
    the per-path social costs accumulated independently of ``costs``.
    Averages have shape ``(paths, steps + 1, n)``.
    """

    config: SimulationConfig
    alpha: float
    beta: float
    times: np.ndarray
    avg: np.ndarray
    avg1: np.ndarray
    avg2: np.ndarray
    costs: np.ndarray
    team_costs: np.ndarray
    coupling1: np.ndarray
    coupling2: np.ndarray
    states: np.ndarray | None = field(default=None, repr=False)

    @property
    def N1(self) -> int:
        return self.config.pop.N1

    @property
    def N2(self) -> int:
        return self.config.pop.N2

    def social(self, team: int) -> np.ndarray:
        """Per-path social cost of a team from the per-agent costs."""
        return self.costs[:, :self.N1].sum(1) if team == 1 else self.costs[:, self.N1:].sum(1)

    def J_mix(self, team: int) -> np.ndarray:
        s1, s2 = self.social(1), self.social(2)
        return s1 + self.alpha * s2 if team == 1 else s2 + self.beta * s1

    def per_capita(self, team: int) -> tuple[float, float]:
        """``E J_mix^(k) / N_k`` with its Monte-Carlo standard error."""
        v = self.J_mix(team) / (self.N1 if team == 1 else self.N2)
        se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else float("nan")
        return float(v.mean()), float(se)

    def coupling_error(self, team: int) -> tuple[float, float, float]:
        """``sup_t E|x^(N_k) - m_k|^2`` with the standard error and time of the maximizer."""
        sq = self.coupling1 if team == 1 else self.coupling2
        mean = sq.mean(axis=0)
        k = int(np.argmax(mean))
        se = sq[:, k].std(ddof=1) / np.sqrt(sq.shape[0]) if sq.shape[0] > 1 else float("nan")
        return float(mean[k]), float(se), float(self.times[k])

    def average_identity_error(self) -> float:
        pop = self.config.pop
        return float(np.abs(self.avg - pop.pi1N * self.avg1 - pop.pi2N * self.avg2).max())


def _streams(seed: int, path: int, team: int, size: int, order: np.ndarray | None):
    labels = range(size) if order is None else order
    for idx in labels:
        ss = np.random.SeedSequence(seed, spawn_key=(path, team, int(idx)))
        yield np.random.Generator(np.random.Philox(ss))


def _draw(spec: ProblemSpec, cfg: SimulationConfig, paths: range, steps: int, h: float, perms):
    """Initial states (B, N, n) and scaled scalar increments (B, steps, N)."""
    n, pop = spec.n, cfg.pop
    B = len(paths)
    x0 = np.empty((B, pop.N, n))
    dW = np.empty((B, steps, pop.N))
    sq = np.sqrt(h)
    for b, p in enumerate(paths):
        col = 0
        for team, size, law in ((1, pop.N1, spec.init1), (2, pop.N2, spec.init2)):
            root = law.root
            for g in _streams(cfg.seed, p, team, size, perms.get(team)):
                x0[b, col] = law.mean + root @ g.standard_normal(n)
                dW[b, :, col] = sq * g.standard_normal(steps)
                col += 1
    return x0, dW


def _partners(pop: PopulationSpec, perms: dict):
    """Position of each agent's partner given optional within-team relabelings."""
    p1 = np.arange(pop.N1) if perms.get(1) is None else np.asarray(perms[1])
    p2 = np.arange(pop.N2) if perms.get(2) is None else np.asarray(perms[2])
    inv1, inv2 = np.argsort(p1), np.argsort(p2)
    return inv2[p1 % pop.N2], inv1[p2 % pop.N1]


def simulate(spec: ProblemSpec, gains: StrategyGains, config: SimulationConfig,
             control_table: np.ndarray | None = None, permutation: dict | None = None) -> SimulationResult:
    """Simulate ``config.n_paths`` independent copies of the N-agent system.

    Parameters
    ----------
    control_table : array (steps, N1, m), optional
        Open-loop controls replacing team 1's decentralized law.
    permutation : dict, optional
        ``{team: perm}``; position ``a`` of that team is agent ``perm[a]``,
        carrying its noise stream and partner.

    Raises
    ------
    NonFinite
        At the first step where a state becomes non-finite.
    """
    pop, n, m = config.pop, spec.n, spec.m
    N1, N2, N = pop.N1, pop.N2, pop.N
    steps = gains.ric.M * config.substeps
    h = spec.T / steps
    times = np.linspace(0.0, spec.T, steps + 1)
    perms = permutation or {}
    part1, part2 = _partners(pop, perms)
    if control_table is not None:
        control_table = np.asarray(control_table, dtype=float)
        if control_table.shape != (steps, N1, m):
            raise ValueError(f"control table must have shape {(steps, N1, m)}")

    Gx_all, g_all = gains.linear_policy(times)
    m1 = gains.mf.at(times)[:, :n]
    m2 = gains.mf.at(times)[:, n:]
    sig1, sig2 = spec.sigma_at(1, times), spec.sigma_at(2, times)
    wts = np.full(steps + 1, h)
    wts[[0, -1]] = 0.5 * h
    t1, t2 = spec.team(1), spec.team(2)

    P = config.n_paths
    avg = np.empty((P, steps + 1, n))
    avg1 = np.empty_like(avg)
    avg2 = np.empty_like(avg)
    costs = np.zeros((P, N))
    team_costs = np.zeros((P, 2))
    c1 = np.empty((P, steps + 1))
    c2 = np.empty((P, steps + 1))
    keep = np.arange(0, steps + 1, config.store_every) if config.store_every else None
    states = np.empty((P, keep.size, N, n)) if keep is not None else None

    batch = max(1, min(P, _BATCH_BUDGET // max(1, steps * N)))
    for start in range(0, P, batch):
        paths = range(start, min(P, start + batch))
        bs = slice(paths.start, paths.stop)
        X, dW = _draw(spec, config, paths, steps, h, perms)
        J = np.zeros((len(paths), N))
        for k in range(steps + 1):
            x1, x2 = X[:, :N1], X[:, N1:]
            xN = X.mean(axis=1)
            a1, a2 = x1.mean(axis=1), x2.mean(axis=1)
            avg[bs, k], avg1[bs, k], avg2[bs, k] = xN, a1, a2
            c1[bs, k] = np.sum((a1 - m1[k]) ** 2, axis=-1)
            c2[bs, k] = np.sum((a2 - m2[k]) ** 2, axis=-1)
            if keep is not None and k % config.store_every == 0:
                states[bs, k // config.store_every] = X
            d1 = x1 - (xN @ t1["Gamma"].T)[:, None]
            d2 = x2 - (xN @ t2["Gamma"].T)[:, None]
            l1 = np.einsum("bia,ac,bic->bi", d1, t1["Q"], d1)
            l2 = np.einsum("bja,ac,bjc->bj", d2, t2["Q"], d2)
            J[:, :N1] += wts[k] * l1
            J[:, N1:] += wts[k] * l2
            team_costs[bs, 0] += wts[k] * l1.sum(1)
            team_costs[bs, 1] += wts[k] * l2.sum(1)
            if k == steps:
                break
            Gx, g = Gx_all[k], g_all[k]
            if control_table is None:
                pair1 = np.concatenate([x1, x2[:, part1]], axis=-1)
                u1 = pair1 @ Gx[:m].T + g[:m]
            else:
                u1 = np.broadcast_to(control_table[k], x1.shape[:2] + (m,))
            pair2 = np.concatenate([x1[:, part2], x2], axis=-1)
            u2 = pair2 @ Gx[m:].T + g[m:]
            r1 = np.einsum("bia,ac,bic->bi", u1, t1["R"], u1)
            r2 = np.einsum("bja,ac,bjc->bj", u2, t2["R"], u2)
            J[:, :N1] += h * r1
            J[:, N1:] += h * r2
            team_costs[bs, 0] += h * r1.sum(1)
            team_costs[bs, 1] += h * r2.sum(1)
            X[:, :N1] += h * (x1 @ t1["A"].T + u1 @ t1["B"].T + (xN @ t1["F"].T)[:, None]) \
                + dW[:, k, :N1, None] * sig1[k]
            X[:, N1:] += h * (x2 @ t2["A"].T + u2 @ t2["B"].T + (xN @ t2["F"].T)[:, None]) \
                + dW[:, k, N1:, None] * sig2[k]
            if not np.all(np.isfinite(X)):
                raise NonFinite("state", step=k + 1)
        costs[bs] = 0.5 * J
    team_costs *= 0.5
    return SimulationResult(config, spec.alpha, spec.beta, times, avg, avg1, avg2, costs, team_costs,
                            c1, c2, states)


def coupling_error_study(spec: ProblemSpec, gains: StrategyGains, N_list, n_paths: int = 400,
                         seed: int = 0, substeps: int = 1) -> dict:
    """Mean-field coupling errors over ``N_list`` with log-log slopes in ``N1`` and ``N2``."""
    rows = []
    for N in N_list:
        pop = PopulationSpec.from_total(int(N), spec)
        res = simulate(spec, gains, SimulationConfig(pop, n_paths, seed, substeps))
        e1, s1, _ = res.coupling_error(1)
        e2, s2, _ = res.coupling_error(2)
        rows.append({"N": pop.N, "N1": pop.N1, "N2": pop.N2, "eps_N": pop.epsN,
                     "err1": e1, "se1": s1, "err2": e2, "se2": s2})
    out = {"rows": rows}
    for t in (1, 2):
        errs = [r[f"err{t}"] for r in rows]
        out[f"slope{t}"] = loglog_slope([r[f"N{t}"] for r in rows], errs)
    return out


def write_rows_csv(path, rows: list[dict], header: dict | None = None) -> None:
    """CSV with ``# key=value`` header lines followed by one row per dict."""
    with open(path, "w", newline="") as fh:
        for key in sorted(header or {}):
            fh.write(f"# {key}={header[key]}\n")
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
