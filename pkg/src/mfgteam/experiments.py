"""Preset scenarios, pipeline stages and manifest-driven experiment runs.

Every CSV written here starts with ``# manifest_sha256=...`` and ``# seed=...``
lines and contains no timestamps, so re-running a manifest reproduces the
files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import oracle, riccati, sim, strategy
from .ccmat import CCMatrices, assemble
from .errors import NearSingularFactor
from .fit import kendall_tau
from .model import InitLaw, PopulationSpec, ProblemSpec, make_spec, validate

KINDS = ("solve", "simulate", "converge-mf", "converge-gap", "case")
CASES = {"coop": (1.0, 1.0), "zerosum": (-1.0, -1.0), "onesided-coop": (1.0, 0.0), "onesided-comp": (-1.0, 0.0)}
MF_N_LIST = (25, 50, 100, 200, 400)
GAP_N_LIST = (4, 8, 16, 32)
DEFAULT_PATHS = 400

# Declared tolerances for --check mode.
TOL = {
    "agree_rel": 1e-5, "residual_rel": 1e-4, "tanh": 1e-6,
    "mf_slope": (-1.15, -0.85), "mf_level_se": 3.0,
    "gap_slope": -0.35, "gap_tau": -0.5, "gap_floor": -1e-9,
    "homogeneity": 1e-6, "identity_rel": 1e-12,
}


# -- presets -------------------------------------------------------------


def scalar_spec(**kw) -> ProblemSpec:
    """Decoupled scalar LQ problem: A=0, B=Q=R=1, F=Gamma=0, T=1, unit initial state."""
    base = dict(n=1, init1=[1.0], init2=[1.0])
    base.update(kw)
    return make_spec(**base)


def pure_noise_spec(**kw) -> ProblemSpec:
    """Uncontrolled Brownian agents with Gaussian initial laws; coupling error is explicit."""
    base = dict(n=1, B1=0.0, B2=0.0, sigma1=0.7, sigma2=0.7, pi1=0.6, pi2=0.4,
                init1=InitLaw([0.3], [[0.5]]), init2=InitLaw([0.0], [[0.5]]))
    base.update(kw)
    return make_spec(**base)


def team_spec(alpha: float = 1.0, beta: float = 1.0, **kw) -> ProblemSpec:
    """Identical coefficients in both teams with every coupling switched on."""
    base = dict(n=1, A1=0.2, A2=0.2, F1=0.5, F2=0.5, Gamma1=0.5, Gamma2=0.5, sigma1=0.3, sigma2=0.3,
                alpha=alpha, beta=beta, init1=InitLaw([1.0], [[0.1]]), init2=InitLaw([0.5], [[0.1]]))
    base.update(kw)
    return make_spec(**base)


PRESETS = {"scalar": scalar_spec, "pure-noise": pure_noise_spec, "coupled": team_spec}


def case_spec(name: str, **overrides) -> ProblemSpec:
    if name not in CASES:
        raise KeyError(f"unknown case {name!r}; expected one of {sorted(CASES)}")
    a, b = CASES[name]
    return team_spec(alpha=a, beta=b, **overrides)


def is_scalar_reference(spec: ProblemSpec) -> bool:
    """True for the decoupled scalar spec with a closed-form tanh solution."""
    one = np.ones((1, 1))
    return (spec.n == 1 and spec.m == 1 and all(np.allclose(getattr(spec, f), 0.0)
            for f in ("A1", "A2", "F1", "F2", "Gamma1", "Gamma2"))
            and all(np.allclose(getattr(spec, f), one) for f in ("B1", "B2", "Q1", "Q2", "R1", "R2")))


def is_pure_noise(spec: ProblemSpec) -> bool:
    return all(np.allclose(getattr(spec, f), 0.0) for f in ("A1", "A2", "B1", "B2", "F1", "F2"))


# -- pipeline ------------------------------------------------------------


@dataclass(frozen=True)
class Pipeline:
    spec: ProblemSpec
    cc: CCMatrices
    ric: riccati.RiccatiSolution
    gains: strategy.StrategyGains


def build(spec: ProblemSpec, M: int = riccati.DEFAULT_M, variant: str = "printed",
          method: str = "auto") -> Pipeline:
    """Assemble, solve the Riccati pair and propagate the mean field."""
    cc = assemble(spec, variant)
    ric = riccati.solve(cc, spec.T, M, method)
    return Pipeline(spec, cc, ric, strategy.build_gains(cc, ric, spec))


def solve_report(p: Pipeline) -> dict:
    """Cross-method agreement, residuals and (when applicable) the tanh reference check."""
    cc, M, T = p.cc, p.ric.M, p.spec.T
    other = riccati.solve_integrated(cc, T, M) if p.ric.method == "closed_form" else None
    res = riccati.residual(cc, p.ric)
    scale_c = 1.0 + cc.coefficient_norm()
    rep = {"method": p.ric.method, "residual_P": res[0], "residual_K": res[1],
           "residual_tol": TOL["residual_rel"] * scale_c,
           "max_condition": float(np.nanmax(p.ric.condition_log)) if p.ric.method == "closed_form" else None}
    if other is not None:
        dP, dK = riccati.max_difference(p.ric, other)
        rep["agreement_P"], rep["agreement_K"] = dP, dK
        rep["agreement_tol"] = TOL["agree_rel"] * (1.0 + float(np.abs(p.ric.P).max()))
        r2 = riccati.residual(cc, other)
        rep["residual_P_integrated"], rep["residual_K_integrated"] = r2
    if is_scalar_reference(p.spec):
        rep["tanh_error"] = float(np.abs(p.ric.P[:, 0, 0] - np.tanh(T - p.ric.grid)).max())
    fb = strategy.fbsde_residual(cc, p.ric, p.gains.mf)
    rep["fbsde_interior"], rep["fbsde_terminal"] = fb["interior"], fb["terminal_y"]
    rep["homogeneity"] = strategy.homogeneity_deviation(p.ric, p.gains.mf, p.spec.n)
    return rep


def check_solve(rep: dict) -> dict:
    out = {"residual": max(rep["residual_P"], rep["residual_K"]) <= rep["residual_tol"]}
    if "agreement_P" in rep:
        out["agreement"] = max(rep["agreement_P"], rep["agreement_K"]) <= rep["agreement_tol"]
    if "tanh_error" in rep:
        out["tanh"] = rep["tanh_error"] <= TOL["tanh"]
    return out


def simulate_report(p: Pipeline, N: int, n_paths: int, seed: int) -> dict:
    pop = PopulationSpec.from_total(N, p.spec)
    res = sim.simulate(p.spec, p.gains, sim.SimulationConfig(pop, n_paths, seed))
    (j1, s1), (j2, s2) = res.per_capita(1), res.per_capita(2)
    e1, es1, _ = res.coupling_error(1)
    e2, es2, _ = res.coupling_error(2)
    return {"N": pop.N, "N1": pop.N1, "N2": pop.N2, "eps_N": pop.epsN,
            "Jmix1_per_N1": j1, "se1": s1, "Jmix2_per_N2": j2, "se2": s2,
            "coupling1": e1, "coupling1_se": es1, "coupling2": e2, "coupling2_se": es2,
            "identity_error": identity_errors(res)}


def identity_errors(res: sim.SimulationResult) -> dict:
    """Relative errors of the algebraic cost identities on simulated per-path costs."""
    a, b = res.alpha, res.beta
    s1, s2 = res.social(1), res.social(2)
    scale = float(np.abs(s1).max() + np.abs(s2).max()) or 1.0
    out = {
        "sum": float(np.abs(res.J_mix(1) + res.J_mix(2) - (1 + b) * s1 - (1 + a) * s2).max()) / scale,
        "decomposition": float(np.abs(res.team_costs - np.column_stack([s1, s2])).max()) / scale,
    }
    if a == -1.0 and b == -1.0:
        out["zero_sum"] = float(np.abs(res.J_mix(1) + res.J_mix(2)).max()) / scale
    if b == 0.0:
        out["team2_social"] = float(np.abs(res.J_mix(2) - s2).max()) / scale
    if a == 0.0:
        out["team1_social"] = float(np.abs(res.J_mix(1) - s1).max()) / scale
    return out


def mf_study(p: Pipeline, N_list, n_paths: int, seed: int) -> dict:
    st = sim.coupling_error_study(p.spec, p.gains, N_list, n_paths, seed)
    if is_pure_noise(p.spec):
        T = p.spec.T
        for r in st["rows"]:
            for t, law, sig in ((1, p.spec.init1, p.spec.sigma1), (2, p.spec.init2, p.spec.sigma2)):
                # sup_t is attained at T: tr Var(xi) + int_0^T |sigma|^2, averaged over N_t agents.
                pieces = sig.shape[0]
                exact = (np.trace(law.cov) + float(np.sum(sig ** 2)) * T / pieces) / r[f"N{t}"]
                r[f"exact{t}"] = exact
                r[f"z{t}"] = (r[f"err{t}"] - exact) / r[f"se{t}"]
    return st


def check_mf(st: dict) -> dict:
    lo, hi = TOL["mf_slope"]
    out = {f"slope{t}": lo <= st[f"slope{t}"][0] <= hi for t in (1, 2)}
    if "z1" in st["rows"][0]:
        out["level"] = all(abs(r[f"z{t}"]) <= TOL["mf_level_se"] for r in st["rows"] for t in (1, 2))
    return out


def gap_study(p: Pipeline, N_list) -> dict:
    st = oracle.optimality_gap_study(p.spec, p.gains, N_list)
    rows = st["rows"]
    Ns = [r.N for r in rows]
    st["tau1"] = kendall_tau(Ns, [r.gap[0] for r in rows])
    st["tau2"] = kendall_tau(Ns, [r.gap[1] for r in rows])
    st["tau_cost"] = kendall_tau(Ns, [r.per_capita_cost[0] for r in rows])
    return st


def check_gap(st: dict) -> dict:
    rows = st["rows"]
    return {
        "nonnegative": all(min(r.gap) >= TOL["gap_floor"] for r in rows),
        "monotone": st["tau1"] <= TOL["gap_tau"] and st["tau2"] <= TOL["gap_tau"],
        "slope": st["slope1"][0] <= TOL["gap_slope"] and st["slope2"][0] <= TOL["gap_slope"],
    }


def gap_rows(st: dict) -> list[dict]:
    return [{"N": r.N, "N1": r.N1, "N2": r.N2, "eps_N": r.eps_N,
             "Jdec1": r.J_dec[0], "Jopt1": r.J_opt[0], "gap1": r.gap[0],
             "Jdec2": r.J_dec[1], "Jopt2": r.J_opt[1], "gap2": r.gap[1],
             "Jmix1_per_N": r.per_capita_cost[0]} for r in st["rows"]]


# -- manifests -------------------------------------------------------------


@dataclass
class ExperimentManifest:
    kind: str
    spec: str | None = None
    preset: str | None = None
    case: str | None = None
    n_list: list[int] | None = None
    n_paths: int = DEFAULT_PATHS
    seed: int = 0
    out: str = "out"
    grid: int = riccati.DEFAULT_M
    variant: str = "printed"
    check: bool = False
    overrides: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        if self.kind not in KINDS:
            out.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "case" and self.case not in CASES:
            out.append(f"case must be one of {sorted(CASES)}, got {self.case!r}")
        if self.preset is not None and self.preset not in PRESETS:
            out.append(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        for name in ("n_paths", "grid"):
            if int(getattr(self, name)) < 1:
                out.append(f"{name} must be positive")
        if self.n_list is not None and (not self.n_list or min(self.n_list) < 2):
            out.append("n_list entries must be >= 2")
        if not 0 <= int(self.seed) < 2 ** 64:
            out.append("seed must be an unsigned 64-bit integer")
        return out

    @classmethod
    def load(cls, path) -> ExperimentManifest:
        doc = json.loads(Path(path).read_text())
        return cls(**doc)

    def load_spec(self) -> ProblemSpec:
        if self.spec is not None:
            base = ProblemSpec.load(self.spec)
            return base.replace(**self.overrides) if self.overrides else base
        if self.kind == "case":
            return case_spec(self.case, **self.overrides)
        return PRESETS[self.preset or "scalar"](**self.overrides)

    def digest(self, spec: ProblemSpec) -> str:
        doc = asdict(self)
        doc.pop("out")
        doc["spec_document"] = spec.to_json()
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


class ValidationFailure(Exception):
    def __init__(self, problems):
        super().__init__("; ".join(str(p) for p in problems))
        self.problems = [str(p) for p in problems]


class CheckFailure(Exception):
    def __init__(self, failed):
        super().__init__("tolerance check failed: " + ", ".join(failed))
        self.failed = failed


def _gap_list(man: ExperimentManifest):
    return tuple(man.n_list) if man.n_list else GAP_N_LIST


def run_case(name: str, overrides: dict | None = None, out=None, seed: int = 0,
             n_paths: int = DEFAULT_PATHS, grid: int = riccati.DEFAULT_M, n_list=None,
             variant: str = "printed") -> dict:
    """Solve, simulate and gap-study a named (alpha, beta) preset; write outputs if ``out`` is given."""
    man = ExperimentManifest("case", case=name, n_list=list(n_list) if n_list else None, n_paths=n_paths,
                             seed=seed, out=str(out or "."), grid=grid, variant=variant,
                             overrides=overrides or {})
    return run_manifest(man, write=out is not None)


def _case_diagnostics(man: ExperimentManifest, p: Pipeline, rep_sim: dict, rep_solve: dict) -> dict:
    ident = rep_sim["identity_error"]
    diag = {"homogeneity": rep_solve["homogeneity"], "sum_identity": ident["sum"]}
    checks = {"sum_identity": ident["sum"] <= TOL["identity_rel"]}
    if man.case == "coop":
        checks["homogeneity"] = rep_solve["homogeneity"] <= TOL["homogeneity"]
    if "zero_sum" in ident:
        diag["zero_sum"] = ident["zero_sum"]
        checks["zero_sum"] = ident["zero_sum"] <= TOL["identity_rel"]
    if "team2_social" in ident:
        diag["team2_social"] = ident["team2_social"]
        checks["team2_social"] = ident["team2_social"] <= TOL["identity_rel"]
    return {"values": diag, "checks": checks}


def run_manifest(man: ExperimentManifest, write: bool = True) -> dict:
    """Execute a manifest; returns the summary document (also written to ``out``).

    Raises
    ------
    ValidationFailure
        Bad manifest or a spec violating the standing assumptions.
    NumericalError
        Blow-up, singular factor or non-finite state.
    CheckFailure
        Only when ``man.check`` is set and a declared tolerance is missed.
    """
    problems = man.problems()
    if problems:
        raise ValidationFailure(problems)
    spec = man.load_spec()
    violations = validate(spec)
    if violations:
        raise ValidationFailure(violations)
    digest = man.digest(spec)
    header = {"manifest_sha256": digest, "seed": man.seed}
    outdir = Path(man.out)
    if write:
        outdir.mkdir(parents=True, exist_ok=True)

    p = build(spec, man.grid, man.variant)
    summary = {"kind": man.kind, "manifest_sha256": digest, "seed": man.seed, "grid": man.grid,
               "variant": man.variant, "riccati_method": p.ric.method, "checks": {}}
    rep = solve_report(p)
    summary["solve"] = rep
    summary["checks"].update({f"solve.{k}": v for k, v in check_solve(rep).items()})
    if write:
        p.ric.export(outdir / "riccati.json", outdir / "riccati.csv", header)
        p.gains.mf.to_csv(outdir / "meanfield.csv", header)
        spec.save(outdir / "spec.json")

    if man.kind in ("simulate", "case"):
        N = max(man.n_list) if man.n_list else (max(GAP_N_LIST) if man.kind == "case" else MF_N_LIST[0])
        srep = simulate_report(p, N, man.n_paths, man.seed)
        summary["simulate"] = srep
        if write:
            flat = {k: v for k, v in srep.items() if k != "identity_error"}
            flat.update({f"identity_{k}": v for k, v in srep["identity_error"].items()})
            sim.write_rows_csv(outdir / "simulate.csv", [flat], header)

    if man.kind == "converge-mf":
        st = mf_study(p, man.n_list or MF_N_LIST, man.n_paths, man.seed)
        summary["converge_mf"] = {"rows": st["rows"], "slope1": st["slope1"], "slope2": st["slope2"]}
        summary["checks"].update({f"mf.{k}": v for k, v in check_mf(st).items()})
        if write:
            sim.write_rows_csv(outdir / "converge_mf.csv", st["rows"], header)

    if man.kind in ("converge-gap", "case"):
        st = gap_study(p, _gap_list(man))
        summary["converge_gap"] = {"rows": gap_rows(st), "slope1": st["slope1"], "slope2": st["slope2"],
                                   "tau1": st["tau1"], "tau2": st["tau2"], "tau_cost": st["tau_cost"]}
        if man.kind == "converge-gap" or man.case == "coop":
            summary["checks"].update({f"gap.{k}": v for k, v in check_gap(st).items()})
        if write:
            sim.write_rows_csv(outdir / "converge_gap.csv", gap_rows(st), header)

    if man.kind == "case":
        d = _case_diagnostics(man, p, summary["simulate"], rep)
        summary["case"] = {"name": man.case, "alpha": spec.alpha, "beta": spec.beta, **d["values"]}
        summary["checks"].update({f"case.{k}": v for k, v in d["checks"].items()})

    summary["checks"] = {k: bool(v) for k, v in summary["checks"].items()}
    summary["passed"] = all(summary["checks"].values())
    if write:
        sim.write_json(outdir / "summary.json", summary)
        (outdir / "summary.txt").write_text(format_summary(summary))
    if man.check and not summary["passed"]:
        raise CheckFailure([k for k, v in summary["checks"].items() if not v])
    return summary


def format_summary(summary: dict) -> str:
    lines = [f"kind: {summary['kind']}", f"manifest_sha256: {summary['manifest_sha256']}",
             f"seed: {summary['seed']}", f"grid: {summary['grid']}  variant: {summary['variant']}"
             f"  riccati: {summary['riccati_method']}"]
    s = summary["solve"]
    lines.append(f"residual P/K: {s['residual_P']:.3e} / {s['residual_K']:.3e} (tol {s['residual_tol']:.1e})")
    if "agreement_P" in s:
        lines.append(f"closed form vs RK4: {max(s['agreement_P'], s['agreement_K']):.3e} (tol {s['agreement_tol']:.1e})")
    if "tanh_error" in s:
        lines.append(f"tanh reference error: {s['tanh_error']:.3e}")
    for key in ("converge_mf", "converge_gap"):
        if key in summary:
            st = summary[key]
            lines.append(f"{key} slopes: team1 {st['slope1'][0]:.3f} (se {st['slope1'][1]:.3f}), "
                         f"team2 {st['slope2'][0]:.3f} (se {st['slope2'][1]:.3f})")
    if "case" in summary:
        lines.append("case: " + ", ".join(f"{k}={v}" for k, v in summary["case"].items()))
    for k, v in summary["checks"].items():
        lines.append(f"[{'PASS' if v else 'FAIL'}] {k}")
    return "\n".join(lines) + "\n"
