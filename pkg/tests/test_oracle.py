import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfgteam import experiments as ex
from mfgteam import oracle as O
from mfgteam.model import InitLaw, PopulationSpec, make_spec
from mfgteam.sim import SimulationConfig, simulate

from conftest import random_spec


def stacked(pipe, N1, N2, own=1, steps=None):
    pop = PopulationSpec(N1, N2, pipe.spec.pi1, pipe.spec.pi2)
    return O.build_stacked(pipe.spec, pipe.gains, pop, own, steps)


def test_state_weight_structure(coupled_pipe):
    lq = stacked(coupled_pipe, 3, 2)
    assert np.array_equal(lq.Qstate, lq.Qstate.T)
    assert np.all(np.linalg.eigvalsh(lq.Qstate) >= -1e-12)
    # No tracking coupling and no weight on the other team: only the own agents' diagonal blocks remain.
    spec = make_spec(n=2, Q1=np.diag([1.0, 2.0]), Q2=np.eye(2))
    pipe = ex.build(spec, M=20)
    lq = stacked(pipe, 2, 3)
    Q = np.zeros((10, 10))
    Q[:4, :4] = np.kron(np.eye(2), np.diag([1.0, 2.0]))
    assert np.array_equal(lq.Qstate, Q)


def test_dimension_guard(coupled_pipe):
    with pytest.raises(ValueError):
        stacked(coupled_pipe, 300, 300)
    with pytest.raises(ValueError):
        stacked(coupled_pipe, 2, 2, own=3)


def test_zero_state_has_zero_value():
    pipe = ex.build(ex.scalar_spec(init1=[0.0], init2=[0.0]), M=50)
    lq = stacked(pipe, 2, 2)
    assert O.best_response_value(lq) == 0.0
    assert O.policy_value(lq) == 0.0


def test_scalar_reference_value():
    # Decoupled scalar agents: both values converge to 1/2 tanh(1) per agent at first order in h.
    errs = []
    for M in (200, 400):
        pipe = ex.build(ex.scalar_spec(), M=M)
        lq = stacked(pipe, 1, 1)
        errs.append(abs(O.best_response_value(lq) - 0.5 * np.tanh(1.0)))
        assert O.policy_value(lq) >= O.best_response_value(lq) - 1e-15
    assert errs[1] < 2e-3 and errs[1] < 0.6 * errs[0]


def test_decoupled_gap_vanishes():
    # Without cross-agent coupling the decentralized law is the optimal full-information law.
    spec = ex.team_spec(alpha=0.0, beta=0.0, F1=0.0, F2=0.0, Gamma1=0.0, Gamma2=0.0)
    pipe = ex.build(spec, M=400)
    row = O.gap_at(spec, pipe.gains, PopulationSpec(3, 2))
    assert max(abs(g) for g in row.gap) <= 1e-6


@pytest.mark.parametrize("variant,F", [("derived", 0.5), ("printed", 0.0)])
def test_team_swap_symmetry(variant, F):
    # Identical teams and laws; the printed blocks break the swap symmetry once F is switched on.
    law = InitLaw([0.4], [[0.2]])
    spec = ex.team_spec(init1=law, init2=law, F1=F, F2=F)
    pipe = ex.build(spec, M=100, variant=variant)
    row = O.gap_at(spec, pipe.gains, PopulationSpec(3, 3))
    assert row.J_dec[0] == pytest.approx(row.J_dec[1], rel=1e-10)
    assert row.J_opt[0] == pytest.approx(row.J_opt[1], rel=1e-10)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_gap_nonnegative(seed, N1, N2):
    spec = random_spec(np.random.default_rng(seed))
    pipe = ex.build(spec, M=60)
    row = O.gap_at(spec, pipe.gains, PopulationSpec(N1, N2, spec.pi1, spec.pi2))
    scale = max(abs(v) for v in row.J_dec) + 1.0
    assert min(row.gap) >= -1e-10 * scale


def test_policy_value_matches_simulation(coupled_pipe):
    pop = PopulationSpec(3, 2)
    lq = O.build_stacked(coupled_pipe.spec, coupled_pipe.gains, pop, 1)
    exact = O.policy_value(lq)
    res = simulate(coupled_pipe.spec, coupled_pipe.gains, SimulationConfig(pop, 4000, 11))
    v = res.J_mix(1)
    se = v.std(ddof=1) / np.sqrt(v.size)
    assert abs(v.mean() - exact) <= 4 * se
    assert O.best_response_value(lq) <= v.mean() + 4 * se


def test_open_loop_rollout_attains_oracle_value(coupled_pipe):
    det = O.deterministic(coupled_pipe.spec)
    lq = O.build_stacked(det, coupled_pipe.gains, PopulationSpec(2, 2), 1)
    u = O.optimal_open_loop(lq)
    assert u.shape == (coupled_pipe.ric.M, 2, 1)
    J = simulate(det, coupled_pipe.gains, SimulationConfig(lq.pop, 1, 0), control_table=u).J_mix(1)[0]
    assert J == pytest.approx(O.best_response_value(lq), rel=1e-11)


def test_quadratic_checks(coupled_pipe):
    out = O.quadratic_checks(coupled_pipe.spec, coupled_pipe.gains, PopulationSpec(2, 2), n_dirs=4)
    assert max(out["third_rel"]) <= 1e-10
    assert max(out["stationarity_rel"]) <= 1e-10
    assert min(out["curvature"]) > 0
    assert out["J_star"] == pytest.approx(out["oracle_value"], rel=1e-11)


def test_study_and_sweep(coupled_pipe):
    st_ = O.optimality_gap_study(coupled_pipe.spec, coupled_pipe.gains, (4, 8))
    assert [r.N for r in st_["rows"]] == [4, 8]
    assert np.isnan(st_["slope1"][1])
    rows = O.epsilon_sweep(coupled_pipe.spec, coupled_pipe.gains, 6, (1, 3, 5))
    assert [r.eps_N for r in rows] == pytest.approx([1 / 3, 0.0, 1 / 3])
    assert rows[1].per_capita_cost[0] == pytest.approx(rows[1].J_dec[0] / 6)


def test_gap_grows_with_split_mismatch():
    # Fixed N = 16, team split moved away from pi = (1/2, 1/2).
    pipe = ex.build(ex.case_spec("coop"), M=200)
    rows = O.epsilon_sweep(pipe.spec, pipe.gains, 16, (8, 6, 4, 2))
    eps = [r.eps_N for r in rows]
    assert eps == sorted(eps) and eps[0] == 0.0
    for t in (0, 1):
        g = [r.gap[t] for r in rows]
        assert all(b > a for a, b in zip(g, g[1:]))
