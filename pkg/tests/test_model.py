import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfgteam.model import (CoalitionKind, CoalitionMatrix, InitLaw, PopulationSpec, ProblemSpec,
                           classify, effective_costs, make_spec, validate)


def test_valid_spec_has_no_violations():
    assert validate(make_spec(n=2)) == []


def test_indefinite_q_reported_with_lambda_min():
    vs = validate(make_spec(n=2, Q1=np.diag([1.0, -1.0])))
    assert len(vs) == 1
    assert str(vs[0]) == "(H2): Q1 not positive definite, λ_min = -1"
    assert vs[0].field == "Q1" and vs[0].value == -1.0


def test_zero_fraction_reported():
    vs = validate(make_spec(pi1=0.0, pi2=1.0))
    assert any(str(v).startswith("(H4): min π_k must be > 0") for v in vs)


def test_validate_flags_bad_sum_horizon_and_covariance():
    spec = make_spec(pi1=0.5, pi2=0.6, T=-1.0, init1=InitLaw([0.0], [[-1.0]]))
    found = {v.assumption for v in validate(spec)}
    assert found == {"(H1)", "(H3)", "(H4)"}


def test_validate_is_pure():
    spec = make_spec(n=2, Q1=np.diag([1.0, -1.0]))
    before = spec.dumps()
    assert [str(v) for v in validate(spec)] == [str(v) for v in validate(spec)]
    assert spec.dumps() == before


def test_tiny_but_positive_eigenvalue_counts_as_singular():
    assert validate(make_spec(n=2, R1=np.diag([1.0, 1e-14])))


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    spec = make_spec(n=2, m=1, A1=rng.standard_normal((2, 2)), sigma1=[[0.1, 0.2], [0.3, 0.4]],
                     alpha=-0.5, init2=InitLaw([1.0, 2.0], np.eye(2)))
    spec.save(tmp_path / "s.json")
    back = ProblemSpec.load(tmp_path / "s.json")
    assert back.dumps() == spec.dumps()
    assert '"schema": "mfgt-spec/1"' in spec.dumps()


def test_schema_is_checked():
    doc = make_spec().to_json()
    doc["schema"] = "other/9"
    with pytest.raises(ValueError):
        ProblemSpec.from_json(doc)


def test_spec_is_read_only():
    spec = make_spec()
    with pytest.raises(ValueError):
        spec.A1[0, 0] = 1.0


def test_piecewise_sigma_lookup():
    spec = make_spec(sigma1=[[1.0], [2.0]], T=2.0)
    assert spec.sigma_at(1, 0.5)[0] == 1.0
    assert spec.sigma_at(1, 1.5)[0] == 2.0
    assert spec.sigma_at(1, 2.0)[0] == 2.0


def test_population_eps():
    pop = PopulationSpec(3, 2, 0.5, 0.5)
    assert pop.N == 5 and pop.pi1N == 0.6
    assert pop.epsN == pytest.approx(0.1, abs=1e-15)
    assert PopulationSpec.from_total(50, make_spec(pi1=0.6, pi2=0.4)).epsN == 0.0


def test_classify_extremes():
    assert classify(np.eye(5)).kind is CoalitionKind.MG
    assert classify(np.ones((5, 5))).kind is CoalitionKind.MT
    assert classify(CoalitionMatrix.identity(4)).kind is CoalitionKind.MG
    assert classify(CoalitionMatrix.ones(4)).kind is CoalitionKind.MT


def test_classify_two_team_regimes():
    c = classify(CoalitionMatrix.two_team(3, 2, -1.0, -1.0))
    assert c.kind is CoalitionKind.MIX_C4 and c.regime == "competitive" and c.sizes == (3, 2)
    assert classify(CoalitionMatrix.two_team(3, 2, 0.5, 2.0)).regime == "cooperative"
    assert classify(CoalitionMatrix.two_team(3, 2, 1.0, 0.0)).regime == "asymmetric"


def test_two_team_with_unit_weights_is_mt():
    assert classify(CoalitionMatrix.two_team(3, 2, 1.0, 1.0)).kind is CoalitionKind.MT


def test_classify_general():
    C = CoalitionMatrix((2, 1, 2), [[1, 0.3, 0.1], [0.2, 1, -1], [0.5, 0.5, 1]])
    assert classify(C).kind is CoalitionKind.GENERAL_C5


@pytest.mark.parametrize("C", [
    np.array([[1.0, 0.5], [0.5, 2.0]]),
    np.array([[1, 1, 0.2], [1, 1, 0.3], [0.2, 0.2, 1.0]]),
    np.zeros((0, 0)),
])
def test_classify_rejects_unstructured(C):
    with pytest.raises(ValueError):
        classify(C)


def test_effective_costs_examples():
    assert np.allclose(effective_costs(np.eye(3), [1, 2, 3]), [1, 2, 3])
    assert np.allclose(effective_costs(np.ones((3, 3)), [1, 2, 3]), [6, 6, 6])
    C = CoalitionMatrix.two_team(2, 1, -1.0, -1.0)
    assert np.allclose(effective_costs(C, [1, 2, 4]), [-1, -1, 1])
    with pytest.raises(ValueError):
        effective_costs(np.eye(3), [1, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 32 - 1))
def test_effective_costs_linear(n1, n2, alpha, beta, a, b, seed):
    rng = np.random.default_rng(seed)
    C = CoalitionMatrix.two_team(n1, n2, alpha, beta)
    J1, J2 = rng.standard_normal((2, n1 + n2))
    lhs = effective_costs(C, a * J1 + b * J2)
    rhs = a * effective_costs(C, J1) + b * effective_costs(C, J2)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 2 ** 32 - 1))
def test_block_structure_roundtrip(sizes, seed):
    # Distinct non-unit weights make the block partition recoverable from entries alone.
    rng = np.random.default_rng(seed)
    k = len(sizes)
    W = rng.uniform(-0.9, 0.9, (k, k))
    C = CoalitionMatrix(tuple(sizes), W)
    c = classify(C.to_dense())
    assert c.sizes == tuple(sizes)
