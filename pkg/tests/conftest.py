import numpy as np
import pytest

from mfgteam import experiments as ex
from mfgteam.model import InitLaw, make_spec


def random_spec(rng, n=1, m=None, alpha=0.5, beta=-0.3, scale=0.5, **kw):
    """Random valid spec with every coupling switched on."""
    m = n if m is None else m

    def mat(r=n, c=n):
        return scale * rng.standard_normal((r, c))

    def spd(k):
        X = rng.standard_normal((k, k))
        return X @ X.T / k + np.eye(k)

    base = dict(A1=mat(), A2=mat(), B1=np.eye(n, m) + mat(n, m), B2=np.eye(n, m) + mat(n, m),
                F1=mat(), F2=mat(), Gamma1=mat(), Gamma2=mat(), Q1=spd(n), Q2=spd(n), R1=spd(m), R2=spd(m),
                sigma1=0.3 * np.abs(rng.standard_normal(n)), sigma2=0.3 * np.abs(rng.standard_normal(n)),
                alpha=alpha, beta=beta, pi1=0.6, pi2=0.4,
                init1=InitLaw(rng.standard_normal(n), 0.1 * spd(n)), init2=InitLaw(rng.standard_normal(n), 0.1 * spd(n)))
    base.update(kw)
    return make_spec(n=n, m=m, **base)


@pytest.fixture(scope="session")
def scalar_pipe():
    return ex.build(ex.scalar_spec(), M=400)


@pytest.fixture(scope="session")
def coupled_pipe():
    return ex.build(ex.team_spec(), M=200)
