"""Rate fitting helpers for the convergence studies."""

from __future__ import annotations

import numpy as np
from scipy import stats


def loglog_slope(x, y) -> tuple[float, float]:
    """OLS slope of ``log y`` on ``log x`` and its standard error (NaN if any y <= 0)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.any(y <= 0):
        return float("nan"), float("nan")
    res = stats.linregress(np.log(x), np.log(y))
    se = float(res.stderr) if x.size > 2 else float("nan")
    return float(res.slope), se


def kendall_tau(x, y) -> float:
    """Kendall rank correlation of y against x."""
    return float(stats.kendalltau(x, y).statistic)
