"""Exceptions raised by the numerical stages."""


class NumericalError(RuntimeError):
    """Base class for failures that map to CLI exit code 3."""


class NearSingularFactor(NumericalError):
    def __init__(self, t: float, cond: float, cond_max: float):
        self.t, self.cond, self.cond_max = t, cond, cond_max
        super().__init__(f"inverted factor near-singular at t={t:.6g}: cond={cond:.3e} > {cond_max:.1e}")


class BlowUp(NumericalError):
    def __init__(self, t: float, value: float):
        self.t, self.value = t, value
        super().__init__(f"Riccati solution escaped at t={t:.6g} (|entry|={value:.3e})")


class NonFinite(NumericalError):
    def __init__(self, what: str, step: int | None = None):
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"non-finite {what}{where}")


class GridMismatch(ValueError):
    pass
