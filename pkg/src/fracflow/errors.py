class FracflowError(Exception):
    """Base class for simulator failures."""


class ConfigError(FracflowError):
    """Configuration parsing or validation failed; carries all problems."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SingularSystemError(FracflowError):
    """All-Neumann system with an incompatible net source."""

    def __init__(self, residual):
        self.residual = residual
        super().__init__(
            f"singular system: pure-Neumann compatibility residual {residual:.3e}"
        )


class SolverError(FracflowError):
    """Linear solve produced an unacceptable residual."""

    def __init__(self, residual, history=None):
        self.residual = residual
        self.history = history or []
        super().__init__(f"linear solver failed, relative residual {residual:.3e}")
