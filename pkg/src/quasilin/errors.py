"""Failure taxonomy shared by the solvers, the pipeline and the CLI.

Every solver failure carries an ``outcome`` tag so sweeps can aggregate
results, and an ``exit_code`` used by the command line front end.
"""


class QuasilinError(Exception):
    outcome = "error"
    exit_code = 1

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class InvalidBasis(QuasilinError, ValueError):
    outcome = "invalid-basis"
    exit_code = 2


class ConfigError(QuasilinError, ValueError):
    """Raised with every schema violation found, not only the first."""

    outcome = "config-error"
    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class HypothesisRefused(QuasilinError):
    outcome = "hypothesis-refused"
    exit_code = 3


class DivisorError(HypothesisRefused):
    """A non-resonant site has a vanishing small divisor."""


class Diverged(QuasilinError):
    outcome = "diverged"
    exit_code = 4


class NotConverged(QuasilinError):
    outcome = "not-converged"
    exit_code = 5


class InsideExcludedSet(QuasilinError):
    """Amplitudes fall inside the excluded set where |det A| <= eps**(1/6)."""

    outcome = "inside-I_eps"
    exit_code = 6


class VerificationFailure(QuasilinError, AssertionError):
    outcome = "verification-failed"
    exit_code = 7
