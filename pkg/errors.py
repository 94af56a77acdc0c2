"""
errors.py
---------
Exception hierarchy for the reconstruction toolkit.
Library code raises these; only cli.py turns them into exit codes.
"""


class TomographyError(Exception):
    """Base class for every error raised by this package."""


class NonHermitianInput(TomographyError):
    pass


class DimensionMismatch(TomographyError):
    pass


class InvalidState(TomographyError):
    pass


class InvalidPom(TomographyError):
    pass


class InvalidSettings(TomographyError):
    pass


class RankDeficiencyMismatch(TomographyError):
    pass


class InvalidProbability(TomographyError):
    pass


class ZeroProbabilityOutcome(TomographyError):
    def __init__(self, outcome: int, frequency: float, probability: float):
        self.outcome = outcome
        self.frequency = frequency
        self.probability = probability
        super().__init__(
            f"outcome {outcome} observed with f={frequency:.6g} "
            f"but predicted p={probability:.3e}"
        )


class MaxItersExceeded(TomographyError):
    def __init__(self, result):
        self.result = result
        super().__init__(
            f"no convergence after {result.iterations} steps "
            f"(residual {result.residual:.3e})"
        )


class InvalidConfig(TomographyError):
    pass


class InputError(TomographyError):
    """Malformed or inconsistent input file; message names the line or field."""
