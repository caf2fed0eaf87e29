"""Exception and warning types shared across the package."""


class InvalidInput(ValueError):
    """An argument violates a documented precondition (shape, range, order)."""


class InvalidParameter(ValueError):
    """A model parameter is outside its admissible region."""


class DegenerateProjector(RuntimeError):
    """An orthonormal complement could not be completed to the required rank."""


class IdentificationFailure(RuntimeError):
    """A moment system is (numerically) singular, the parameter is not identified."""


class SimulationFailure(RuntimeError):
    """A Monte Carlo routine could not produce valid draws."""


class IngestError(ValueError):
    """A data file is malformed or inconsistent with its companion file."""


class ClippedEstimateWarning(UserWarning):
    """An estimated variance component was negative and has been clipped."""


class ExpansionRegimeWarning(UserWarning):
    """A perturbation is outside the guaranteed validity regime of the expansion."""


class SmallSampleWarning(UserWarning):
    """A sample is too small for the requested estimator or simulation to be reliable."""
