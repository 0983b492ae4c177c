"""Exception hierarchy shared across the package."""


class CurvewellError(Exception):
    """Base class for all package errors."""


class InputError(CurvewellError):
    """Invalid user input (bad expression, non-finite samples, open curve)."""


class ConfigError(CurvewellError):
    """Invalid experiment configuration (bad key, out-of-range parameter)."""


class GeometryError(CurvewellError):
    """Mesh or coordinate-map failure (tangled elements, point outside tube)."""


class ContractError(CurvewellError):
    """An operation was called outside its contract (e.g. non-resonant profile)."""


class NumericalError(CurvewellError):
    """A numerical method failed to converge or produced non-finite values."""


class OutsideTubularNeighborhood(GeometryError):
    """Inverse tubular map requested for a point outside the neighborhood."""
