"""Exception types raised across the package."""


class CoSharpError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(CoSharpError, ValueError):
    pass


class GeometryUncovered(CoSharpError):
    """Some pixels are crossed by no ray of the acquisition geometry."""

    def __init__(self, pixels):
        self.pixels = list(pixels)
        shown = ", ".join(str(p) for p in self.pixels[:10])
        more = "" if len(self.pixels) <= 10 else f" (+{len(self.pixels) - 10} more)"
        super().__init__(f"{len(self.pixels)} pixel(s) not intersected by any ray: {shown}{more}")


class EmptyRaster(CoSharpError):
    pass


class EmptyDictionary(CoSharpError):
    pass


class PlacementInfeasible(CoSharpError):
    pass


class InfeasibleBudget(CoSharpError, ValueError):
    pass


class NonFiniteIterate(CoSharpError, FloatingPointError):
    """NaN or Inf appeared in a solver iterate. ``trace`` holds residuals so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)


class ConfigError(CoSharpError, ValueError):
    pass
