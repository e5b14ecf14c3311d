"""Exception types raised across the package."""


class InvalidAction(ValueError):
    """Transmission attempted in a state whose token bucket is empty."""


class NonConvergence(RuntimeError):
    """An iterative solve hit its sweep or iteration cap before the tolerance."""


class TooLarge(ValueError):
    """Exhaustive policy enumeration requested on a state space beyond its cap."""


class IndexMismatch(ValueError):
    """A policy or value table does not match the model's state indexing."""


class InvalidStrategy(ValueError):
    """A fixed transmission schedule violates its duty-cycle constraint."""


class ManifestMismatch(ValueError):
    """Two run manifests disagree on axes that a comparison requires to match."""
