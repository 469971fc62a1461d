"""Exception hierarchy shared across the toolkit."""


class CanopyError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CanopyError, ValueError):
    """Tensor shapes or dimensions are inconsistent with an operation."""


class GraphError(CanopyError, ValueError):
    """A computation graph violates a structural invariant."""


class BundleError(CanopyError, ValueError):
    """A model bundle or label file is malformed or cannot be decoded."""


class OptimizeError(CanopyError, ValueError):
    """An optimization pass was misconfigured."""


class DatasetError(CanopyError, ValueError):
    """A dataset directory or image file cannot be used."""


class TrainError(CanopyError, ValueError):
    """Training input or configuration is invalid."""


class CatalogError(CanopyError, ValueError):
    """A species catalog file is malformed."""


class ServiceError(CanopyError, ValueError):
    """A classification request or service configuration is invalid."""
