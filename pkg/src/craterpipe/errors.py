"""Exception hierarchy for the crater pipeline.

Every error deliberately raised by this package derives from PipelineError,
so callers (notably the CLI) can map data problems to a single exit code.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class GeoError(PipelineError):
    """Invalid projection parameters or coordinates."""


class RasterError(PipelineError):
    """Raster file, header, or grid-operation failure."""


class CatalogError(PipelineError):
    """Catalog file or schema failure."""


class DetectionError(PipelineError):
    """Detection records violating the wire format or an invariant."""


class EvalError(PipelineError):
    """Evaluation inputs that cannot be scored."""


class ConfigError(PipelineError):
    """Bad or inconsistent pipeline configuration."""
