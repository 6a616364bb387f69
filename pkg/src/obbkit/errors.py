"""Exception hierarchy shared by every obbkit module.

The CLI maps these onto exit codes: config errors exit 1, input format
errors exit 2, invariant violations exit 3.
"""


class ObbkitError(Exception):
    """Base class for all errors raised by obbkit."""


class InvalidBoxError(ObbkitError, ValueError):
    """Non-finite or non-positive oriented box parameters."""


class InvalidPolygonError(ObbkitError, ValueError):
    """Degenerate (zero-area) or non-convex vertex quadrilateral."""


class ConfigError(ObbkitError, ValueError):
    """Invalid configuration value (thresholds, codec settings, sweep settings)."""


class ShapeError(ObbkitError, ValueError):
    """Array length mismatch between logits and targets."""


class EmptyEvaluationError(ObbkitError, ValueError):
    """No class has any ground truth, so mAP is undefined."""


class DotaIOError(ObbkitError, OSError):
    """An annotation or prediction source could not be read."""


class DotaFormatError(ObbkitError, ValueError):
    """A non-empty file yielded no parseable records.

    The per-line diagnostics gathered before giving up are kept on
    ``diagnostics`` so callers (e.g. corpus validation) can still report them.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class GenerationError(ObbkitError, RuntimeError):
    """Synthetic scene generation could not satisfy a constraint."""
