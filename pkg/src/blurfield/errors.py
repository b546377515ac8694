"""Exception types shared across the package.

Plain ``ValueError`` is used for argument/precondition violations; the
classes here exist for failure modes the CLI reports as distinct
categories.
"""


class BlurfieldError(Exception):
    """Base class for package-specific runtime failures."""

    category = "internal"


class DataError(BlurfieldError):
    """Malformed or unusable input data (corpus, manifest, field, image)."""

    category = "data"


class SamplerExhausted(BlurfieldError):
    """No admissible sample can be drawn for the requested patch size.

    Raised instead of looping forever when every candidate is rejected;
    an empty batch would otherwise poison the training loss with NaNs.
    """

    category = "exhaustion"


class DivergenceError(BlurfieldError):
    """Training loss became non-finite."""

    category = "divergence"
