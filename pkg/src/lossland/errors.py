"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Inconsistent shapes, invalid options, or broken invariants in caller input."""


class DataFormatError(ConfigError):
    """A data file exists but does not parse (bad magic, truncation, count mismatch)."""


class NumericsError(ArithmeticError):
    """NaN/Inf surfaced where the computation cannot continue."""
