"""Exception types shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 2,
NumericalAbortError -> 3, FileFormatError / OSError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value, unknown key, or inconsistent settings."""


class FileFormatError(Exception):
    """Malformed waveform/symbol file (bad magic, truncation, bad payload)."""


class NumericalAbortError(ArithmeticError):
    """Non-finite samples or an unsalvageable numerical state mid-run."""
