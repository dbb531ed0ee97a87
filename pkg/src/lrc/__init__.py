"""PAM-4 fiber link simulation with a delayed-feedback laser reservoir equalizer.

Subpackages are imported lazily by the code that needs them; ``import lrc``
stays cheap (the reservoir module pulls in numba).
"""

from lrc.errors import ConfigError, FileFormatError, NumericalAbortError

__version__ = "0.1.0"

__all__ = ["ConfigError", "FileFormatError", "NumericalAbortError", "__version__"]
