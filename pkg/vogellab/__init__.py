"""vogellab - Vogel nonclassicality tests on simulated homodyne data"""

from .version import __version__

__all__ = ["__version__"]
