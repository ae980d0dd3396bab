"""Risk of iteratively refitting regression on mixed real/synthetic labels.

Submodules load lazily so that the CLI can pin BLAS thread pools before
numpy is first imported.
"""

import importlib

_SUBMODULES = (
    "config",
    "curves",
    "experiments",
    "finite",
    "measures",
    "spectra",
    "stieltjes",
    "theory",
)

__version__ = "0.1.0"
__all__ = list(_SUBMODULES)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module("." + name, __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES))
