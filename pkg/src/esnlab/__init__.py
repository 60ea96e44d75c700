"""Echo-state network parameter studies.

Modules: ``dynamics`` (benchmark series), ``esn`` (reservoirs and readouts),
``lyapunov`` (QR exponents), ``meanfield`` (large-N theory), ``analysis``
(scores and diagnostics), ``sweep`` (phase diagrams) and ``cli``.
"""

from ._version import __version__

__all__ = ["__version__"]
