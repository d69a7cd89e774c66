"""Kernel backend selection.

The numeric hot paths (convolutions, pooling, the Metropolis chain) exist
twice: a numba ``@njit`` version and a pure-numpy version that performs the
same floating-point operations in the same order, so both backends produce
bit-identical results. ``SENSCOV_BACKEND`` picks one:

* ``auto`` (default): numba if importable, else numpy
* ``numba``: require numba, fail loudly if missing
* ``numpy``: force the fallback path

``SENSCOV_WORKERS`` sets the thread count for per-neuron posterior fits.
It never affects results; every fit draws from its own seed-derived stream.
"""

import os

_VALID = ("auto", "numba", "numpy")
_active = None


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend():
    """Return the backend name in effect ("numba" or "numpy")."""
    global _active
    if _active is None:
        requested = os.environ.get("SENSCOV_BACKEND", "auto").lower()
        if requested not in _VALID:
            raise ValueError(
                f"SENSCOV_BACKEND must be one of {_VALID}, got {requested!r}"
            )
        if requested == "numba" and not _numba_available():
            raise RuntimeError("SENSCOV_BACKEND=numba but numba is not importable")
        if requested == "auto":
            requested = "numba" if _numba_available() else "numpy"
        _active = requested
    return _active


def set_backend(name):
    """Override the backend (tests and benchmarks). Pass None to re-resolve."""
    global _active
    if name is not None and name not in ("numba", "numpy"):
        raise ValueError(f"backend must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not _numba_available():
        raise RuntimeError("numba backend requested but numba is not importable")
    _active = name


def worker_count():
    """Thread count for independent per-neuron work, from SENSCOV_WORKERS."""
    raw = os.environ.get("SENSCOV_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SENSCOV_WORKERS must be an integer, got {raw!r}")
    if n < 1:
        raise ValueError(f"SENSCOV_WORKERS must be >= 1, got {n}")
    return n
