"""Numba acceleration plumbing.

Hot kernels in :mod:`martinlab.kernels` are written twice: a numba ``@njit``
version and a pure-numpy version.  Which one runs is decided once at import
time: numpy is used when numba is missing or when the environment variable
``MARTINLAB_NO_NUMBA`` is set to a non-empty value other than ``0``.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    numba = None
    HAS_NUMBA = False


def _env_disabled():
    flag = os.environ.get("MARTINLAB_NO_NUMBA", "")
    return flag not in ("", "0")


USE_NUMBA = HAS_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """Decorator that compiles with numba when enabled, else returns the
    function unchanged.  Signature matches ``numba.njit``."""
    if USE_NUMBA:
        return numba.njit(*args, **kwargs)
    # plain decorator fallback, also handles bare @njit usage
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
