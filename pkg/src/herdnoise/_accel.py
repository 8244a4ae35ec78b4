"""JIT switch for the hot loops.

Kernels are written once in plain Python/NumPy and decorated with :func:`jit`.
When numba is importable and ``HERDNOISE_DISABLE_JIT`` is unset (or ``0``),
they are compiled with ``numba.njit``; otherwise the undecorated functions run
in the interpreter. Both paths consume the same random buffers, so results
for the same seed agree to within a few ulps (compiled and libm ``exp``/``pow``
can round differently in the last place). Each path on its own is bitwise
deterministic.
"""
import os

_flag = os.environ.get("HERDNOISE_DISABLE_JIT", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba
    USING_NUMBA = True
except ImportError:
    numba = None
    USING_NUMBA = False


def jit(fn):
    """Compile ``fn`` with ``numba.njit(cache=True)`` when JIT is enabled."""
    if USING_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def py_impl(fn):
    """Return the interpreted implementation of a (possibly compiled) kernel."""
    return getattr(fn, "py_func", fn)


def is_compiled(fn):
    return USING_NUMBA and hasattr(fn, "py_func")
