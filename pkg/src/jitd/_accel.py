"""Backend selection for the numeric kernels.

Each kernel is a loop-style function compiled with ``numba.njit`` when numba
is importable and ``JITD_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise the
kernel's numpy fallback runs: a vectorised rewrite where one is registered,
else the loop function interpreted.  Both paths stay reachable
(``k.jit`` / ``k.fallback``) so the benchmark can compare them in one process.
"""
import contextlib
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("JITD_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = numba is not None and _FLAG in ("", "0", "false", "no")


class Kernel:
    """A kernel with both a compiled and an interpreted entry point."""

    def __init__(self, func, fallback=None):
        self.py = func
        self.fallback = fallback if fallback is not None else func
        self.__name__ = func.__name__
        self.__doc__ = func.__doc__
        self._jit = None

    @property
    def jit(self):
        if numba is None:
            return self.fallback
        if self._jit is None:
            self._jit = numba.njit(cache=True)(self.py)
        return self._jit

    def __call__(self, *args):
        if USE_NUMBA:
            return self.jit(*args)
        return self.fallback(*args)


def kernel(func=None, *, fallback=None):
    if func is None:
        return lambda f: Kernel(f, fallback)
    return Kernel(func, fallback)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily force ``"numba"`` or ``"numpy"`` for every kernel."""
    global USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    saved = USE_NUMBA
    USE_NUMBA = name == "numba" and numba is not None
    try:
        yield
    finally:
        USE_NUMBA = saved
