"""Backend selection for the numeric kernels.

The hot inner loops (coordinate descent, projected gradient, the
cross-validation sweep) are compiled with numba when it is available.
Set ``SYNTHPANEL_NUMBA=0`` to force the pure-numpy interpretation of the
same source, or ``SYNTHPANEL_NUMBA=1`` to make a missing numba an error.
Both paths execute identical arithmetic; the flag only changes speed.
"""

import os

_FLAG = os.environ.get("SYNTHPANEL_NUMBA", "auto").strip().lower()

if _FLAG in ("0", "off", "false", "no"):
    USING_NUMBA = False
elif _FLAG in ("1", "on", "true", "yes"):
    import numba  # noqa: F401  raise ImportError loudly if forced on

    USING_NUMBA = True
else:
    try:
        import numba  # noqa: F401

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False


def kernel(fn):
    """Compile ``fn`` with numba, or return it unchanged on the numpy path."""
    if USING_NUMBA:
        from numba import njit

        return njit(cache=True)(fn)
    return fn
