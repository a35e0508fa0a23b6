"""Backend selection for the tree kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``DYADICLAB_BACKEND=python`` to force the fallback.
"""
import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)

KERNEL_NAMES = ("haar_forward", "haar_inverse", "shift_mix", "subtree_sums", "propagate_max")

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available_backends():
    return ("compiled", "python") if _compiled is not None else ("python",)


def _module_for(name):
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    if name == "python":
        return _fallback
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Rebind the module-level kernels to ``name`` ('compiled' or 'python')."""
    global BACKEND
    mod = _module_for(name)
    for kernel in KERNEL_NAMES:
        globals()[kernel] = getattr(mod, kernel)
    BACKEND = name


_requested = os.environ.get("DYADICLAB_BACKEND", "").strip().lower()
if _requested in ("python", "fallback", "numpy"):
    set_backend("python")
elif _compiled is not None:
    set_backend("compiled")
else:
    if _requested == "compiled":
        logger.warning("compiled kernels requested but not built; using numpy fallback")
    set_backend("python")
