"""Hot kernels for quantizer fitting and encoding.

The compiled Cython extension is preferred; if it is missing (no C
toolchain at install time) the pure-numpy fallback is selected. Both
implement identical semantics, including tie-breaking, and are checked
against each other in the test suite.
"""

from adrec._kernels import _fallback

try:
    from adrec._kernels import _core

    greedy_balanced_assign = _core.greedy_balanced_assign
    nearest_centroid = _core.nearest_centroid
    BACKEND = "compiled"
except ImportError:
    greedy_balanced_assign = _fallback.greedy_balanced_assign
    nearest_centroid = _fallback.nearest_centroid
    BACKEND = "python"


def backends():
    """Names of the kernel backends importable in this environment."""
    names = ["python"]
    if BACKEND == "compiled":
        names.append("compiled")
    return names


def get_backend(name):
    """Return the kernel namespace for ``name`` ("python" or "compiled")."""
    if name == "python":
        return _fallback
    if name == "compiled":
        if BACKEND != "compiled":
            raise ValueError("compiled kernel backend is not available")
        from adrec._kernels import _core

        return _core
    raise ValueError(f"unknown kernel backend: {name!r}")


__all__ = [
    "BACKEND",
    "backends",
    "get_backend",
    "greedy_balanced_assign",
    "nearest_centroid",
]
