"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; otherwise the numpy/Python
implementation is selected.  ``set_backend`` switches explicitly (tests and
the benchmark compare the two).
"""

from __future__ import annotations

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = _BACKENDS.get("compiled", _pykernels)


def available() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    global _active
    if name == "auto":
        name = "compiled" if "compiled" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} not available; have {available()}")
    _active = _BACKENDS[name]


def backend_name() -> str:
    return _active.name


def get():
    return _active
