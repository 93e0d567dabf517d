"""Scoring kernels with a compiled core and a pure NumPy fallback.

The compiled extension (``hopwise.kernels._core``) is selected at import when
available; otherwise the NumPy implementation is used. Set the environment
variable ``HOPWISE_KERNELS=pure`` (or ``compiled``) to force a backend, or
call :func:`use` at runtime. Callers should access kernels as module
attributes (``kernels.attn_forward(...)``) so a swap takes effect.
"""

import os

from . import _pure

_FUNCS = (
    "attn_forward",
    "attn_backward",
    "cosine_forward",
    "cosine_backward",
    "attn_update_forward",
    "attn_update_backward",
    "concat_update_forward",
    "concat_update_backward",
)

try:
    from . import _core
except ImportError:
    _core = None

_impl = None


def available_backends() -> tuple[str, ...]:
    return ("pure", "compiled") if _core is not None else ("pure",)


def backend_module(name: str):
    if name == "pure":
        return _pure
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernels are not built on this install")
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


def use(name: str) -> None:
    """Rebind the module-level kernel functions to the named backend."""
    global _impl
    module = backend_module(name)
    for fn in _FUNCS:
        globals()[fn] = getattr(module, fn)
    _impl = module


def current_backend() -> str:
    return _impl.BACKEND_NAME


_env = os.environ.get("HOPWISE_KERNELS")
if _env:
    use(_env)
else:
    use("compiled" if _core is not None else "pure")
