"""Batched loss kernel with a compiled fast path.

The Cython extension ``_cext`` is used when it was built; otherwise the numpy
implementation in ``_py`` is. Both share one signature, documented on
:func:`sata_lab.kernels._py.batch_loss_grad`.
"""

from . import _py

try:
    from . import _cext
except ImportError:  # extension not built
    _cext = None

_BACKENDS = {"python": _py.batch_loss_grad}
if _cext is not None:
    _BACKENDS["cython"] = _cext.batch_loss_grad

backend = "cython" if _cext is not None else "python"
batch_loss_grad = _BACKENDS[backend]


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def get_kernel(name: str | None = None):
    """The kernel function for backend ``name`` (default: the active one)."""
    if name is None:
        return batch_loss_grad
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {available_backends()}") from None


def set_backend(name: str) -> None:
    """Switch the process-wide kernel for subsequent loss evaluations."""
    global backend, batch_loss_grad
    batch_loss_grad = get_kernel(name)
    backend = name
