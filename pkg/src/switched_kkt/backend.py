"""Selects the compiled field kernel when available, else the numpy reference.

Set ``SWITCHED_KKT_BACKEND=python`` to force the reference path.
"""
import os

import numpy as np

from . import _field_py
from .errors import NumericalError, RankError

_compiled = None
if os.environ.get("SWITCHED_KKT_BACKEND", "").lower() != "python":
    try:
        from . import _fieldcore as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _field_compiled(grad, a_mat, j_mat, g_vec, kappa1, kappa2):
    h, status, info = _compiled.active_field(
        np.ascontiguousarray(grad, dtype=float),
        np.ascontiguousarray(a_mat, dtype=float),
        np.ascontiguousarray(j_mat, dtype=float),
        np.ascontiguousarray(g_vec, dtype=float),
        float(kappa1),
        float(kappa2),
    )
    if status == 1:
        raise RankError(f"active constraint jacobian is rank deficient (pivot ratio {info:.3g})")
    if status == 2:
        raise NumericalError(f"B is ill-conditioned (cond_1 = {info:.3g})")
    return h


def get_field(name=None):
    """Return the kernel ``active_field(grad, a_mat, j_mat, g_vec, k1, k2)`` by name."""
    name = name or BACKEND
    if name == "python":
        return _field_py.active_field
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel is not built")
        return _field_compiled
    raise ValueError(f"unknown backend {name!r}")


active_field = get_field()
