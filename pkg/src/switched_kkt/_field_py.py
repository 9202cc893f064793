"""Reference (numpy/scipy) evaluation of the subsystem vector field."""
import numpy as np

from .linops import BFactor, annihilator


def active_field(grad, a_mat, j_mat, g_vec, kappa1, kappa2):
    """``-k1 A' B^-1 g - k2 G'G grad`` with ``B = J A'`` and ``G`` the annihilator of ``J``."""
    G = annihilator(j_mat)
    h = -kappa2 * (G.T @ (G @ grad))
    if j_mat.shape[0]:
        y = BFactor(j_mat @ a_mat.T).solve(g_vec)
        h -= kappa1 * (a_mat.T @ y)
    return h
