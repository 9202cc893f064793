"""Subsystem vector fields of the switched optimisation dynamics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .activeset import ActiveSet, assemble_active


@dataclass(frozen=True)
class GainConfig:
    kappa1: float = 1.0
    kappa2: float = 1.0

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise ValueError("kappa1 and kappa2 must be strictly positive")


def subsystem_field(problem, z, active, gains: GainConfig = GainConfig(), kernel=None):
    """Velocity ``h_A(z) = -k1 A_A' B_A^-1 g_A - k2 G'G grad f`` for active set ``active``."""
    z = np.asarray(z, dtype=float)
    grad = np.asarray(problem.gradient(z), dtype=float)
    if not active and not problem.m and kernel is None:
        # nothing to restore or project: plain scaled gradient descent
        return -gains.kappa2 * grad
    data = assemble_active(problem, z, active, grad=grad)
    field = kernel or backend.active_field
    return field(grad, data.a, data.jac, data.g, gains.kappa1, gains.kappa2)


def field_from_operators(ops, gains: GainConfig = GainConfig(), annihilator=None):
    """Same field assembled from explicit operators; ``annihilator`` overrides ``ops``'s basis."""
    G = ops.annihilator if annihilator is None else annihilator
    h = -gains.kappa2 * (G.T @ (G @ ops.grad))
    if ops.g_vector.size:
        h -= gains.kappa1 * (ops.a_matrix.T @ ops.b_factor.solve(ops.g_vector))
    return h


def constraint_rate(problem, z, active, gains: GainConfig = GainConfig(), kernel=None):
    """``J_A(z) h_A(z)``; equals ``-kappa1 * g_A(z)`` up to round-off."""
    z = np.asarray(z, dtype=float)
    data = assemble_active(problem, z, ActiveSet(active))
    h = subsystem_field(problem, z, active, gains, kernel)
    return data.jac @ h
