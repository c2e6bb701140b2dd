"""Plate state and its pointwise resultants.

The first-order state stacks ten scalar fields: the rotations v = (v1, v2)
and their velocities z = (z1, z2), the deflection w and its velocity y, the
thermal displacement tau and its rate theta, and the diffusive displacement
wp and its rate P.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Field, Grid, d_x1_matrix, d_x2_matrix, zero_field
from .material import MaterialParams

FIELD_NAMES = ("v1", "v2", "z1", "z2", "w", "y", "tau", "theta", "wp", "P")
N_FIELDS = len(FIELD_NAMES)


@dataclass
class State:
    v1: Field
    v2: Field
    z1: Field
    z2: Field
    w: Field
    y: Field
    tau: Field
    theta: Field
    wp: Field
    P: Field
    time: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.v1.grid

    def pack(self) -> np.ndarray:
        """Stack the ten fields into one vector, FIELD_NAMES order."""
        return np.concatenate([getattr(self, name).values for name in FIELD_NAMES])

    @classmethod
    def unpack(cls, grid: Grid, vec: np.ndarray, time: float = 0.0) -> "State":
        n = grid.n_nodes
        if vec.size != N_FIELDS * n:
            raise ValueError(f"state vector length {vec.size}, expected {N_FIELDS * n}")
        parts = {
            name: Field(grid, vec[k * n : (k + 1) * n])
            for k, name in enumerate(FIELD_NAMES)
        }
        return cls(time=time, **parts)

    def field(self, name: str) -> Field:
        if name not in FIELD_NAMES:
            raise KeyError(f"unknown state field {name!r}")
        return getattr(self, name)

    def with_field(self, name: str, f: Field) -> "State":
        if name not in FIELD_NAMES:
            raise KeyError(f"unknown state field {name!r}")
        return replace(self, **{name: f})


def zero_state(grid: Grid, time: float = 0.0) -> State:
    parts = {name: zero_field(grid) for name in FIELD_NAMES}
    return State(time=time, **parts)


@dataclass
class Strain:
    eps11: Field
    eps12: Field
    eps22: Field
    gamma1: Field
    gamma2: Field

    @property
    def trace(self) -> np.ndarray:
        return self.eps11.values + self.eps22.values


def strain(state: State) -> Strain:
    """Symmetric rotation gradient and transverse shear angles."""
    g = state.grid
    D1, D2 = d_x1_matrix(g), d_x2_matrix(g)
    v1, v2, w = state.v1.values, state.v2.values, state.w.values
    return Strain(
        eps11=Field(g, D1 @ v1),
        eps12=Field(g, 0.5 * (D2 @ v1 + D1 @ v2)),
        eps22=Field(g, D2 @ v2),
        gamma1=Field(g, v1 + D1 @ w),
        gamma2=Field(g, v2 + D2 @ w),
    )


@dataclass
class Resultants:
    """Pointwise stress, shear, capacity and conduction-flux measures."""

    M11: Field
    M12: Field
    M22: Field
    N1: Field
    N2: Field
    entropy: Field       # I*(d1*tr(eps) + c*theta + kappa*P)
    Psi1: Field
    Psi2: Field
    R: Field
    concentration: Field  # I*(d2*tr(eps) + kappa*theta + r*P)
    Omega1: Field
    Omega2: Field
    Mdiff: Field


def resultants(state: State, params: MaterialParams) -> Resultants:
    g = state.grid
    D1, D2 = d_x1_matrix(g), d_x2_matrix(g)
    I = params.inertia
    s = strain(state)
    tr = s.trace
    theta, P = state.theta.values, state.P.values
    tau, wp = state.tau.values, state.wp.values

    iso = params.lam * tr - params.d1 * theta - params.d2 * P
    thermal_potential = params.k1 * tau + params.hbar1 * wp + params.k2 * theta + params.hbar2 * P
    diffusive_potential = params.h1 * wp + params.hbar1 * tau + params.hbar2 * theta + params.h2 * P

    return Resultants(
        M11=Field(g, I * (iso + 2 * params.mu * s.eps11.values)),
        M12=Field(g, I * 2 * params.mu * s.eps12.values),
        M22=Field(g, I * (iso + 2 * params.mu * s.eps22.values)),
        N1=Field(g, params.mu * s.gamma1.values),
        N2=Field(g, params.mu * s.gamma2.values),
        entropy=Field(g, I * (params.d1 * tr + params.c * theta + params.kappa * P)),
        Psi1=Field(g, -I * (D1 @ thermal_potential)),
        Psi2=Field(g, -I * (D2 @ thermal_potential)),
        R=Field(g, -thermal_potential),
        concentration=Field(g, I * (params.d2 * tr + params.kappa * theta + params.r * P)),
        Omega1=Field(g, -I * (D1 @ diffusive_potential)),
        Omega2=Field(g, -I * (D2 @ diffusive_potential)),
        Mdiff=Field(g, -diffusive_potential),
    )
