"""Ambient vector field presets and their sup-norm measurement.

The ambient field U is the fixed state around which the flow is
linearized.  Every preset satisfies U.n = 0 on the whole boundary (the
nodal normal components vanish analytically, not just to truncation
error) and restricts to a smooth field on the interface, so presets are
admissible members of the class the analysis requires.

Presets, written in the scaled coordinates xh = x1/Lx in [0, 1] and
yh = x2/Ly in [-1, 0]:

    zero          U = 0
    compressive   U = s * (sin(pi xh), 0)
    uniform-shear U = s * (sin(pi xh) (1 + yh)^2, 0)
    solenoidal    U = s * ((pi/Ly) sin(pi xh) cos(pi yh),
                           -(pi/Lx) cos(pi xh) sin(pi yh))
                  (a streamfunction field, divergence-free)

The measurement

    u_star = sup |U| + sup |div U| + C2-norm of U on the interface

uses componentwise sup norms; the C2 term sums the sups of the interface
restriction and of its first two tangential derivatives.  All three
pieces are evaluated from the closed forms of the preset, since grid
sampling under-resolves sup norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

PRESETS = ("zero", "uniform-shear", "solenoidal", "compressive")


@dataclass(frozen=True)
class AmbientField:
    """Ambient field sampled on a grid, plus analytic metadata.

    U1, U2        nodal values, shape (nx+2, ny+2)
    J             nodal Jacobian entries J[i][j] = d U_i / d x_j
    div           nodal divergence evaluated analytically
    u_omega       interface restriction of U1 (t, dt, dtt: value and the
                  first two tangential derivatives at the beam nodes)
    star_terms    (sup|U|, sup|div U|, C2 norm on the interface)
    """

    preset: str
    amplitude: float
    grid: Grid
    U1: np.ndarray
    U2: np.ndarray
    J: tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    div: np.ndarray
    u_omega: np.ndarray
    u_omega_d1: np.ndarray
    u_omega_d2: np.ndarray
    star_terms: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    @property
    def is_zero(self) -> bool:
        return self.preset == "zero" or self.amplitude == 0.0


def ambient_preset(name: str, s: float, grid: Grid) -> AmbientField:
    """Build a preset ambient field of amplitude s >= 0 on the given grid."""
    if s < 0.0:
        raise ValueError(f"amplitude must be nonnegative, got {s}")
    if name not in PRESETS:
        raise ValueError(f"unknown ambient preset {name!r}; choose from {PRESETS}")

    X, Y = grid.meshgrid()
    Lx, Ly = grid.Lx, grid.Ly
    kx = np.pi / Lx
    ky = np.pi / Ly
    xb = grid.xcoords()
    zeros = np.zeros(grid.shape)
    zb = np.zeros(grid.n_beam)

    if name == "zero" or s == 0.0:
        U1 = U2 = div = zeros
        J = ((zeros, zeros), (zeros, zeros))
        u_om, u_d1, u_d2 = zb, zb, zb
        star = (0.0, 0.0, 0.0)
    elif name == "compressive":
        U1 = s * np.sin(kx * X)
        U2 = zeros
        d1U1 = s * kx * np.cos(kx * X)
        J = ((d1U1, zeros), (zeros, zeros))
        div = d1U1
        u_om = s * np.sin(kx * xb)
        u_d1 = s * kx * np.cos(kx * xb)
        u_d2 = -s * kx**2 * np.sin(kx * xb)
        star = (s, s * kx, s * (1.0 + kx + kx**2))
    elif name == "uniform-shear":
        prof = (1.0 + Y / Ly) ** 2
        U1 = s * np.sin(kx * X) * prof
        U2 = zeros
        d1U1 = s * kx * np.cos(kx * X) * prof
        d2U1 = s * np.sin(kx * X) * 2.0 * (1.0 + Y / Ly) / Ly
        J = ((d1U1, d2U1), (zeros, zeros))
        div = d1U1
        u_om = s * np.sin(kx * xb)
        u_d1 = s * kx * np.cos(kx * xb)
        u_d2 = -s * kx**2 * np.sin(kx * xb)
        star = (s, s * kx, s * (1.0 + kx + kx**2))
    else:  # solenoidal
        U1 = s * ky * np.sin(kx * X) * np.cos(ky * Y)
        U2 = -s * kx * np.cos(kx * X) * np.sin(ky * Y)
        d1U1 = s * ky * kx * np.cos(kx * X) * np.cos(ky * Y)
        d2U1 = -s * ky**2 * np.sin(kx * X) * np.sin(ky * Y)
        d1U2 = s * kx**2 * np.sin(kx * X) * np.sin(ky * Y)
        d2U2 = -s * kx * ky * np.cos(kx * X) * np.cos(ky * Y)
        J = ((d1U1, d2U1), (d1U2, d2U2))
        div = np.zeros(grid.shape)
        amp = s * ky
        u_om = amp * np.sin(kx * xb)
        u_d1 = amp * kx * np.cos(kx * xb)
        u_d2 = -amp * kx**2 * np.sin(kx * xb)
        star = (s * max(kx, ky), 0.0, amp * (1.0 + kx + kx**2))

    return AmbientField(
        preset=name,
        amplitude=float(s),
        grid=grid,
        U1=U1,
        U2=U2,
        J=J,
        div=div,
        u_omega=u_om,
        u_omega_d1=u_d1,
        u_omega_d2=u_d2,
        star_terms=star,
    )


def u_star_norm(U: AmbientField) -> float:
    """sup|U| + sup|div U| + C2 interface norm, from the preset closed forms."""
    return float(sum(U.star_terms))


def r_polynomial(a: float) -> float:
    """The cubic growth r(a) = a + a^2 + a^3 entering the smallness budget."""
    return a + a**2 + a**3
