"""Model data for compressible two-component miscible displacement.

The model tracks the pressure p, the Darcy velocity u and the concentration
c of one of two components flowing through porous rock:

    d(c) p_t + div u = q,          a(c) u = -grad p,
    phi c_t + b(c) p_t + div(u c) - div(D(u) grad c) = (c_inj - c) q,

with a(c) = mu(c) / kappa, d(c) = phi (z1 c + z2 (1 - c)) and compressibility
constants z1, z2 > 0 of the two components.  The solver works with the
conservative variable r = phi c, whose weighted compressibility

    d_tilde(r) = z1 r + z2 (Phi - r),   Phi = interpolated phi,

stays positive exactly when 0 <= r <= Phi.  b(c) = phi c (z1 - z1 c - z2 (1-c))
closes the original non-conservative form; the conservative scheme absorbs it
into the r z1 p_t source and never evaluates it.

The velocity-dependent diffusion/dispersion tensor is

    D(u) = phi * (d_mol I + d_long |u| E(u) + d_tran |u| (I - E(u))),

with E(u) = u u^T / |u|^2, reducing to phi * d_mol * I at u = 0 and to the
scalar phi * (d_mol + d_long |u|) in one dimension.

This module also ships the six example problems used by the CLI harness and
the acceptance tests, numbered 1-6.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Well:
    """Point source/sink; rate > 0 injects at concentration 1, rate < 0 produces.

    Point wells are smeared over the mesh cell containing them, i.e. the cell
    receives a uniform source density rate / cell_area.
    """

    x: float
    y: float
    rate: float


@dataclass
class ProblemSpec:
    """Coefficients, sources and optional exact solution of one problem.

    Spatial callables take (x,) in 1D and (x, y) in 2D; source callables take
    an extra trailing time argument.  All callables must accept numpy arrays.
    ``q`` and ``c_inj`` may be None, meaning identically zero.  ``mu_constant``
    marks viscosities that do not depend on c, enabling a cached velocity
    solve.
    """

    dim: int
    z1: float
    z2: float
    phi: Callable = lambda *xy: np.ones_like(xy[0])
    kappa: Callable = lambda *xy: np.ones_like(xy[0])
    mu: Callable = lambda c: np.ones_like(c)
    mu_constant: bool = True
    d_mol: float = 0.0
    d_long: float = 0.0
    d_tran: float = 0.0
    q: Optional[Callable] = None
    c_inj: Optional[Callable] = None
    wells: tuple[Well, ...] = ()
    c_exact: Optional[Callable] = None
    p_exact: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.z1 <= 0.0 or self.z2 <= 0.0:
            raise ValueError("compressibility constants z1, z2 must be positive")
        if min(self.d_mol, self.d_long, self.d_tran) < 0.0:
            raise ValueError("diffusion coefficients must be non-negative")
        if self.wells and self.dim != 2:
            raise ValueError("wells are only supported in 2D")


def coeff_a(c, kappa_vals):
    """a(c) = mu(c) / kappa for precomputed kappa values (mu folded in by caller)."""
    kappa_vals = np.asarray(kappa_vals, dtype=float)
    if np.any(kappa_vals <= 0.0):
        raise ValueError("permeability must be positive")
    return np.asarray(c, dtype=float) / kappa_vals


def coeff_d_tilde(r, phi_vals, spec: ProblemSpec):
    """Weighted compressibility d_tilde(r) = z1 r + z2 (Phi - r)."""
    r = np.asarray(r, dtype=float)
    phi_vals = np.asarray(phi_vals, dtype=float)
    return spec.z1 * r + spec.z2 * (phi_vals - r)


def coeff_d(c, phi_vals, spec: ProblemSpec):
    """Compressibility d(c) = phi (z1 c + z2 (1 - c)) of the original model."""
    c = np.asarray(c, dtype=float)
    return np.asarray(phi_vals, dtype=float) * (spec.z1 * c + spec.z2 * (1.0 - c))


def coeff_b(c, phi_vals, spec: ProblemSpec):
    """b(c) = phi c (z1 - z1 c - z2 (1 - c)).

    Recorded for completeness; the conservative form solved here replaces it
    by the r z1 p_t source term, so the solver never calls this.
    """
    c = np.asarray(c, dtype=float)
    return np.asarray(phi_vals, dtype=float) * c * (
        spec.z1 - spec.z1 * c - spec.z2 * (1.0 - c)
    )


def diffusion_scalar_1d(u, phi_vals, spec: ProblemSpec):
    """1D diffusion coefficient D(u) = phi (d_mol + d_long |u|)."""
    return np.asarray(phi_vals, dtype=float) * (
        spec.d_mol + spec.d_long * np.abs(np.asarray(u, dtype=float))
    )


def diffusion_tensor_2d(u1, u2, phi_vals, spec: ProblemSpec):
    """Components (D11, D12, D22) of the 2D diffusion tensor; D21 = D12.

    D(u) = phi (d_mol I + d_long |u| E + d_tran |u| (I - E)) with
    E = u u^T / |u|^2.  The |u| E terms vanish continuously as u -> 0, where
    the tensor reduces to phi d_mol I.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    phi_vals = np.asarray(phi_vals, dtype=float)
    norm = np.hypot(u1, u2)
    safe = np.where(norm > 0.0, norm, 1.0)
    # d_long |u| E + d_tran |u| (I - E), written with |u| E = u u^T / |u|
    d11 = spec.d_mol + spec.d_tran * norm + (spec.d_long - spec.d_tran) * u1 * u1 / safe
    d22 = spec.d_mol + spec.d_tran * norm + (spec.d_long - spec.d_tran) * u2 * u2 / safe
    d12 = (spec.d_long - spec.d_tran) * u1 * u2 / safe
    return phi_vals * d11, phi_vals * d12, phi_vals * d22


def source_terms(q_vals, c_inj_vals, c_local):
    """Pointwise injected concentration: c_inj where q > 0, c where q < 0, else 0."""
    q_vals = np.asarray(q_vals, dtype=float)
    return np.where(
        q_vals > 0.0, c_inj_vals, np.where(q_vals < 0.0, c_local, 0.0)
    )


# ----------------------------------------------------------------------------
# built-in example problems
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    """One ready-to-run example: problem data plus the reference run setup."""

    example: int
    spec: ProblemSpec
    c0: Callable
    p0: Callable
    n_default: int
    dt_factor: float  # dt = dt_factor * dx^2 (1D) or * min(dx^2, dy^2) (2D)
    t_final: float
    description: str
    notes: str = ""


def _example_1(gamma: float) -> Preset:
    g = float(gamma)

    def c_exact(x, t):
        return 0.5 * (1.0 - np.exp(-g * t) * np.cos(x))

    def p_exact(x, t):
        return np.exp(-t) * (np.cos(x) - 1.0)

    spec = ProblemSpec(
        dim=1,
        z1=1.0,
        z2=1.0,
        d_mol=g,
        q=lambda x, t: np.full_like(x, np.exp(-t)),
        c_inj=lambda x, t: 0.5 * (np.exp(-g * t) * (np.sin(x) ** 2 - np.cos(x)) + 1.0),
        c_exact=c_exact,
        p_exact=p_exact,
        name="smooth-1d",
    )
    return Preset(
        example=1,
        spec=spec,
        c0=lambda x: c_exact(x, 0.0),
        p0=lambda x: p_exact(x, 0.0),
        n_default=80,
        dt_factor=0.05,
        t_final=1.0,
        description=(
            "1D accuracy test with exact solution c = (1 - exp(-gamma t) cos x)/2; "
            "gamma=1e-5 keeps c near the lower bound 0"
        ),
    )


def _example_2(gamma: float) -> Preset:
    g = float(gamma)
    spec = ProblemSpec(
        dim=1,
        z1=0.35,
        z2=1.0,
        phi=lambda x: 0.25 * (3.0 + np.cos(x)),
        name="heterogeneous-porosity-1d",
    )
    return Preset(
        example=2,
        spec=spec,
        c0=lambda x: 0.5 * (np.cos(x) + 1.0),
        p0=lambda x: -g * np.cos(x),
        n_default=80,
        dt_factor=0.01,
        t_final=0.1,
        description=(
            "1D transport with variable porosity phi = (3 + cos x)/4, z1=0.35, "
            "no source, no diffusion; gamma scales the initial pressure -gamma cos x"
        ),
        notes="larger gamma steepens the front; gamma=10 overshoots without the limiter",
    )


def _example_3() -> Preset:
    spec = ProblemSpec(
        dim=1,
        z1=0.1,
        z2=1.0,
        name="riemann-1d",
    )
    return Preset(
        example=3,
        spec=spec,
        c0=lambda x: np.where(x < 1.0, 1.0, 0.0),
        p0=lambda x: np.where(x < 1.0, 5.0, 0.0),
        n_default=80,
        dt_factor=0.001,
        t_final=1.0,
        description=(
            "1D discontinuous initial data (c, p jump at x=1), z1=0.1; without the "
            "limiter the weighted compressibility turns negative and the run blows up"
        ),
    )


def _example_4(gamma: float) -> Preset:
    g = float(gamma)

    def c_exact(x, y, t):
        return 0.5 * (1.0 - np.exp(-2.0 * g * t) * np.cos(x) * np.cos(y))

    def p_exact(x, y, t):
        return np.exp(-2.0 * t) * (np.cos(x) * np.cos(y) - 1.0)

    def c_inj(x, y, t):
        cx, cy = np.cos(x), np.cos(y)
        sx2, sy2 = np.sin(x) ** 2, np.sin(y) ** 2
        return 0.5 * (
            np.exp(-2.0 * g * t) * (0.5 * sx2 * cy**2 + 0.5 * cx**2 * sy2 - cx * cy)
            + 1.0
        )

    spec = ProblemSpec(
        dim=2,
        z1=1.0,
        z2=1.0,
        d_mol=g,
        q=lambda x, y, t: np.full_like(x, 2.0 * np.exp(-2.0 * t)),
        c_inj=c_inj,
        c_exact=c_exact,
        p_exact=p_exact,
        name="smooth-2d",
    )
    return Preset(
        example=4,
        spec=spec,
        c0=lambda x, y: c_exact(x, y, 0.0),
        p0=lambda x, y: p_exact(x, y, 0.0),
        n_default=20,
        dt_factor=0.02,
        t_final=0.01,
        description=(
            "2D accuracy test with exact solution c = (1 - exp(-2 gamma t) cos x cos y)/2 "
            "and D = gamma I"
        ),
        notes="reference error table computed at T=0.01; pass --T 0.1 for the long variant",
    )


def _example_5() -> Preset:
    spec = ProblemSpec(
        dim=2,
        z1=0.1,
        z2=1.0,
        name="riemann-2d",
    )

    def c0(x, y):
        inside = (x > 0.0) & (x < 1.0) & (y > 0.0) & (y < 1.0)
        return np.where(inside, 1.0, 0.0)

    return Preset(
        example=5,
        spec=spec,
        c0=c0,
        p0=lambda x, y: 5.0 * c0(x, y),
        n_default=40,
        dt_factor=0.001,
        t_final=0.5,
        description=(
            "2D discontinuous initial block (c=1, p=5 on the unit square), z1=0.1; "
            "stable only with the limiter"
        ),
        notes="grid size is free in this example; 40x40 by default",
    )


def _example_6(q0: float) -> Preset:
    rate = float(q0)
    spec = ProblemSpec(
        dim=2,
        z1=0.4,
        z2=0.6,
        d_long=1.0,
        d_tran=1.0,
        c_inj=lambda x, y, t: np.ones_like(x),
        wells=(
            Well(x=TWO_PI, y=TWO_PI, rate=rate),
            Well(x=0.0, y=0.0, rate=-rate),
        ),
        name="well-pair-2d",
    )
    return Preset(
        example=6,
        spec=spec,
        c0=lambda x, y: np.full_like(x, 0.5),
        p0=lambda x, y: np.zeros_like(x),
        n_default=50,
        dt_factor=0.01,
        t_final=1.0,
        description=(
            "2D well pair: injection at (2pi, 2pi) with concentration 1, production "
            "at (0, 0), D = |u| I, z1=0.4, z2=0.6"
        ),
        notes=(
            "well strength q0 (default 1.0) is a free parameter; each well is smeared "
            "over its corner cell"
        ),
    )


def example_preset(example: int, gamma: float | None = None, q0: float = 1.0) -> Preset:
    """Return example ``example`` in 1..6; ``gamma`` defaults per example."""
    if example == 1:
        return _example_1(1e-5 if gamma is None else gamma)
    if example == 2:
        return _example_2(1.0 if gamma is None else gamma)
    if example == 3:
        return _example_3()
    if example == 4:
        return _example_4(1e-3 if gamma is None else gamma)
    if example == 5:
        return _example_5()
    if example == 6:
        return _example_6(q0)
    raise ValueError(f"unknown example {example}; choose 1-6")


def exact_solution(example: int, *coords, t: float, gamma: float | None = None):
    """(c, p) of the exact solution for the examples that have one (1 and 4)."""
    preset = example_preset(example, gamma=gamma)
    if preset.spec.c_exact is None:
        raise ValueError(f"example {example} has no closed-form solution")
    return (
        preset.spec.c_exact(*coords, t),
        preset.spec.p_exact(*coords, t),
    )
