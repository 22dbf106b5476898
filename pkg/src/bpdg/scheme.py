"""Second-order DG discretization of the miscible displacement system.

Unknowns per cell: pressure p, velocity u and the conserved concentration
variable r = I1{phi c}, all piecewise (bi)linear and stored by corner values.
One evaluation at state (r, p, t) produces (u, p_t, r_t) from the weak forms

    (a(c) u, eta)    = (p, div eta) + sum_{all edges} p_hat [eta . n]
    (d_tilde(r) p_t, xi) = (u, grad xi) + sum_{interior} u_hat [xi] + (q, xi)
    (r_t, zeta)      = (u c - D(u) grad c, grad zeta) + (c_inj q - r z1 p_t, zeta)
                       + sum_{interior} uc_hat [zeta]
                       - sum_{interior} ({D grad c . n}[zeta] + {D grad zeta . n}[c]
                                         + (alpha_t / |e|) [c][zeta])

with c = r / Phi at corners.  All inner products use the tensor two-point
Gauss rule; this exactness is what makes the cell-average split H^c + H^d +
H^s and the mirror identity (replacing r by Phi - r) hold to roundoff.

Numerical fluxes at interior edges come in three consistent pairs (the
``upwind+`` pair is the default):

    upwind+ : u_hat = u+, p_hat = p-, uc_hat = u+ c+ - alpha [c]
    upwind- : u_hat = u-, p_hat = p+, uc_hat = u- c- - alpha [c]
    central : u_hat = {u}, p_hat = {p}, uc_hat = (u+ c+ + u- c-)/2 - alpha [c]

On the boundary the no-flow condition sets u_hat = 0; p_hat takes the inner
trace (plus trace on the left/bottom part, minus trace on the right/top part).
Boundary edges never contribute convection/diffusion flux terms to p_t or r_t.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .field import (
    edge_values_2d,
    gauss_values_1d,
    gauss_values_2d,
    porosity_interpolant,
    traces_1d,
    traces_horizontal,
    traces_vertical,
)
from .mesh import SQRT3, Mesh1D, Mesh2D, gauss2
from .physics import (
    ProblemSpec,
    coeff_d_tilde,
    diffusion_scalar_1d,
    diffusion_tensor_2d,
    source_terms,
)


class SolverBreakdownError(RuntimeError):
    """A weighted mass matrix stopped being positive definite mid-run."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class FluxVariant(str, Enum):
    UPWIND_PLUS = "upwind+"
    UPWIND_MINUS = "upwind-"
    CENTRAL = "central"


def numerical_flux_uc(u_minus, u_plus, c_minus, c_plus, alpha, variant) -> np.ndarray:
    """Stabilized convection flux uc_hat at interior interfaces.

    All variants satisfy the consistency identity uc_hat(c == 1) = u_hat.
    """
    jump_c = c_plus - c_minus
    variant = FluxVariant(variant)
    if variant == FluxVariant.UPWIND_PLUS:
        return u_plus * c_plus - alpha * jump_c
    if variant == FluxVariant.UPWIND_MINUS:
        return u_minus * c_minus - alpha * jump_c
    return 0.5 * (u_plus * c_plus + u_minus * c_minus) - alpha * jump_c


def velocity_flux(u_minus, u_plus, variant) -> np.ndarray:
    """u_hat at interior interfaces."""
    variant = FluxVariant(variant)
    if variant == FluxVariant.UPWIND_PLUS:
        return np.asarray(u_plus).copy()
    if variant == FluxVariant.UPWIND_MINUS:
        return np.asarray(u_minus).copy()
    return 0.5 * (np.asarray(u_plus) + np.asarray(u_minus))


def pressure_flux(p_minus, p_plus, variant) -> np.ndarray:
    """p_hat at interior interfaces (pairs with velocity_flux)."""
    variant = FluxVariant(variant)
    if variant == FluxVariant.UPWIND_PLUS:
        return np.asarray(p_minus).copy()
    if variant == FluxVariant.UPWIND_MINUS:
        return np.asarray(p_plus).copy()
    return 0.5 * (np.asarray(p_plus) + np.asarray(p_minus))


def _solve_2x2(mat: np.ndarray, rhs: np.ndarray, t: float, label: str) -> np.ndarray:
    """Solve batched symmetric 2x2 systems; dets must stay positive."""
    det = mat[:, 0, 0] * mat[:, 1, 1] - mat[:, 0, 1] * mat[:, 1, 0]
    if det.min() <= 0.0 or not np.isfinite(det.min()):
        raise SolverBreakdownError(f"{label} mass matrix lost positivity", t)
    x0 = (mat[:, 1, 1] * rhs[:, 0] - mat[:, 0, 1] * rhs[:, 1]) / det
    x1 = (mat[:, 0, 0] * rhs[:, 1] - mat[:, 1, 0] * rhs[:, 0]) / det
    return np.stack([x0, x1], axis=1)


# =============================================================================
# one space dimension
# =============================================================================


@dataclass
class Derived1D:
    """Everything one scheme evaluation produces at a state (r, p, t)."""

    t: float
    r: np.ndarray
    p: np.ndarray
    c: np.ndarray
    u: np.ndarray
    p_t: np.ndarray
    r_t: np.ndarray
    u_minus: np.ndarray
    u_plus: np.ndarray
    u_hat: np.ndarray
    uc_hat: np.ndarray
    diff_flux: np.ndarray  # {D c_x} + (alpha_t/dx)[c], zero on boundary
    jump_c: np.ndarray
    D_minus: np.ndarray
    D_plus: np.ndarray
    q_gauss: np.ndarray
    pt_gauss: np.ndarray
    src_gauss: np.ndarray
    alpha: float
    alpha_tilde: float


@dataclass
class _Prep1D:
    t: float
    r: np.ndarray
    p: np.ndarray
    c: np.ndarray
    c_gauss: np.ndarray
    r_gauss: np.ndarray
    c_minus: np.ndarray
    c_plus: np.ndarray
    u: np.ndarray
    u_minus: np.ndarray
    u_plus: np.ndarray
    u_hat: np.ndarray
    D_gauss: np.ndarray
    D_minus: np.ndarray
    D_plus: np.ndarray
    slope_c: np.ndarray
    p_t: np.ndarray
    pt_gauss: np.ndarray
    q_gauss: np.ndarray
    src_gauss: np.ndarray


class Scheme1D:
    """DG spatial operator on a 1D mesh for a fixed problem spec."""

    def __init__(self, mesh: Mesh1D, spec: ProblemSpec,
                 flux: FluxVariant | str = FluxVariant.UPWIND_PLUS):
        if spec.dim != 1:
            raise ValueError("Scheme1D needs a 1D problem spec")
        self.mesh = mesh
        self.spec = spec
        self.flux = FluxVariant(flux)

        rule = gauss2()
        self._G = rule.corner_to_gauss
        self._w = rule.weights
        # B[g, a, b] = w_g G[g, a] G[g, b) assembles weighted mass matrices
        self._B = self._w[:, None, None] * self._G[:, :, None] * self._G[:, None, :]
        # S[g, a] = w_g G[g, a] projects Gauss data onto the two basis functions
        self._S = self._w[:, None] * self._G

        self.Phi = porosity_interpolant(mesh, spec.phi).values  # (n, 2)
        self.Phi_gauss = gauss_values_1d(self.Phi)
        iface = np.empty(mesh.n_cells + 1)
        iface[:-1] = self.Phi[:, 0]
        iface[-1] = self.Phi[-1, 1]
        self.Phi_iface = iface  # continuous porosity at interfaces

        self.x_gauss = mesh.gauss_coords()
        kappa_g = np.asarray(spec.kappa(self.x_gauss), dtype=float)
        if kappa_g.min() <= 0.0:
            raise ValueError("permeability must be positive on the mesh")
        self.kappa_gauss = kappa_g
        self.phi_gauss_fn = np.asarray(spec.phi(self.x_gauss), dtype=float)
        self.phi_iface_fn = np.asarray(spec.phi(mesh.interfaces), dtype=float)

        # constant-in-time weighted mass matrices can be assembled once
        self._vel_mass: Optional[np.ndarray] = None
        if spec.mu_constant:
            mu0 = float(np.asarray(spec.mu(np.array([0.5])))[0])
            a_g = mu0 / kappa_g
            self._vel_mass = mesh.dx * np.einsum("ng,gab->nab", a_g, self._B)
        self._pt_mass: Optional[np.ndarray] = None
        if spec.z1 == spec.z2:
            dt_g = spec.z1 * self.Phi_gauss
            self._pt_mass = mesh.dx * np.einsum("ng,gab->nab", dt_g, self._B)

    # -- the three solves ----------------------------------------------------

    def solve_velocity(self, p: np.ndarray, c: np.ndarray, t: float) -> np.ndarray:
        """Velocity corner values from (a(c) u, eta) = (p, eta_x) + p_hat terms."""
        if self._vel_mass is not None:
            mass = self._vel_mass
        else:
            c_g = gauss_values_1d(c)
            a_g = np.asarray(self.spec.mu(c_g), dtype=float) / self.kappa_gauss
            mass = self.mesh.dx * np.einsum("ng,gab->nab", a_g, self._B)

        p_minus, p_plus = traces_1d(p)
        n = self.mesh.n_cells
        p_hat = np.empty(n + 1)
        p_hat[1:n] = pressure_flux(p_minus[1:n], p_plus[1:n], self.flux)
        p_hat[0] = p_plus[0]  # inflow-style boundary: inner trace is the plus one
        p_hat[n] = p_minus[n]

        p_bar = p.mean(axis=1)
        rhs = np.stack([-p_bar + p_hat[:-1], p_bar - p_hat[1:]], axis=1)
        return _solve_2x2(mass, rhs, t, "velocity")

    def solve_pressure_rate(self, u: np.ndarray, r: np.ndarray, t: float) -> np.ndarray:
        """p_t corner values from the weighted-compressibility mass solve."""
        if self._pt_mass is not None:
            mass = self._pt_mass
        else:
            r_g = gauss_values_1d(r)
            dt_g = coeff_d_tilde(r_g, self.Phi_gauss, self.spec)
            mass = self.mesh.dx * np.einsum("ng,gab->nab", dt_g, self._B)

        u_minus, u_plus = traces_1d(u)
        n = self.mesh.n_cells
        u_hat = np.zeros(n + 1)  # boundary flux is 0: no flow through the ends
        u_hat[1:n] = velocity_flux(u_minus[1:n], u_plus[1:n], self.flux)

        u_bar = u.mean(axis=1)
        rhs = np.stack([-u_bar + u_hat[:-1], u_bar - u_hat[1:]], axis=1)
        rhs += self.mesh.dx * (self._q_gauss(t) @ self._S)
        return _solve_2x2(mass, rhs, t, "pressure-rate")

    def concentration_rhs(self, r: np.ndarray, c: np.ndarray, u: np.ndarray,
                          p_t: np.ndarray, t: float,
                          alpha: float, alpha_tilde: float) -> np.ndarray:
        """r_t corner values for given velocity and pressure rate."""
        prep = self._prep_from_parts(r, c, u, p_t, t)
        return self.finalize(prep, alpha, alpha_tilde).r_t

    # -- full evaluation in two phases ---------------------------------------

    def prepare(self, r: np.ndarray, p: np.ndarray, t: float) -> _Prep1D:
        """Penalty-independent part: c, u, p_t, traces and source samples."""
        c = r / self.Phi
        u = self.solve_velocity(p, c, t)
        p_t = self.solve_pressure_rate(u, r, t)
        return self._prep_from_parts(r, c, u, p_t, t, p=p)

    def _prep_from_parts(self, r, c, u, p_t, t, p=None) -> _Prep1D:
        c_gauss = gauss_values_1d(c)
        r_gauss = gauss_values_1d(r)
        c_minus, c_plus = traces_1d(c)
        u_minus, u_plus = traces_1d(u)
        n = self.mesh.n_cells

        u_hat = np.zeros(n + 1)
        u_hat[1:n] = velocity_flux(u_minus[1:n], u_plus[1:n], self.flux)

        D_gauss = diffusion_scalar_1d(gauss_values_1d(u), self.phi_gauss_fn, self.spec)
        D_minus = diffusion_scalar_1d(u_minus, self.phi_iface_fn, self.spec)
        D_plus = diffusion_scalar_1d(u_plus, self.phi_iface_fn, self.spec)
        D_minus[0] = 0.0  # missing traces carry no diffusion data
        D_plus[n] = 0.0

        slope_c = (c[:, 1] - c[:, 0]) / self.mesh.dx

        pt_gauss = gauss_values_1d(p_t)
        q_gauss = self._q_gauss(t)
        c_inj = (
            np.asarray(self.spec.c_inj(self.x_gauss, t), dtype=float)
            if self.spec.c_inj is not None
            else np.zeros_like(q_gauss)
        )
        ctilde = source_terms(q_gauss, c_inj, c_gauss)
        src_gauss = ctilde * q_gauss - r_gauss * self.spec.z1 * pt_gauss

        return _Prep1D(
            t=t, r=r, p=p, c=c, c_gauss=c_gauss, r_gauss=r_gauss,
            c_minus=c_minus, c_plus=c_plus, u=u, u_minus=u_minus, u_plus=u_plus,
            u_hat=u_hat, D_gauss=D_gauss, D_minus=D_minus, D_plus=D_plus,
            slope_c=slope_c, p_t=p_t, pt_gauss=pt_gauss, q_gauss=q_gauss,
            src_gauss=src_gauss,
        )

    def penalty_floor(self, prep: _Prep1D) -> tuple[float, float]:
        """Smallest admissible (alpha, alpha_tilde) for this state.

        The default flux pair needs alpha above every interior plus-trace of
        u; the mirrored/central pairs are covered by using both traces.
        """
        n = self.mesh.n_cells
        if self.flux == FluxVariant.UPWIND_PLUS:
            umax = float(np.max(prep.u_plus[1:n], initial=0.0))
        else:
            umax = float(
                max(
                    np.max(np.abs(prep.u_plus[1:n]), initial=0.0),
                    np.max(np.abs(prep.u_minus[1:n]), initial=0.0),
                )
            )
        d_max = float(
            max(
                np.max(prep.D_minus[1:n], initial=0.0),
                np.max(prep.D_plus[1:n], initial=0.0),
            )
        )
        return max(umax, 0.0), 0.5 * d_max

    def finalize(self, prep: _Prep1D, alpha: float, alpha_tilde: float) -> Derived1D:
        n = self.mesh.n_cells
        dx = self.mesh.dx

        jump_c = prep.c_plus - prep.c_minus
        jump_c[0] = 0.0
        jump_c[n] = 0.0

        uc_hat = np.zeros(n + 1)
        uc_hat[1:n] = numerical_flux_uc(
            prep.u_minus[1:n], prep.u_plus[1:n],
            prep.c_minus[1:n], prep.c_plus[1:n], alpha, self.flux,
        )

        diff_flux = np.zeros(n + 1)
        diff_flux[1:n] = (
            0.5 * (prep.D_minus[1:n] * prep.slope_c[:-1]
                   + prep.D_plus[1:n] * prep.slope_c[1:])
            + (alpha_tilde / dx) * jump_c[1:n]
        )

        # {D zeta_x}[c] pieces: the cell's own derivative trace on each side
        dz_left = 0.5 * (prep.D_plus * jump_c)[:-1]
        dz_right = 0.5 * (prep.D_minus * jump_c)[1:]
        dzeta = (dz_left + dz_right) / dx

        flux_gauss = gauss_values_1d(prep.u) * prep.c_gauss \
            - prep.D_gauss * prep.slope_c[:, None]
        vol = flux_gauss @ self._w

        src_proj = dx * (prep.src_gauss @ self._S)
        rhs0 = -vol + uc_hat[:-1] - diff_flux[:-1] + dzeta + src_proj[:, 0]
        rhs1 = vol - uc_hat[1:] + diff_flux[1:] - dzeta + src_proj[:, 1]

        r_t = np.stack(
            [(4.0 * rhs0 - 2.0 * rhs1) / dx, (-2.0 * rhs0 + 4.0 * rhs1) / dx],
            axis=1,
        )

        return Derived1D(
            t=prep.t, r=prep.r, p=prep.p, c=prep.c, u=prep.u, p_t=prep.p_t,
            r_t=r_t, u_minus=prep.u_minus, u_plus=prep.u_plus, u_hat=prep.u_hat,
            uc_hat=uc_hat, diff_flux=diff_flux, jump_c=jump_c,
            D_minus=prep.D_minus, D_plus=prep.D_plus, q_gauss=prep.q_gauss,
            pt_gauss=prep.pt_gauss, src_gauss=prep.src_gauss,
            alpha=alpha, alpha_tilde=alpha_tilde,
        )

    def evaluate(self, r: np.ndarray, p: np.ndarray, t: float,
                 alpha: float, alpha_tilde: float) -> Derived1D:
        return self.finalize(self.prepare(r, p, t), alpha, alpha_tilde)

    def cell_average_decomposition(self, derived: Derived1D, dt: float):
        """Split mean(r + dt r_t) into the convection/diffusion/source thirds."""
        lam = dt / self.mesh.dx
        r_bar = derived.r.mean(axis=1)
        h_conv = r_bar / 3.0 + lam * (derived.uc_hat[:-1] - derived.uc_hat[1:])
        h_diff = r_bar / 3.0 - lam * (derived.diff_flux[:-1] - derived.diff_flux[1:])
        h_src = r_bar / 3.0 + dt * (derived.src_gauss @ self._w)
        return h_conv, h_diff, h_src

    def _q_gauss(self, t: float) -> np.ndarray:
        if self.spec.q is None:
            return np.zeros_like(self.x_gauss)
        return np.asarray(self.spec.q(self.x_gauss, t), dtype=float)


# =============================================================================
# two space dimensions
# =============================================================================


@dataclass
class Derived2D:
    t: float
    r: np.ndarray
    p: np.ndarray
    c: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    p_t: np.ndarray
    r_t: np.ndarray
    u1_minus: np.ndarray  # (nx+1, ny, 2) traces at vertical edge Gauss points
    u1_plus: np.ndarray
    u2_minus: np.ndarray  # (nx, ny+1, 2) traces at horizontal edge Gauss points
    u2_plus: np.ndarray
    uc_v: np.ndarray
    uc_h: np.ndarray
    diff_v: np.ndarray
    diff_h: np.ndarray
    jump_c_v: np.ndarray
    jump_c_h: np.ndarray
    d11_max: float  # interior-trace maxima of the diffusion tensor components
    d12_max: float
    d21_max: float
    d22_max: float
    q_gauss: np.ndarray
    pt_gauss: np.ndarray
    src_gauss: np.ndarray
    alpha: float
    alpha_tilde: float


@dataclass
class _Prep2D:
    t: float
    r: np.ndarray
    p: np.ndarray
    c: np.ndarray
    c_gauss: np.ndarray
    r_gauss: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u1_V: np.ndarray
    u2_V: np.ndarray
    cv_minus: np.ndarray
    cv_plus: np.ndarray
    ch_minus: np.ndarray
    ch_plus: np.ndarray
    u1v_minus: np.ndarray
    u1v_plus: np.ndarray
    u2v_minus: np.ndarray
    u2v_plus: np.ndarray
    u1h_minus: np.ndarray
    u1h_plus: np.ndarray
    u2h_minus: np.ndarray
    u2h_plus: np.ndarray
    uhat_v: np.ndarray
    uhat_h: np.ndarray
    p_t: np.ndarray
    pt_gauss: np.ndarray
    q_gauss: np.ndarray
    src_gauss: np.ndarray


class Scheme2D:
    """DG spatial operator on a 2D mesh for a fixed problem spec."""

    def __init__(self, mesh: Mesh2D, spec: ProblemSpec,
                 flux: FluxVariant | str = FluxVariant.UPWIND_PLUS):
        if spec.dim != 2:
            raise ValueError("Scheme2D needs a 2D problem spec")
        self.mesh = mesh
        self.spec = spec
        self.flux = FluxVariant(flux)

        rule = gauss2()
        G, w = rule.corner_to_gauss, rule.weights
        self._G, self._w = G, w

        # P[g, h, m] = value of basis m = 2a + b at volume Gauss point (g, h)
        P = np.zeros((2, 2, 4))
        DXP = np.zeros((2, 2, 4))
        DYP = np.zeros((2, 2, 4))
        WP2 = np.zeros((2, 2, 4))
        for a in range(2):
            for b in range(2):
                m = 2 * a + b
                P[:, :, m] = G[:, a][:, None] * G[:, b][None, :]
                DXP[:, :, m] = (2 * a - 1) * (w[:, None] * w[None, :]) * G[:, b][None, :]
                DYP[:, :, m] = (2 * b - 1) * (w[:, None] * w[None, :]) * G[:, a][:, None]
                WP2[:, :, m] = (w[:, None] * w[None, :]) * P[:, :, m]
        WPP = (w[:, None] * w[None, :])[:, :, None, None] * P[:, :, :, None] * P[:, :, None, :]
        self._P, self._DXP, self._DYP, self._WP2, self._WPP = P, DXP, DYP, WP2, WPP

        # edge projection tensors: [beta, m] weights of edge Gauss data
        EL = np.zeros((2, 4))
        ER = np.zeros((2, 4))
        EB = np.zeros((2, 4))
        ET = np.zeros((2, 4))
        T1v = np.zeros((2, 4))
        T2vL = np.zeros((2, 4))
        T2vR = np.zeros((2, 4))
        T1h = np.zeros((2, 4))
        T2hB = np.zeros((2, 4))
        T2hT = np.zeros((2, 4))
        for a in range(2):
            for b in range(2):
                m = 2 * a + b
                EL[:, m] = (a == 0) * w * G[:, b]
                ER[:, m] = (a == 1) * w * G[:, b]
                EB[:, m] = (b == 0) * w * G[:, a]
                ET[:, m] = (b == 1) * w * G[:, a]
                T1v[:, m] = w * (2 * a - 1) / mesh.dx * G[:, b]
                T2vL[:, m] = w * (a == 0) * (2 * b - 1) / mesh.dy
                T2vR[:, m] = w * (a == 1) * (2 * b - 1) / mesh.dy
                T1h[:, m] = w * (2 * b - 1) / mesh.dy * G[:, a]
                T2hB[:, m] = w * (b == 0) * (2 * a - 1) / mesh.dx
                T2hT[:, m] = w * (b == 1) * (2 * a - 1) / mesh.dx
        self._EL, self._ER, self._EB, self._ET = EL, ER, EB, ET
        self._T1v, self._T2vL, self._T2vR = T1v, T2vL, T2vR
        self._T1h, self._T2hB, self._T2hT = T1h, T2hB, T2hT

        mx = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
        mxinv = np.array([[4.0, -2.0], [-2.0, 4.0]])
        self._M0inv = np.kron(mxinv, mxinv) / (mesh.dx * mesh.dy)

        self.Phi = porosity_interpolant(mesh, spec.phi).values
        self.Phi_gauss = gauss_values_2d(self.Phi)
        nodes_x, nodes_y = np.meshgrid(mesh.x_interfaces, mesh.y_interfaces, indexing="ij")
        self.Phi_node = np.asarray(spec.phi(nodes_x, nodes_y), dtype=float)
        if self.Phi_node.shape != nodes_x.shape:
            self.Phi_node = np.broadcast_to(self.Phi_node, nodes_x.shape).astype(float)

        self.Xg, self.Yg = mesh.gauss_coords()
        kappa_g = np.asarray(spec.kappa(self.Xg, self.Yg), dtype=float)
        if kappa_g.min() <= 0.0:
            raise ValueError("permeability must be positive on the mesh")
        self.kappa_gauss = kappa_g
        self.phi_gauss_fn = np.asarray(spec.phi(self.Xg, self.Yg), dtype=float)
        Xv, Yv = mesh.vertical_edge_gauss_coords()
        Xh, Yh = mesh.horizontal_edge_gauss_coords()
        self.phi_vedge = np.asarray(spec.phi(Xv, Yv), dtype=float)
        self.phi_hedge = np.asarray(spec.phi(Xh, Yh), dtype=float)

        # point wells smeared over the containing cell
        self._well_cells: list[tuple[int, int, float]] = []
        for well in spec.wells:
            i = min(int((well.x - mesh.x_lo) / mesh.dx), mesh.nx - 1)
            j = min(int((well.y - mesh.y_lo) / mesh.dy), mesh.ny - 1)
            self._well_cells.append((i, j, well.rate / (mesh.dx * mesh.dy)))

        self._vel_mass_inv: Optional[np.ndarray] = None
        if spec.mu_constant:
            mu0 = float(np.asarray(spec.mu(np.array([0.5])))[0])
            a_g = mu0 / kappa_g
            mass = mesh.dx * mesh.dy * np.einsum("ijgh,ghmk->ijmk", a_g, WPP)
            self._vel_mass_inv = np.linalg.inv(mass)
        self._pt_mass_inv: Optional[np.ndarray] = None
        if spec.z1 == spec.z2:
            dt_g = spec.z1 * self.Phi_gauss
            mass = mesh.dx * mesh.dy * np.einsum("ijgh,ghmk->ijmk", dt_g, WPP)
            self._pt_mass_inv = np.linalg.inv(mass)

    # -- helpers --------------------------------------------------------------

    def _corner_shape(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(self.mesh.nx, self.mesh.ny, 2, 2)

    def _solve_mass(self, weight_V: Optional[np.ndarray], cached_inv: Optional[np.ndarray],
                    rhs: np.ndarray, t: float, label: str) -> np.ndarray:
        if cached_inv is not None:
            sol = np.einsum("ijmk,ijk...->ijm...", cached_inv, rhs)
        else:
            mass = self.mesh.dx * self.mesh.dy * np.einsum(
                "ijgh,ghmk->ijmk", weight_V, self._WPP, optimize=True
            )
            try:
                if rhs.ndim == mass.ndim - 1:  # vector rhs per cell
                    sol = np.linalg.solve(mass, rhs[..., None])[..., 0]
                else:
                    sol = np.linalg.solve(mass, rhs)
            except np.linalg.LinAlgError as exc:
                raise SolverBreakdownError(f"{label} mass matrix singular", t) from exc
        if not np.all(np.isfinite(sol)):
            raise SolverBreakdownError(f"{label} solve produced non-finite values", t)
        return sol

    def _q_gauss(self, t: float) -> np.ndarray:
        if self.spec.q is None:
            q = np.zeros_like(self.Xg)
        else:
            q = np.asarray(self.spec.q(self.Xg, self.Yg, t), dtype=float).copy()
        for i, j, density in self._well_cells:
            q[i, j] += density
        return q

    # -- the three solves ------------------------------------------------------

    def solve_velocity(self, p: np.ndarray, c: np.ndarray, t: float):
        """Both velocity components from the weighted vector mass solve."""
        nx, ny = self.mesh.nx, self.mesh.ny
        dx, dy = self.mesh.dx, self.mesh.dy

        pv_minus, pv_plus = traces_vertical(p)
        ph_minus, ph_plus = traces_horizontal(p)
        phat_v = np.empty((nx + 1, ny, 2))
        phat_v[1:nx] = pressure_flux(pv_minus[1:nx], pv_plus[1:nx], self.flux)
        phat_v[0] = pv_plus[0]
        phat_v[nx] = pv_minus[nx]
        phat_h = np.empty((nx, ny + 1, 2))
        phat_h[:, 1:ny] = pressure_flux(ph_minus[:, 1:ny], ph_plus[:, 1:ny], self.flux)
        phat_h[:, 0] = ph_plus[:, 0]
        phat_h[:, ny] = ph_minus[:, ny]

        p_V = gauss_values_2d(p)
        rhs1 = dy * np.einsum("ijgh,ghm->ijm", p_V, self._DXP, optimize=True)
        rhs1 += dy * np.einsum("ijb,bm->ijm", phat_v[:nx], self._EL)
        rhs1 -= dy * np.einsum("ijb,bm->ijm", phat_v[1:], self._ER)
        rhs2 = dx * np.einsum("ijgh,ghm->ijm", p_V, self._DYP, optimize=True)
        rhs2 += dx * np.einsum("ijb,bm->ijm", phat_h[:, :ny], self._EB)
        rhs2 -= dx * np.einsum("ijb,bm->ijm", phat_h[:, 1:], self._ET)

        if self._vel_mass_inv is not None:
            weight = None
        else:
            c_V = gauss_values_2d(c)
            weight = np.asarray(self.spec.mu(c_V), dtype=float) / self.kappa_gauss
        sol = self._solve_mass(
            weight, self._vel_mass_inv, np.stack([rhs1, rhs2], axis=-1), t, "velocity"
        )
        return self._corner_shape(sol[..., 0]), self._corner_shape(sol[..., 1])

    def solve_pressure_rate(self, u1: np.ndarray, u2: np.ndarray,
                            r: np.ndarray, t: float) -> np.ndarray:
        nx, ny = self.mesh.nx, self.mesh.ny
        dx, dy = self.mesh.dx, self.mesh.dy

        u1v_minus, u1v_plus = traces_vertical(u1)
        u2h_minus, u2h_plus = traces_horizontal(u2)
        uhat_v = np.zeros((nx + 1, ny, 2))
        uhat_v[1:nx] = velocity_flux(u1v_minus[1:nx], u1v_plus[1:nx], self.flux)
        uhat_h = np.zeros((nx, ny + 1, 2))
        uhat_h[:, 1:ny] = velocity_flux(u2h_minus[:, 1:ny], u2h_plus[:, 1:ny], self.flux)

        u1_V = gauss_values_2d(u1)
        u2_V = gauss_values_2d(u2)
        rhs = dy * np.einsum("ijgh,ghm->ijm", u1_V, self._DXP, optimize=True)
        rhs += dx * np.einsum("ijgh,ghm->ijm", u2_V, self._DYP, optimize=True)
        rhs += dy * np.einsum("ijb,bm->ijm", uhat_v[:nx], self._EL)
        rhs -= dy * np.einsum("ijb,bm->ijm", uhat_v[1:], self._ER)
        rhs += dx * np.einsum("ijb,bm->ijm", uhat_h[:, :ny], self._EB)
        rhs -= dx * np.einsum("ijb,bm->ijm", uhat_h[:, 1:], self._ET)
        rhs += dx * dy * np.einsum("ijgh,ghm->ijm", self._q_gauss(t), self._WP2, optimize=True)

        if self._pt_mass_inv is not None:
            weight = None
        else:
            r_V = gauss_values_2d(r)
            weight = coeff_d_tilde(r_V, self.Phi_gauss, self.spec)
        sol = self._solve_mass(weight, self._pt_mass_inv, rhs, t, "pressure-rate")
        return self._corner_shape(sol)

    def concentration_rhs(self, r: np.ndarray, c: np.ndarray, u1: np.ndarray,
                          u2: np.ndarray, p_t: np.ndarray, t: float,
                          alpha: float, alpha_tilde: float) -> np.ndarray:
        prep = self._prep_from_parts(r, c, u1, u2, p_t, t)
        return self.finalize(prep, alpha, alpha_tilde).r_t

    # -- two-phase evaluation ---------------------------------------------------

    def prepare(self, r: np.ndarray, p: np.ndarray, t: float) -> _Prep2D:
        c = r / self.Phi
        u1, u2 = self.solve_velocity(p, c, t)
        p_t = self.solve_pressure_rate(u1, u2, r, t)
        return self._prep_from_parts(r, c, u1, u2, p_t, t, p=p)

    def _prep_from_parts(self, r, c, u1, u2, p_t, t, p=None) -> _Prep2D:
        nx, ny = self.mesh.nx, self.mesh.ny
        c_gauss = gauss_values_2d(c)
        r_gauss = gauss_values_2d(r)
        cv_minus, cv_plus = traces_vertical(c)
        ch_minus, ch_plus = traces_horizontal(c)
        u1v_minus, u1v_plus = traces_vertical(u1)
        u2v_minus, u2v_plus = traces_vertical(u2)
        u1h_minus, u1h_plus = traces_horizontal(u1)
        u2h_minus, u2h_plus = traces_horizontal(u2)

        uhat_v = np.zeros((nx + 1, ny, 2))
        uhat_v[1:nx] = velocity_flux(u1v_minus[1:nx], u1v_plus[1:nx], self.flux)
        uhat_h = np.zeros((nx, ny + 1, 2))
        uhat_h[:, 1:ny] = velocity_flux(u2h_minus[:, 1:ny], u2h_plus[:, 1:ny], self.flux)

        pt_gauss = gauss_values_2d(p_t)
        q_gauss = self._q_gauss(t)
        if self.spec.c_inj is not None:
            c_inj = np.asarray(self.spec.c_inj(self.Xg, self.Yg, t), dtype=float)
        else:
            c_inj = np.zeros_like(q_gauss)
        ctilde = source_terms(q_gauss, c_inj, c_gauss)
        src_gauss = ctilde * q_gauss - r_gauss * self.spec.z1 * pt_gauss

        return _Prep2D(
            t=t, r=r, p=p, c=c, c_gauss=c_gauss, r_gauss=r_gauss,
            u1=u1, u2=u2,
            u1_V=gauss_values_2d(u1), u2_V=gauss_values_2d(u2),
            cv_minus=cv_minus, cv_plus=cv_plus, ch_minus=ch_minus, ch_plus=ch_plus,
            u1v_minus=u1v_minus, u1v_plus=u1v_plus,
            u2v_minus=u2v_minus, u2v_plus=u2v_plus,
            u1h_minus=u1h_minus, u1h_plus=u1h_plus,
            u2h_minus=u2h_minus, u2h_plus=u2h_plus,
            uhat_v=uhat_v, uhat_h=uhat_h,
            p_t=p_t, pt_gauss=pt_gauss, q_gauss=q_gauss, src_gauss=src_gauss,
        )

    def _edge_diffusion(self, prep: _Prep2D):
        """One-sided diffusion tensors at interior edge Gauss points."""
        spec = self.spec
        d11_vm, d12_vm, _ = diffusion_tensor_2d(
            prep.u1v_minus, prep.u2v_minus, self.phi_vedge, spec
        )
        d11_vp, d12_vp, _ = diffusion_tensor_2d(
            prep.u1v_plus, prep.u2v_plus, self.phi_vedge, spec
        )
        _, d12_hm, d22_hm = diffusion_tensor_2d(
            prep.u1h_minus, prep.u2h_minus, self.phi_hedge, spec
        )
        _, d12_hp, d22_hp = diffusion_tensor_2d(
            prep.u1h_plus, prep.u2h_plus, self.phi_hedge, spec
        )
        return (d11_vm, d12_vm, d11_vp, d12_vp,
                d12_hm, d22_hm, d12_hp, d22_hp)

    def penalty_floor(self, prep: _Prep2D) -> tuple[float, float]:
        nx, ny = self.mesh.nx, self.mesh.ny
        if self.flux == FluxVariant.UPWIND_PLUS:
            umax = max(
                float(np.max(prep.u1v_plus[1:nx], initial=0.0)),
                float(np.max(prep.u2h_plus[:, 1:ny], initial=0.0)),
            )
        else:
            umax = max(
                float(np.max(np.abs(prep.u1v_plus[1:nx]), initial=0.0)),
                float(np.max(np.abs(prep.u1v_minus[1:nx]), initial=0.0)),
                float(np.max(np.abs(prep.u2h_plus[:, 1:ny]), initial=0.0)),
                float(np.max(np.abs(prep.u2h_minus[:, 1:ny]), initial=0.0)),
            )
        d11, d12, d21, d22 = self._tensor_maxima(prep)
        dx, dy = self.mesh.dx, self.mesh.dy
        atil = max(
            (dy / (2.0 * dx)) * d11 + SQRT3 * d12,
            (dx / (2.0 * dy)) * d22 + SQRT3 * d21,
        )
        return max(umax, 0.0), atil

    def _tensor_maxima(self, prep: _Prep2D) -> tuple[float, float, float, float]:
        nx, ny = self.mesh.nx, self.mesh.ny
        (d11_vm, d12_vm, d11_vp, d12_vp,
         d12_hm, d22_hm, d12_hp, d22_hp) = self._edge_diffusion(prep)
        d11 = max(
            float(np.max(d11_vm[1:nx], initial=0.0)),
            float(np.max(d11_vp[1:nx], initial=0.0)),
        )
        d12 = max(
            float(np.max(np.abs(d12_vm[1:nx]), initial=0.0)),
            float(np.max(np.abs(d12_vp[1:nx]), initial=0.0)),
        )
        d21 = max(
            float(np.max(np.abs(d12_hm[:, 1:ny]), initial=0.0)),
            float(np.max(np.abs(d12_hp[:, 1:ny]), initial=0.0)),
        )
        d22 = max(
            float(np.max(d22_hm[:, 1:ny], initial=0.0)),
            float(np.max(d22_hp[:, 1:ny], initial=0.0)),
        )
        return d11, d12, d21, d22

    def finalize(self, prep: _Prep2D, alpha: float, alpha_tilde: float) -> Derived2D:
        nx, ny = self.mesh.nx, self.mesh.ny
        dx, dy = self.mesh.dx, self.mesh.dy
        c = prep.c

        jump_c_v = prep.cv_plus - prep.cv_minus
        jump_c_v[0] = 0.0
        jump_c_v[nx] = 0.0
        jump_c_h = prep.ch_plus - prep.ch_minus
        jump_c_h[:, 0] = 0.0
        jump_c_h[:, ny] = 0.0

        uc_v = np.zeros((nx + 1, ny, 2))
        uc_v[1:nx] = numerical_flux_uc(
            prep.u1v_minus[1:nx], prep.u1v_plus[1:nx],
            prep.cv_minus[1:nx], prep.cv_plus[1:nx], alpha, self.flux,
        )
        uc_h = np.zeros((nx, ny + 1, 2))
        uc_h[:, 1:ny] = numerical_flux_uc(
            prep.u2h_minus[:, 1:ny], prep.u2h_plus[:, 1:ny],
            prep.ch_minus[:, 1:ny], prep.ch_plus[:, 1:ny], alpha, self.flux,
        )

        # derivative traces of the bilinear c: cE/cW give c_x as a function of
        # y; corner differences give the edge-constant tangential derivatives
        cW, cE, cS, cN = edge_values_2d(c)
        cx_cell = (cE - cW) / dx  # (nx, ny, beta) with beta along y
        cy_cell = (cN - cS) / dy  # (nx, ny, beta) with beta along x

        cx_vm = np.zeros((nx + 1, ny, 2))
        cx_vm[1:] = cx_cell
        cx_vp = np.zeros((nx + 1, ny, 2))
        cx_vp[:nx] = cx_cell
        cy_vm = np.zeros((nx + 1, ny, 2))
        cy_vm[1:] = ((c[:, :, 1, 1] - c[:, :, 1, 0]) / dy)[:, :, None]
        cy_vp = np.zeros((nx + 1, ny, 2))
        cy_vp[:nx] = ((c[:, :, 0, 1] - c[:, :, 0, 0]) / dy)[:, :, None]

        cy_hm = np.zeros((nx, ny + 1, 2))
        cy_hm[:, 1:] = cy_cell
        cy_hp = np.zeros((nx, ny + 1, 2))
        cy_hp[:, :ny] = cy_cell
        cx_hm = np.zeros((nx, ny + 1, 2))
        cx_hm[:, 1:] = ((c[:, :, 1, 1] - c[:, :, 0, 1]) / dx)[:, :, None]
        cx_hp = np.zeros((nx, ny + 1, 2))
        cx_hp[:, :ny] = ((c[:, :, 1, 0] - c[:, :, 0, 0]) / dx)[:, :, None]

        (d11_vm, d12_vm, d11_vp, d12_vp,
         d12_hm, d22_hm, d12_hp, d22_hp) = self._edge_diffusion(prep)

        diff_v = np.zeros((nx + 1, ny, 2))
        diff_v[1:nx] = 0.5 * (
            d11_vm[1:nx] * cx_vm[1:nx] + d12_vm[1:nx] * cy_vm[1:nx]
            + d11_vp[1:nx] * cx_vp[1:nx] + d12_vp[1:nx] * cy_vp[1:nx]
        ) + (alpha_tilde / dy) * jump_c_v[1:nx]
        diff_h = np.zeros((nx, ny + 1, 2))
        diff_h[:, 1:ny] = 0.5 * (
            d12_hm[:, 1:ny] * cx_hm[:, 1:ny] + d22_hm[:, 1:ny] * cy_hm[:, 1:ny]
            + d12_hp[:, 1:ny] * cx_hp[:, 1:ny] + d22_hp[:, 1:ny] * cy_hp[:, 1:ny]
        ) + (alpha_tilde / dx) * jump_c_h[:, 1:ny]

        # volume convection-diffusion flux at the 2x2 Gauss points
        phi_V = self.phi_gauss_fn
        d11_V, d12_V, d22_V = diffusion_tensor_2d(prep.u1_V, prep.u2_V, phi_V, self.spec)
        cx_V = cx_cell[:, :, None, :]  # broadcast over the x Gauss index
        cy_V = cy_cell[:, :, :, None]
        F1 = prep.u1_V * prep.c_gauss - d11_V * cx_V - d12_V * cy_V
        F2 = prep.u2_V * prep.c_gauss - d12_V * cx_V - d22_V * cy_V

        rhs = dy * np.einsum("ijgh,ghm->ijm", F1, self._DXP, optimize=True)
        rhs += dx * np.einsum("ijgh,ghm->ijm", F2, self._DYP, optimize=True)
        rhs += dy * np.einsum("ijb,bm->ijm", uc_v[:nx] - diff_v[:nx], self._EL)
        rhs -= dy * np.einsum("ijb,bm->ijm", uc_v[1:] - diff_v[1:], self._ER)
        rhs += dx * np.einsum("ijb,bm->ijm", uc_h[:, :ny] - diff_h[:, :ny], self._EB)
        rhs -= dx * np.einsum("ijb,bm->ijm", uc_h[:, 1:] - diff_h[:, 1:], self._ET)

        # {D grad zeta . n}[c] pieces, one-sided tensors on the cell's own side
        A_L = 0.5 * d11_vp[:nx] * jump_c_v[:nx]
        B_L = 0.5 * d12_vp[:nx] * jump_c_v[:nx]
        A_R = 0.5 * d11_vm[1:] * jump_c_v[1:]
        B_R = 0.5 * d12_vm[1:] * jump_c_v[1:]
        rhs -= dy * (np.einsum("ijb,bm->ijm", A_L, self._T1v)
                     + np.einsum("ijb,bm->ijm", B_L, self._T2vL))
        rhs -= dy * (np.einsum("ijb,bm->ijm", A_R, self._T1v)
                     + np.einsum("ijb,bm->ijm", B_R, self._T2vR))
        P_B = 0.5 * d12_hp[:, :ny] * jump_c_h[:, :ny]
        Q_B = 0.5 * d22_hp[:, :ny] * jump_c_h[:, :ny]
        P_T = 0.5 * d12_hm[:, 1:] * jump_c_h[:, 1:]
        Q_T = 0.5 * d22_hm[:, 1:] * jump_c_h[:, 1:]
        rhs -= dx * (np.einsum("ijb,bm->ijm", Q_B, self._T1h)
                     + np.einsum("ijb,bm->ijm", P_B, self._T2hB))
        rhs -= dx * (np.einsum("ijb,bm->ijm", Q_T, self._T1h)
                     + np.einsum("ijb,bm->ijm", P_T, self._T2hT))

        rhs += dx * dy * np.einsum("ijgh,ghm->ijm", prep.src_gauss, self._WP2, optimize=True)

        r_t = self._corner_shape(np.einsum("mk,ijk->ijm", self._M0inv, rhs))

        d11, d12, d21, d22 = self._tensor_maxima(prep)
        return Derived2D(
            t=prep.t, r=prep.r, p=prep.p, c=c, u1=prep.u1, u2=prep.u2,
            p_t=prep.p_t, r_t=r_t,
            u1_minus=prep.u1v_minus, u1_plus=prep.u1v_plus,
            u2_minus=prep.u2h_minus, u2_plus=prep.u2h_plus,
            uc_v=uc_v, uc_h=uc_h, diff_v=diff_v, diff_h=diff_h,
            jump_c_v=jump_c_v, jump_c_h=jump_c_h,
            d11_max=d11, d12_max=d12, d21_max=d21, d22_max=d22,
            q_gauss=prep.q_gauss, pt_gauss=prep.pt_gauss, src_gauss=prep.src_gauss,
            alpha=alpha, alpha_tilde=alpha_tilde,
        )

    def evaluate(self, r: np.ndarray, p: np.ndarray, t: float,
                 alpha: float, alpha_tilde: float) -> Derived2D:
        return self.finalize(self.prepare(r, p, t), alpha, alpha_tilde)

    def cell_average_decomposition(self, derived: Derived2D, dt: float):
        """Split mean(r + dt r_t) into convection, x/y diffusion and source parts."""
        nx, ny = self.mesh.nx, self.mesh.ny
        w = self._w
        lam1 = dt / self.mesh.dx
        lam2 = dt / self.mesh.dy
        r_bar = derived.r.mean(axis=(2, 3))
        h_conv = (
            r_bar / 3.0
            + lam1 * np.einsum("ijb,b->ij", derived.uc_v[:nx] - derived.uc_v[1:], w)
            + lam2 * np.einsum("ijb,b->ij", derived.uc_h[:, :ny] - derived.uc_h[:, 1:], w)
        )
        h_diff_x = r_bar / 6.0 - lam1 * np.einsum(
            "ijb,b->ij", derived.diff_v[:nx] - derived.diff_v[1:], w
        )
        h_diff_y = r_bar / 6.0 - lam2 * np.einsum(
            "ijb,b->ij", derived.diff_h[:, :ny] - derived.diff_h[:, 1:], w
        )
        h_src = r_bar / 3.0 + dt * np.einsum(
            "ijgh,g,h->ij", derived.src_gauss, w, w
        )
        return h_conv, h_diff_x, h_diff_y, h_src


def make_scheme(mesh, spec: ProblemSpec, flux: FluxVariant | str = FluxVariant.UPWIND_PLUS):
    """Build the scheme matching the mesh/spec dimension."""
    if isinstance(mesh, Mesh1D):
        return Scheme1D(mesh, spec, flux)
    return Scheme2D(mesh, spec, flux)
