"""Time integration with bound-preserving penalties and step-size control.

Three strong-stability-preserving integrators advance (r, p): forward Euler,
the three-stage third-order Runge-Kutta method and the two-level third-order
multistep method

    w^{n+1} = (16/27) (w^n + 3 dt L(w^n))
              + (11/27) (w^{n-3} + (12/11) dt L(w^{n-3})).

Every update is a convex combination of Euler substeps, so applying the
corner limiter after each substep keeps 0 <= r <= Phi whenever the Euler
step size respects the bounds computed here.  The multistep method's Euler
substeps use effective steps 3 dt and (12/11) dt, so its admissible dt is
one third of the Euler bound; it also needs a four-level history at uniform
dt, warm-started with Runge-Kutta steps.

Penalties are recomputed from the current state with a one percent margin
over the stability lower bounds.  The admissible dt needs the pressure rate
of the very step being taken, so adaptive mode uses the rate from the state
being advanced and re-checks against the new state afterwards, halving and
retrying on violation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .limiter import LimiterConfig, limit_field
from .scheme import Scheme1D, Scheme2D, SolverBreakdownError

PENALTY_MARGIN = 1.01
PENALTY_FLOOR = 1e-8
THETA_SAFE = 0.9
BLOWUP_MAGNITUDE = 1e6

INTEGRATORS = ("euler", "rk3", "ms3")


class BlowUpError(RuntimeError):
    """The discrete solution left the representable range."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass
class State:
    t: float
    r: np.ndarray
    p: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.r.copy(), self.p.copy())


@dataclass
class StepParams:
    """Penalties, step size and the extrema that produced them."""

    alpha: float
    alpha_tilde: float
    dt: float
    theta: float
    constraints: dict = field(default_factory=dict)

    @property
    def binding(self) -> str:
        return min(self.constraints, key=self.constraints.get)


def compute_penalties(scheme, prep) -> tuple[float, float]:
    """Penalty pair with a one percent margin and a small positive floor."""
    a_req, atil_req = scheme.penalty_floor(prep)
    alpha = max(PENALTY_MARGIN * a_req, PENALTY_FLOOR)
    alpha_tilde = max(PENALTY_MARGIN * atil_req, PENALTY_FLOOR)
    return alpha, alpha_tilde


def _positive_min(values) -> float:
    vals = [v for v in values if v > 0.0]
    return min(vals) if vals else np.inf


def _source_constraints(scheme, derived, constraints: dict) -> None:
    spec = scheme.spec
    p_m = max(float(derived.pt_gauss.max()), 0.0)
    if p_m > 0.0:
        constraints["source_z1"] = 1.0 / (6.0 * spec.z1 * p_m)
        constraints["source_z2"] = 1.0 / (6.0 * spec.z2 * p_m)
    if derived.q_gauss.ndim == 2:
        q_neg = np.maximum(-derived.q_gauss, 0.0).max(axis=1)
        phi_if = scheme.Phi_iface
        cell_phi = np.minimum(phi_if[:-1], phi_if[1:])
    else:
        q_neg = np.maximum(-derived.q_gauss, 0.0).max(axis=(2, 3))
        node = scheme.Phi_node
        cell_phi = np.minimum.reduce(
            [node[:-1, :-1], node[1:, :-1], node[:-1, 1:], node[1:, 1:]]
        )
    hot = q_neg > 0.0
    if np.any(hot):
        constraints["source_extraction"] = float(
            (cell_phi[hot] / (6.0 * q_neg[hot])).min()
        )


def _dt_constraints_1d(scheme: Scheme1D, derived) -> dict:
    mesh = scheme.mesh
    n, dx = mesh.n_cells, mesh.dx
    alpha, atil = derived.alpha, derived.alpha_tilde
    phi_if = scheme.Phi_iface
    cons: dict = {}

    interior_phi = phi_if[1:n]
    cons["convection_global"] = dx * float(interior_phi.min()) / (6.0 * alpha)
    gap = alpha - derived.u_plus[1:n]
    with np.errstate(divide="ignore"):
        per = np.where(gap > 0.0, dx * interior_phi / (6.0 * gap), np.inf)
    cons["convection_interface"] = float(per.min())

    if n > 2:
        phi_l, phi_r = phi_if[1 : n - 1], phi_if[2:n]
        d_l, d_r = derived.D_plus[1 : n - 1], derived.D_minus[2:n]
        num = np.minimum(phi_l, phi_r)
        den = 6.0 * atil + 3.0 * np.maximum(d_l, d_r)
        cons["diffusion_interior"] = dx * dx * float((num / den).min())
    cons["diffusion_left_cell"] = _positive_min(
        [
            dx * dx * phi_if[0] / (3.0 * derived.D_minus[1])
            if derived.D_minus[1] > 0.0
            else np.inf,
            dx * dx * phi_if[1] / (6.0 * atil),
        ]
    )
    cons["diffusion_right_cell"] = _positive_min(
        [
            dx * dx * phi_if[n] / (3.0 * derived.D_plus[n - 1])
            if derived.D_plus[n - 1] > 0.0
            else np.inf,
            dx * dx * phi_if[n - 1] / (6.0 * atil),
        ]
    )

    _source_constraints(scheme, derived, cons)
    return cons


def _dt_constraints_2d(scheme: Scheme2D, derived) -> dict:
    mesh = scheme.mesh
    nx, ny, dx, dy = mesh.nx, mesh.ny, mesh.dx, mesh.dy
    alpha, atil = derived.alpha, derived.alpha_tilde
    node = scheme.Phi_node
    phi_m = float(node.min())
    cons: dict = {}

    # convection: dt (1/dx + 1/dy) <= (1/6) min(phi_m/alpha, B1, B2)
    edge_phi_v = np.minimum(node[1:nx, :-1], node[1:nx, 1:])
    u1_max = derived.u1_plus[1:nx].max(axis=2)
    gap1 = alpha - u1_max
    with np.errstate(divide="ignore"):
        b1 = float(np.where(gap1 > 0.0, edge_phi_v / (6.0 * gap1), np.inf).min())
    edge_phi_h = np.minimum(node[:-1, 1:ny], node[1:, 1:ny])
    u2_max = derived.u2_plus[:, 1:ny].max(axis=2)
    gap2 = alpha - u2_max
    with np.errstate(divide="ignore"):
        b2 = float(np.where(gap2 > 0.0, edge_phi_h / (6.0 * gap2), np.inf).min())
    rate = 1.0 / dx + 1.0 / dy
    cons["convection_global"] = phi_m / (6.0 * alpha) / rate
    cons["convection_edges"] = min(b1, b2) / rate

    # diffusion: D11 dt/dx^2 + 2 (atil + D12) dt/(dx dy) <= phi_m/12, and in y
    den_x = derived.d11_max / dx**2 + 2.0 * (atil + derived.d12_max) / (dx * dy)
    den_y = derived.d22_max / dy**2 + 2.0 * (atil + derived.d21_max) / (dx * dy)
    cons["diffusion_x"] = phi_m / 12.0 / den_x if den_x > 0.0 else np.inf
    cons["diffusion_y"] = phi_m / 12.0 / den_y if den_y > 0.0 else np.inf

    _source_constraints(scheme, derived, cons)
    return cons


def compute_dt_bound(scheme, derived, integrator: str = "euler",
                     theta: float = THETA_SAFE) -> StepParams:
    """Largest admissible step at this state, scaled by the safety factor."""
    if not np.all(np.isfinite(derived.r_t)):
        raise BlowUpError("non-finite state in step-size bound", derived.t)
    if isinstance(scheme, Scheme1D):
        cons = _dt_constraints_1d(scheme, derived)
    else:
        cons = _dt_constraints_2d(scheme, derived)
    dt = theta * min(cons.values())
    if integrator == "ms3":
        dt /= 3.0
    return StepParams(
        alpha=derived.alpha, alpha_tilde=derived.alpha_tilde,
        dt=float(dt), theta=theta, constraints=cons,
    )


class Stepper:
    """Advances states with a chosen integrator, limiting after every stage."""

    def __init__(self, scheme, integrator: str = "euler", limiter_on: bool = True,
                 limiter_config: Optional[LimiterConfig] = None):
        if integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {integrator!r}")
        self.scheme = scheme
        self.integrator = integrator
        self.limiter_on = limiter_on
        self.limiter_config = limiter_config or LimiterConfig()
        self._history: deque = deque()  # (state, cached derived) for ms3
        self.last_params: Optional[StepParams] = None

    # -- core pieces -----------------------------------------------------------

    def evaluate(self, state: State):
        """Spatial operator at a state with freshly computed penalties."""
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            prep = self.scheme.prepare(state.r, state.p, state.t)
            alpha, alpha_tilde = compute_penalties(self.scheme, prep)
            return self.scheme.finalize(prep, alpha, alpha_tilde)

    def _limit(self, r: np.ndarray) -> np.ndarray:
        if not self.limiter_on:
            return r
        return limit_field(r, self.scheme.Phi, self.limiter_config)

    def _advance(self, state: State, derived, dt: float) -> State:
        r_new = state.r + dt * derived.r_t
        p_new = state.p + dt * derived.p_t
        return State(state.t + dt, self._limit(r_new), p_new)

    def check_blowup(self, state: State) -> None:
        c = state.r / self.scheme.Phi
        bad = (
            not np.all(np.isfinite(state.r))
            or not np.all(np.isfinite(state.p))
            or np.abs(c).max() > BLOWUP_MAGNITUDE
        )
        if bad:
            raise BlowUpError("solution blew up", state.t)

    # -- integrators -----------------------------------------------------------

    def euler_step(self, state: State, dt: float) -> State:
        return self._advance(state, self.evaluate(state), dt)

    def rk3_step(self, state: State, dt: float) -> State:
        w1 = self._advance(state, self.evaluate(state), dt)
        d1 = self.evaluate(w1)
        r2 = 0.75 * state.r + 0.25 * (w1.r + dt * d1.r_t)
        p2 = 0.75 * state.p + 0.25 * (w1.p + dt * d1.p_t)
        w2 = State(state.t + 0.5 * dt, self._limit(r2), p2)
        d2 = self.evaluate(w2)
        r3 = state.r / 3.0 + (2.0 / 3.0) * (w2.r + dt * d2.r_t)
        p3 = state.p / 3.0 + (2.0 / 3.0) * (w2.p + dt * d2.p_t)
        return State(state.t + dt, self._limit(r3), p3)

    def ms3_step(self, state: State, dt: float) -> State:
        """One multistep update; falls back to Runge-Kutta while warming up."""
        if not self._history:
            self._history.append([state, None])
        if len(self._history) < 4:
            new = self.rk3_step(state, dt)
            self._history.append([new, None])
            return new

        head = self._history[-1]
        tail = self._history[0]
        if head[1] is None:
            head[1] = self.evaluate(head[0])
        if tail[1] is None:
            tail[1] = self.evaluate(tail[0])
        e_head = self._advance(head[0], head[1], 3.0 * dt)
        e_tail = self._advance(tail[0], tail[1], (12.0 / 11.0) * dt)
        r_new = (16.0 / 27.0) * e_head.r + (11.0 / 27.0) * e_tail.r
        p_new = (16.0 / 27.0) * e_head.p + (11.0 / 27.0) * e_tail.p
        new = State(state.t + dt, self._limit(r_new), p_new)
        self._history.popleft()
        self._history.append([new, None])
        return new

    def step(self, state: State, dt: float) -> State:
        """Advance one step with the configured integrator and check health."""
        try:
            if self.integrator == "euler":
                new = self.euler_step(state, dt)
            elif self.integrator == "rk3":
                new = self.rk3_step(state, dt)
            else:
                if self._history and state is not self._history[-1][0]:
                    # history must stay contiguous; a detour restarts it
                    self._history.clear()
                new = self.ms3_step(state, dt)
        except SolverBreakdownError as exc:
            raise BlowUpError(str(exc), exc.time) from exc
        self.check_blowup(new)
        return new

    def final_step(self, state: State, dt: float) -> State:
        """Partial step to land on the final time; never enters ms3 history."""
        try:
            if self.integrator == "euler":
                new = self.euler_step(state, dt)
            else:
                new = self.rk3_step(state, dt)
        except SolverBreakdownError as exc:
            raise BlowUpError(str(exc), exc.time) from exc
        self.check_blowup(new)
        return new

    # -- adaptive driver ---------------------------------------------------------

    def adaptive_step(self, state: State, dt_max: float) -> State:
        """Step with the state's own bound, re-check, halve on violation.

        The pressure-rate extremum entering the source bounds belongs to the
        step being taken, so the accepted step must also satisfy the bound
        recomputed at its endpoint (without the safety factor).
        """
        if self.integrator == "ms3":
            raise ValueError("adaptive stepping needs single-step integrators")
        derived = self.evaluate(state)
        params = compute_dt_bound(self.scheme, derived, self.integrator)
        dt = min(params.dt, dt_max)
        for _ in range(60):
            new = self.step(state, dt)
            end_params = compute_dt_bound(
                self.scheme, self.evaluate(new), self.integrator, theta=1.0
            )
            self.last_params = params
            if dt <= end_params.dt:
                return new
            dt *= 0.5
        raise BlowUpError("adaptive step size collapsed", state.t)
