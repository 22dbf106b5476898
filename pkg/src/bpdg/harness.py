"""Experiment harness: preset runs, convergence studies and the CLI.

Entry points:

    bpdg run --example 3 --n 80 --limiter on --out results/ex3
    bpdg converge --example 1 --ns 20,40,80,160
    bpdg list-examples

Runs write per-snapshot CSV files of corner values plus a plain key=value
summary; blow-ups are reported with their detection time and exit code 2.
A key=value config file can stand in for any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .field import gauss_values_1d, gauss_values_2d, interpolate_corners
from .mesh import Mesh1D, build_mesh_1d, build_mesh_2d
from .physics import Preset, example_preset
from .scheme import make_scheme
from .stepper import BlowUpError, State, Stepper

FLUX_CHOICES = ("upwind+", "upwind-", "central")
INTEGRATOR_CHOICES = ("euler", "rk3", "ms3")


class UsageError(ValueError):
    """Bad flag or config value; maps to exit code 1."""


@dataclass
class RunConfig:
    example: int
    n: Optional[int] = None
    nx: Optional[int] = None
    ny: Optional[int] = None
    t_final: Optional[float] = None
    dt_factor: Optional[float] = None
    limiter: bool = True
    flux: str = "upwind+"
    integrator: str = "rk3"
    adaptive: bool = False
    gamma: Optional[float] = None
    q0: float = 1.0
    snapshot_times: tuple = ()
    out_dir: Optional[str] = None


@dataclass
class RunResult:
    config: RunConfig
    preset: Preset
    scheme: object
    state: State
    steps: int
    dt: float
    t_target: float
    min_c: float
    max_c: float
    error: Optional[float]
    blow_up_time: Optional[float]
    summary: dict

    @property
    def exit_code(self) -> int:
        return 2 if self.blow_up_time is not None else 0


def initial_state(preset: Preset, scheme) -> State:
    """Interpolate the initial data; r starts as porosity times concentration."""
    mesh = scheme.mesh
    c0 = interpolate_corners(preset.c0, mesh).values
    p0 = interpolate_corners(preset.p0, mesh).values
    return State(0.0, scheme.Phi * c0, p0)


def linf_error(c_values: np.ndarray, mesh, exact: Callable, t: float) -> float:
    """Max |c - exact| over all cell corners and volume Gauss points."""
    if isinstance(mesh, Mesh1D):
        err_corner = np.abs(c_values - exact(mesh.corner_coords(), t))
        err_gauss = np.abs(gauss_values_1d(c_values) - exact(mesh.gauss_coords(), t))
    else:
        xc, yc = mesh.corner_coords()
        err_corner = np.abs(c_values - exact(xc, yc, t))
        xg, yg = mesh.gauss_coords()
        err_gauss = np.abs(gauss_values_2d(c_values) - exact(xg, yg, t))
    return float(max(err_corner.max(), err_gauss.max()))


def _resolve_mesh(config: RunConfig, preset: Preset):
    if preset.spec.dim == 1:
        n = config.n if config.n is not None else preset.n_default
        mesh = build_mesh_1d(n)
        return mesh, mesh.dx**2
    nx = config.nx if config.nx is not None else (config.n or preset.n_default)
    ny = config.ny if config.ny is not None else (config.n or preset.n_default)
    mesh = build_mesh_2d(nx, ny)
    return mesh, min(mesh.dx, mesh.dy) ** 2


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_snapshot(path: Path, scheme, state: State, derived) -> None:
    """Corner-value CSV: x[,y], c, p, u1[,u2] in cell-major corner order."""
    mesh = scheme.mesh
    c = state.r / scheme.Phi
    if isinstance(mesh, Mesh1D):
        x = mesh.corner_coords().ravel()
        cols = [x, c.ravel(), state.p.ravel(), derived.u.ravel()]
        header = "x,c,p,u1"
    else:
        xc, yc = mesh.corner_coords()
        cols = [
            xc.ravel(), yc.ravel(), c.ravel(), state.p.ravel(),
            derived.u1.ravel(), derived.u2.ravel(),
        ]
        header = "x,y,c,p,u1,u2"
    data = np.column_stack(cols)
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def run(config: RunConfig) -> RunResult:
    """Advance one configured example to its final time and report."""
    if config.example not in range(1, 7):
        raise UsageError(f"example must be 1..6, got {config.example}")
    if config.flux not in FLUX_CHOICES:
        raise UsageError(f"flux must be one of {FLUX_CHOICES}")
    if config.integrator not in INTEGRATOR_CHOICES:
        raise UsageError(f"integrator must be one of {INTEGRATOR_CHOICES}")
    if config.adaptive and config.integrator == "ms3":
        raise UsageError("adaptive stepping needs single-step integrators")

    preset = example_preset(config.example, gamma=config.gamma, q0=config.q0)
    mesh, dt_scale = _resolve_mesh(config, preset)
    scheme = make_scheme(mesh, preset.spec, config.flux)
    stepper = Stepper(scheme, integrator=config.integrator, limiter_on=config.limiter)

    t_final = config.t_final if config.t_final is not None else preset.t_final
    dt_factor = config.dt_factor if config.dt_factor is not None else preset.dt_factor
    dt = dt_factor * dt_scale
    if t_final <= 0.0 or dt <= 0.0:
        raise UsageError("final time and step size must be positive")

    events = sorted({float(s) for s in config.snapshot_times if 0.0 < s <= t_final})
    if t_final not in events:
        events.append(t_final)

    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    state = initial_state(preset, scheme)
    c = state.r / scheme.Phi
    min_c, max_c = float(c.min()), float(c.max())
    steps = 0
    blow_up_time: Optional[float] = None

    def track(s: State) -> None:
        nonlocal min_c, max_c
        cs = s.r / scheme.Phi
        min_c = min(min_c, float(cs.min()))
        max_c = max(max_c, float(cs.max()))

    try:
        for target in events:
            if config.adaptive:
                while state.t < target - 1e-12 * max(1.0, target):
                    state = stepper.adaptive_step(state, target - state.t)
                    steps += 1
                    track(state)
            else:
                n_full = int(math.floor((target - state.t) / dt * (1.0 + 1e-12)))
                for _ in range(n_full):
                    state = stepper.step(state, dt)
                    steps += 1
                    track(state)
                rest = target - state.t
                if rest > 1e-10 * dt:
                    state = stepper.final_step(state, rest)
                    steps += 1
                    track(state)
            if out_dir is not None:
                derived = stepper.evaluate(state)
                write_snapshot(
                    out_dir / f"snapshot_t{target:.6f}.csv", scheme, state, derived
                )
    except BlowUpError as exc:
        blow_up_time = float(exc.time)

    error = None
    if preset.spec.c_exact is not None and blow_up_time is None:
        error = linf_error(state.r / scheme.Phi, mesh, preset.spec.c_exact, state.t)

    summary = {
        "example": config.example,
        "dim": preset.spec.dim,
        "n_cells": mesh.n_cells,
        "dt": dt,
        "dt_factor": dt_factor,
        "t_target": t_final,
        "t_reached": state.t,
        "steps": steps,
        "integrator": config.integrator,
        "limiter": config.limiter,
        "flux": config.flux,
        "adaptive": config.adaptive,
        "min_c": min_c,
        "max_c": max_c,
    }
    if error is not None:
        summary["error_linf"] = error
    if blow_up_time is not None:
        summary["blow_up_time"] = blow_up_time
    if out_dir is not None:
        lines = [f"{k}={_format_value(v)}" for k, v in summary.items()]
        (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    return RunResult(
        config=config, preset=preset, scheme=scheme, state=state, steps=steps,
        dt=dt, t_target=t_final, min_c=min_c, max_c=max_c, error=error,
        blow_up_time=blow_up_time, summary=summary,
    )


# ----------------------------------------------------------------------------
# convergence studies
# ----------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    n: int
    error: float
    order: Optional[float]


@dataclass
class ConvergenceReport:
    example: int
    limiter: bool
    rows: list = field(default_factory=list)

    def to_text(self) -> str:
        tag = "on" if self.limiter else "off"
        lines = [f"example {self.example}, limiter {tag}", "N      error        order"]
        for row in self.rows:
            order = f"{row.order:.2f}" if row.order is not None else "--"
            lines.append(f"{row.n:<6d} {row.error:.6e} {order}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["n,error,order"]
        for row in self.rows:
            order = repr(row.order) if row.order is not None else ""
            lines.append(f"{row.n},{row.error!r},{order}")
        return "\n".join(lines) + "\n"


def convergence_study(example: int, ns: Sequence[int],
                      limiter: bool = True,
                      t_final: Optional[float] = None,
                      dt_factor: Optional[float] = None,
                      flux: str = "upwind+",
                      integrator: str = "rk3",
                      gamma: Optional[float] = None,
                      out_dir: Optional[str] = None) -> ConvergenceReport:
    """Run one example over a mesh sequence and tabulate errors and orders."""
    report = ConvergenceReport(example=example, limiter=limiter)
    prev_error = None
    for n in ns:
        result = run(RunConfig(
            example=example, n=int(n), t_final=t_final, dt_factor=dt_factor,
            limiter=limiter, flux=flux, integrator=integrator, gamma=gamma,
        ))
        if result.error is None:
            raise UsageError(
                f"example {example} has no exact solution; cannot measure order"
            )
        order = None
        if prev_error is not None:
            order = math.log2(prev_error / result.error)
        report.rows.append(ConvergenceRow(n=int(n), error=result.error, order=order))
        prev_error = result.error
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "convergence.csv").write_text(report.to_csv())
        (out / "convergence.txt").write_text(report.to_text() + "\n")
    return report


def list_examples() -> str:
    """Catalog of the built-in examples with their reference settings."""
    lines = []
    for k in range(1, 7):
        preset = example_preset(k)
        spec = preset.spec
        grid = f"N={preset.n_default}" if spec.dim == 1 else (
            f"N={preset.n_default}x{preset.n_default}"
        )
        head = (
            f"example {k} [{spec.dim}D] {grid}, dt={preset.dt_factor}*dx^2, "
            f"T={preset.t_final}, z1={spec.z1:g}, z2={spec.z2:g}"
        )
        lines.append(head)
        lines.append(f"  {preset.description}")
        if preset.notes:
            lines.append(f"  note: {preset.notes}")
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# command line
# ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, 2 is for blow-ups
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--example", type=int, help="example id 1..6")
    p.add_argument("--T", dest="t_final", type=float, help="final time override")
    p.add_argument("--dt-factor", dest="dt_factor", type=float,
                   help="dt = factor * dx^2 (1D) or factor * min(dx^2, dy^2) (2D)")
    p.add_argument("--limiter", choices=("on", "off"), help="default on")
    p.add_argument("--flux", choices=FLUX_CHOICES, help="interface flux pair")
    p.add_argument("--integrator", choices=INTEGRATOR_CHOICES)
    p.add_argument("--gamma", type=float, help="example parameter where applicable")
    p.add_argument("--out", dest="out_dir", help="directory for CSV/summary output")
    p.add_argument("--config", help="key=value file; explicit flags override it")


def build_parser() -> _Parser:
    parser = _Parser(prog="bpdg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="advance one example and write results")
    _add_solver_flags(p_run)
    p_run.add_argument("--n", type=int, help="cells per direction")
    p_run.add_argument("--nx", type=int)
    p_run.add_argument("--ny", type=int)
    p_run.add_argument("--q0", type=float, help="well strength (example 6)")
    p_run.add_argument("--adaptive", action="store_true",
                       help="bound-driven step size instead of the fixed rule")
    p_run.add_argument("--snapshots", help="comma-separated times for extra CSVs")

    p_conv = sub.add_parser("converge", help="error/order table over a mesh sequence")
    _add_solver_flags(p_conv)
    p_conv.add_argument("--ns", help="comma-separated mesh sizes, e.g. 20,40,80,160")

    sub.add_parser("list-examples", help="print the example catalog")
    return parser


_CONFIG_COERCERS = {
    "example": int, "n": int, "nx": int, "ny": int,
    "t_final": float, "dt_factor": float, "gamma": float, "q0": float,
    "limiter": str, "flux": str, "integrator": str, "out_dir": str,
    "snapshots": str, "ns": str, "adaptive": str,
}
_CONFIG_ALIASES = {"t": "t_final", "out": "out_dir"}


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (need key=value): {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        key = _CONFIG_ALIASES.get(key, key)
        if key not in _CONFIG_COERCERS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            values[key] = _CONFIG_COERCERS[key](value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key!r}: {value!r}") from exc
    return values


def _merged(args: argparse.Namespace, key: str, fallback=None):
    cli = getattr(args, key, None)
    if cli is not None and cli is not False:
        return cli
    file_cfg = getattr(args, "_file_cfg", {})
    if key in file_cfg:
        return file_cfg[key]
    return fallback


def _parse_times(text: Optional[str]) -> tuple:
    if not text:
        return ()
    try:
        return tuple(float(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise UsageError(f"bad time list {text!r}") from exc


def _on_off(value, fallback: bool) -> bool:
    if value is None:
        return fallback
    if isinstance(value, bool):
        return value
    text = str(value).lower()
    if text in ("on", "true", "1", "yes"):
        return True
    if text in ("off", "false", "0", "no"):
        return False
    raise UsageError(f"expected on/off, got {value!r}")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    example = _merged(args, "example")
    if example is None:
        raise UsageError("--example is required (or put example= in the config file)")
    return RunConfig(
        example=int(example),
        n=_merged(args, "n"),
        nx=_merged(args, "nx"),
        ny=_merged(args, "ny"),
        t_final=_merged(args, "t_final"),
        dt_factor=_merged(args, "dt_factor"),
        limiter=_on_off(_merged(args, "limiter"), True),
        flux=_merged(args, "flux", "upwind+"),
        integrator=_merged(args, "integrator", "rk3"),
        adaptive=_on_off(_merged(args, "adaptive"), False),
        gamma=_merged(args, "gamma"),
        q0=float(_merged(args, "q0", 1.0)),
        snapshot_times=_parse_times(_merged(args, "snapshots")),
        out_dir=_merged(args, "out_dir"),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            args._file_cfg = _read_config_file(args.config)

        if args.command == "list-examples":
            print(list_examples())
            return 0

        if args.command == "run":
            result = run(_config_from_args(args))
            for key, value in result.summary.items():
                print(f"{key}={_format_value(value)}")
            return result.exit_code

        if args.command == "converge":
            example = _merged(args, "example")
            if example is None:
                raise UsageError("--example is required")
            ns_text = _merged(args, "ns")
            if not ns_text:
                raise UsageError("--ns is required, e.g. --ns 20,40,80,160")
            try:
                ns = [int(part) for part in str(ns_text).split(",") if part.strip()]
            except ValueError as exc:
                raise UsageError(f"bad mesh list {ns_text!r}") from exc
            report = convergence_study(
                int(example), ns,
                limiter=_on_off(_merged(args, "limiter"), True),
                t_final=_merged(args, "t_final"),
                dt_factor=_merged(args, "dt_factor"),
                flux=_merged(args, "flux", "upwind+"),
                integrator=_merged(args, "integrator", "rk3"),
                gamma=_merged(args, "gamma"),
                out_dir=_merged(args, "out_dir"),
            )
            print(report.to_text())
            return 0
    except UsageError as exc:
        print(f"bpdg: error: {exc}", file=sys.stderr)
        return 1
    except BlowUpError as exc:  # surfaced outside run() only in odd setups
        print(f"bpdg: blow-up at t={exc.time!r}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
