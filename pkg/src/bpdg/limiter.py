"""Cell-local limiters enforcing 0 <= r <= Phi at cell corners.

Both limiters assume the cell averages already satisfy 0 <= mean(r) <= mean(Phi)
(that is what the time-step restrictions of the scheme guarantee) and then move
corner values inside the bounds without changing any cell average.  Cells whose
average sits within ``eps`` of a bound are flattened to the constant average;
otherwise corner values are rebalanced:

1D, lower bound: at most one endpoint can be negative once the average is
positive; it is lifted to eps and the surplus is taken from the other endpoint.
The upper bound is enforced by running the same step on the mirror variable
r2 = Phi - r.

2D, lower bound: negative corners are zeroed and the positive corners are
scaled by s = 4 mean(r) / sum(positive corners), which preserves the average
of the bilinear cell exactly.  The upper bound again goes through the mirror
variable.

A second application of either limiter is a bitwise no-op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LimiterInvariantError(RuntimeError):
    """A cell average left [0, mean(Phi)]: the time-step conditions were broken."""


@dataclass(frozen=True)
class LimiterConfig:
    """eps: slack kept between limited corners and the exact bounds.

    avg_slack: roundoff allowance when checking the cell-average invariant.
    """

    eps: float = 1e-13
    avg_slack: float = 5e-13


def _check_averages(avg: np.ndarray, avg_mirror: np.ndarray, phi_avg: np.ndarray,
                    cfg: LimiterConfig) -> None:
    tol = cfg.avg_slack * (1.0 + np.abs(phi_avg))
    bad_low = avg < -tol
    bad_high = avg_mirror < -tol
    if bad_low.any() or bad_high.any():
        idx = np.argwhere(bad_low | bad_high)[0]
        which = "below 0" if bad_low.any() else "above mean(Phi)"
        raise LimiterInvariantError(
            f"cell average {which} beyond roundoff at cell {tuple(idx)}; "
            "the step size violated the bound-preserving conditions"
        )


def _lower_bound_pass_1d(vals: np.ndarray, eps: float) -> np.ndarray:
    """Lift negative endpoints to eps, average-preserving.  vals is (m, 2)."""
    left_neg = vals[:, 0] < 0.0
    right_neg = vals[:, 1] < 0.0
    if (left_neg & right_neg).any():
        # both endpoints negative would force a negative average
        raise LimiterInvariantError("both endpoints negative with positive average")
    out = vals
    if left_neg.any() or right_neg.any():
        out = vals.copy()
        out[left_neg, 1] = vals[left_neg, 1] - eps + vals[left_neg, 0]
        out[left_neg, 0] = eps
        out[right_neg, 0] = vals[right_neg, 0] - eps + vals[right_neg, 1]
        out[right_neg, 1] = eps
    return out


def limit_field_1d(r: np.ndarray, phi: np.ndarray, cfg: LimiterConfig = LimiterConfig()) -> np.ndarray:
    """Limit 1D corner values r (n, 2) into [0, phi] cellwise."""
    avg = r.mean(axis=1)
    phi_avg = phi.mean(axis=1)
    avg_mirror = phi_avg - avg
    _check_averages(avg, avg_mirror, phi_avg, cfg)

    out = r.copy()
    at_floor = avg <= cfg.eps
    at_ceil = ~at_floor & (avg_mirror <= cfg.eps)
    out[at_floor] = avg[at_floor, None]
    out[at_ceil] = phi[at_ceil] - avg_mirror[at_ceil, None]

    rest = ~(at_floor | at_ceil)
    if rest.any():
        idx = np.flatnonzero(rest)
        sub = _lower_bound_pass_1d(out[idx], cfg.eps)
        mirror = _lower_bound_pass_1d(phi[idx] - sub, cfg.eps)
        out[idx] = phi[idx] - mirror
    return out


def _lower_bound_pass_2d(vals: np.ndarray, avg: np.ndarray, eps: float) -> np.ndarray:
    """Zero negative corners, rescale positive ones.  vals is (m, 4)."""
    neg = vals < 0.0
    rows_with_neg = neg.any(axis=1)
    if not rows_with_neg.any():
        return vals
    pos_sum = np.where(vals > 0.0, vals, 0.0).sum(axis=1)
    if np.any(pos_sum[rows_with_neg] <= 0.0):
        raise LimiterInvariantError("no positive corner to rebalance from")
    scale = np.where(pos_sum > 0.0, 4.0 * avg / np.where(pos_sum > 0.0, pos_sum, 1.0), 0.0)
    rescaled = np.where(vals < 0.0, 0.0, vals * scale[:, None])
    return np.where(rows_with_neg[:, None], rescaled, vals)


def limit_field_2d(r: np.ndarray, phi: np.ndarray, cfg: LimiterConfig = LimiterConfig()) -> np.ndarray:
    """Limit 2D corner values r (nx, ny, 2, 2) into [0, phi] cellwise."""
    nx, ny = r.shape[:2]
    flat = r.reshape(nx * ny, 4)
    phi_flat = phi.reshape(nx * ny, 4)
    avg = flat.mean(axis=1)
    phi_avg = phi_flat.mean(axis=1)
    avg_mirror = phi_avg - avg
    _check_averages(avg.reshape(nx, ny), avg_mirror.reshape(nx, ny), phi_avg.reshape(nx, ny), cfg)

    out = flat.copy()
    at_floor = avg <= cfg.eps
    at_ceil = ~at_floor & (avg_mirror <= cfg.eps)
    out[at_floor] = avg[at_floor, None]
    out[at_ceil] = phi_flat[at_ceil] - avg_mirror[at_ceil, None]

    rest = ~(at_floor | at_ceil)
    if rest.any():
        idx = np.flatnonzero(rest)
        sub = _lower_bound_pass_2d(out[idx], avg[idx], cfg.eps)
        mirror = _lower_bound_pass_2d(phi_flat[idx] - sub, avg_mirror[idx], cfg.eps)
        out[idx] = phi_flat[idx] - mirror
    return out.reshape(r.shape)


def limit_field(r: np.ndarray, phi: np.ndarray, cfg: LimiterConfig = LimiterConfig()) -> np.ndarray:
    """Dispatch on dimensionality of the corner-value array."""
    if r.ndim == 2:
        return limit_field_1d(r, phi, cfg)
    return limit_field_2d(r, phi, cfg)


def limit_cell_1d(values, phi_values, cfg: LimiterConfig = LimiterConfig()) -> np.ndarray:
    """Limit a single 1D cell given its two corner values."""
    return limit_field_1d(
        np.asarray(values, dtype=float)[None, :],
        np.asarray(phi_values, dtype=float)[None, :],
        cfg,
    )[0]


def limit_cell_2d(values, phi_values, cfg: LimiterConfig = LimiterConfig()) -> np.ndarray:
    """Limit a single 2D cell given its 2x2 corner values."""
    return limit_field_2d(
        np.asarray(values, dtype=float)[None, None],
        np.asarray(phi_values, dtype=float)[None, None],
        cfg,
    )[0, 0]
