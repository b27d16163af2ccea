"""Reproducible demo set-ups shared by the command line, scripts and tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex_integration import StepParams, add_conformal_deficit, flat_immersion, step_detailed
from .extension import AdaptedShortState
from .fields import Grid, ImmersionField, ScalarField, SymTensorField, operator_norm

__all__ = ["fit_slope", "flat_jet", "ScalingRun", "step_scaling", "stage_scaling", "bump_state"]


def fit_slope(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def flat_jet(grid: Grid) -> ImmersionField:
    """Flat immersion x -> (x, 0) carrying its exact Jacobian and zero Hessian."""
    u = flat_immersion(grid)
    n = grid.n
    return ImmersionField(grid, u.values, u.jac, np.zeros(grid.shape + (n + 1, n, n)))


@dataclass
class ScalingRun:
    """Residual sup norms at a sequence of frequencies (or stage ratios)."""
    parameters: list
    residuals: list
    slope: float
    rows: list


def step_scaling(resolution: int = 1025, lams=(64.0, 128.0, 256.0),
                 amplitude: float = 0.2) -> ScalingRun:
    """One step on the flat unit square with a = amplitude sin(pi x1), nu = e1."""
    grid = Grid((0.0, 0.0), (1.0, 1.0), (resolution, resolution))
    u = flat_immersion(grid)
    a = amplitude * np.sin(np.pi * grid.coords()[..., 0])
    eps = amplitude ** 2 / 0.4
    res, rows = [], []
    for lam in lams:
        p = StepParams(eps=eps, delta=eps, theta=1.0, theta_tilde=1.0, lam=float(lam))
        d = step_detailed(u, a, (1.0, 0.0), p).diagnostics
        res.append(d["residual"])
        rows.append({k: d[k] for k in ("lam", "residual", "dv0", "dv1", "dv2", "samples_per_period")})
    return ScalingRun(list(lams), res, fit_slope(lams, res), rows)


def stage_scaling(resolution: int = 257, Ks=(8.0, 16.0, 32.0), c: float = 0.2,
                  margin: float = 0.1) -> ScalingRun:
    """Conformal stage on a flat square of side 2 pi/8 with constant rho = c, G = 0.

    The error is measured away from a boundary collar of relative width
    ``margin``, where one-sided differences of the regularized G pollute it.
    """
    theta = 1.0
    side = 2.0 * math.pi / (8.0 * theta)
    grid = Grid((0.0, 0.0), (side, side), (resolution, resolution))
    u = flat_jet(grid)
    rho = ScalarField(grid, np.full(grid.shape, c))
    G = SymTensorField(grid, np.zeros(grid.shape + (2, 2)))
    m = int(margin * (resolution - 1))
    inner = np.zeros(grid.shape, bool)
    inner[m:resolution - m, m:resolution - m] = True
    eps = 0.05
    res, rows = [], []
    for K in Ks:
        out = add_conformal_deficit(u, rho, G, StepParams(eps, eps, theta, theta, lam=1.0), float(K))
        e = operator_norm(out.E.values)
        res.append(float(e[inner].max()))
        rows.append({"K": float(K), "E_inner": res[-1], "E_max": float(e.max()),
                     "lambdas": [d["lam"] for d in out.diagnostics]})
    return ScalingRun(list(Ks), res, fit_slope(Ks, res), rows)


def bump_state(c: float = 0.4, resolution: int = 129, radius: float = 0.35,
               M: float = 100.0) -> AdaptedShortState:
    """Flat immersion of the unit square short of g = (1 + rho^2) Id, rho = c bump.

    rho is a smooth bump of the given radius around the centre with its exact
    gradient; G vanishes, so the state is adapted with r = 0.
    """
    grid = Grid((0.0, 0.0), (1.0, 1.0), (resolution, resolution))
    x = grid.coords() - 0.5
    s = (x ** 2).sum(-1) / radius ** 2
    inside = s < 1
    w = np.where(inside, 1.0 - s, 1.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / w), 0.0)
    db = np.where(inside[..., None], (b / w ** 2)[..., None] * (-2.0 * x / radius ** 2), 0.0)
    rho = ScalarField(grid, c * b, c * db)
    G = SymTensorField(grid, np.zeros(grid.shape + (2, 2)), np.zeros(grid.shape + (2, 2, 2)))
    g = SymTensorField(grid, np.eye(2) + (c * b)[..., None, None] ** 2 * np.eye(2))
    return AdaptedShortState(flat_jet(grid), rho, G, M, 0.0, 1.0, g)
