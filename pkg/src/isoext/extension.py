"""One-sided adapted short extension of boundary data.

Coordinates on the chart are (x', x_n) with x_n >= 0 the last grid axis and
the boundary Sigma = {x_n = 0}.  The metric is given in geodesic normal form,
so g_in = delta_in.  The construction runs in four parts:

1. ``check_condition`` compares the second fundamental form of f(Sigma)
   along mu with the one of Sigma inside (Omega, g).
2. ``short_ansatz`` builds u = f + (x_n - x_n^2) mu, which is short for
   small x_n > 0 and isometric to first order on Sigma.
3. ``build_layers`` lays down a dyadic partition of unity in x_n.
4. ``adapted_extension`` absorbs (1 - tau) of the deficit layer by layer and
   reports the resulting adapted short immersion.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .convex_integration import ConvexIntegrationError, StepParams, stage
from .corrugation import DELTA_STAR, CorrugationProfile, default_profile
from .decomposition import DirectionFrame, balanced_frame, decompose_global
from .fields import (Grid, ImmersionField, ScalarField, SymTensorField, fd_gradient,
                     metric_jet, operator_norm, pointwise_norm)

__all__ = [
    "BoundaryDataError", "ResolutionError", "ExtensionError", "ConditionError", "BoundaryData", "MarginReport",
    "check_condition", "AnsatzResult", "short_ansatz", "WhitneyLayers", "build_layers",
    "AdaptedShortState", "ExtensionResult", "adapted_extension", "extension_sweep",
    "definition_margins", "strip_data", "straight_line_data",
]


class BoundaryDataError(ValueError):
    """Boundary data violates one of its structural requirements."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class ResolutionError(ValueError):
    """The grid is too coarse for the requested construction."""


class ExtensionError(ConvexIntegrationError):
    """No configuration in the sweep produced an acceptable adapted state."""

    def __init__(self, message: str, reports=None, nodes=None):
        super().__init__(message)
        self.reports = reports or []
        self.nodes = nodes


class ConditionError(ExtensionError):
    """f(Sigma) is not strictly more curved than Sigma: margin <= 0."""

    def __init__(self, report: "MarginReport"):
        super().__init__(f"boundary condition fails: margin {report.margin:.4g} <= 0 "
                         f"at node {report.node}")
        self.report = report


# ---------------------------------------------------------------- boundary data

def _boundary_grid(grid: Grid) -> Grid:
    return Grid(grid.lo[:-1], grid.hi[:-1], grid.resolution[:-1])


@dataclass
class BoundaryData:
    """Boundary immersion f and unit normal mu on Sigma, metric g on the chart.

    ``f`` and ``mu`` have shape ``(*grid.shape[:-1], n+1)``.  Their first and
    second tangential derivatives may be supplied (``f_jac``, ``f_hess``,
    ``mu_jac``, ``mu_hess``); otherwise they are taken by finite differences
    along Sigma.
    """
    grid: Grid
    f: np.ndarray
    mu: np.ndarray
    g: SymTensorField
    d0: float
    f_jac: np.ndarray | None = None
    f_hess: np.ndarray | None = None
    mu_jac: np.ndarray | None = None
    mu_hess: np.ndarray | None = None

    def __post_init__(self):
        n = self.grid.n
        if n < 2:
            raise BoundaryDataError("grid", "the chart needs dimension n >= 2")
        if self.grid.lo[-1] != 0.0:
            raise BoundaryDataError("grid", "the normal axis must start at x_n = 0")
        bshape = self.grid.shape[:-1] + (n + 1,)
        for name in ("f", "mu"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != bshape:
                raise BoundaryDataError(name, f"expected shape {bshape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise BoundaryDataError(name, "samples must be finite")
            setattr(self, name, arr)
        if self.g.grid != self.grid:
            raise BoundaryDataError("g", "metric must be sampled on the chart grid")
        if not (0 < self.d0 <= self.grid.hi[-1] + 1e-12):
            raise BoundaryDataError("d0", f"depth {self.d0} must lie in (0, {self.grid.hi[-1]}]")
        sg = _boundary_grid(self.grid)
        if self.f_jac is None:
            self.f_jac = fd_gradient(self.f, sg)
        if self.mu_jac is None:
            self.mu_jac = fd_gradient(self.mu, sg)
        if self.f_hess is None:
            self.f_hess = _sym(fd_gradient(self.f_jac, sg))
        if self.mu_hess is None:
            self.mu_hess = _sym(fd_gradient(self.mu_jac, sg))

    @property
    def sigma_grid(self) -> Grid:
        return _boundary_grid(self.grid)

    def validate(self, tol: float | None = None) -> None:
        """Raise ``BoundaryDataError`` naming the first failing requirement."""
        n = self.grid.n
        h = max(self.grid.spacing[:-1])
        tol = 2.0 * h ** 2 + 1e-12 if tol is None else tol
        norm_err = np.abs(np.linalg.norm(self.mu, axis=-1) - 1.0).max()
        if norm_err > 1e-12:
            raise BoundaryDataError("mu", f"normal field is not unit length (error {norm_err:.3e})")
        normal_err = np.abs(np.einsum("...a,...ai->...i", self.mu, self.f_jac)).max()
        if normal_err > tol:
            raise BoundaryDataError("mu", f"normal field is not normal to f (error {normal_err:.3e})")
        g = self.g.values
        mixed = np.abs(g[..., :, n - 1] - np.eye(n)[n - 1]).max()
        if mixed > 1e-12:
            raise BoundaryDataError("g", f"metric is not in geodesic normal form (error {mixed:.3e})")
        induced = np.einsum("...ai,...aj->...ij", self.f_jac, self.f_jac)
        iso_err = np.abs(induced - g[..., 0, : n - 1, : n - 1]).max()
        if iso_err > tol:
            raise BoundaryDataError("f", f"boundary immersion is not isometric (error {iso_err:.3e})")


def _sym(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))


# ---------------------------------------------------------------- condition check

@dataclass
class MarginReport:
    """Smallest eigenvalue of <mu, d^2 f> - L over Sigma."""
    margin: float
    node: tuple
    L: np.ndarray
    II: np.ndarray

    @property
    def admissible(self) -> bool:
        return self.margin > 0

    def to_dict(self) -> dict:
        return {"margin": self.margin, "node": list(self.node), "admissible": self.admissible}


def normal_derivative_at_boundary(g: SymTensorField) -> np.ndarray:
    """d_n g on Sigma by the second-order one-sided stencil."""
    vals = g.values
    h = g.grid.spacing[-1]
    return (-3.0 * vals[..., 0, :, :] + 4.0 * vals[..., 1, :, :] - vals[..., 2, :, :]) / (2.0 * h)


def check_condition(data: BoundaryData) -> MarginReport:
    data.validate()
    n = data.grid.n
    L = -0.5 * normal_derivative_at_boundary(data.g)[..., : n - 1, : n - 1]
    II = np.einsum("...a,...aij->...ij", data.mu, data.f_hess)
    eig = np.linalg.eigvalsh(_sym(II - L))[..., 0]
    node = np.unravel_index(int(np.argmin(eig)), eig.shape)
    return MarginReport(float(eig[node]), tuple(int(i) for i in node), L, II)


# ---------------------------------------------------------------- ansatz

@dataclass
class AnsatzResult:
    """The short ansatz on the chart cropped to 0 <= x_n <= d0."""
    u: ImmersionField
    g: SymTensorField
    deficit: np.ndarray
    deficit_grad: np.ndarray
    linear: np.ndarray
    d0: float
    remainder: float
    data: BoundaryData


def _crop_rows(grid: Grid, rows: int) -> Grid:
    hi = grid.hi[:-1] + (grid.lo[-1] + (rows - 1) * grid.spacing[-1],)
    return Grid(grid.lo, hi, grid.resolution[:-1] + (rows,))


def _ansatz_jets(data: BoundaryData) -> ImmersionField:
    grid = data.grid
    n = grid.n
    x = grid.axes()[-1]
    s = x - x ** 2
    ds = 1.0 - 2.0 * x

    def lift(b):
        return np.broadcast_to(np.expand_dims(b, n - 1), grid.shape + b.shape[n - 1:])

    f, mu = lift(data.f), lift(data.mu)
    fj, mj = lift(data.f_jac), lift(data.mu_jac)
    fh, mh = lift(data.f_hess), lift(data.mu_hess)
    sv = s.reshape((1,) * (n - 1) + (-1,) + (1,))
    dsv = ds.reshape((1,) * (n - 1) + (-1,) + (1,))
    values = f + sv * mu
    jac = np.empty(grid.shape + (n + 1, n))
    jac[..., : n - 1] = fj + sv[..., None] * mj
    jac[..., n - 1] = dsv * mu
    hess = np.empty(grid.shape + (n + 1, n, n))
    hess[..., : n - 1, : n - 1] = fh + sv[..., None, None] * mh
    hess[..., : n - 1, n - 1] = dsv[..., None] * mj
    hess[..., n - 1, : n - 1] = hess[..., : n - 1, n - 1]
    hess[..., n - 1, n - 1] = -2.0 * mu
    return ImmersionField(grid, values, jac, hess)


def short_ansatz(data: BoundaryData, min_rows: int = 9) -> AnsatzResult:
    """u = f + mu x_n - mu x_n^2, with d0 shrunk until the deficit is controlled.

    The admissible depth is the largest one on which g - du^T du dominates
    half of its linear part blockdiag(2 II + d_n g, 4) x_n at every node with
    0 < x_n.
    """
    report = check_condition(data)
    if not report.admissible:
        raise ConditionError(report)
    n = data.grid.n
    u = _ansatz_jets(data)
    G, dG = metric_jet(u)
    S = data.g.values - G
    dS = fd_gradient(data.g.values, data.grid) - dG
    x = data.grid.axes()[-1]
    lin_coef = np.zeros(data.grid.shape[:-1] + (n, n))
    lin_coef[..., : n - 1, : n - 1] = 2.0 * (report.II - report.L)
    lin_coef[..., n - 1, n - 1] = 4.0
    linear = np.expand_dims(lin_coef, n - 1) * x.reshape((1,) * (n - 1) + (-1, 1, 1))
    slack = np.linalg.eigvalsh(_sym(S - 0.5 * linear))[..., 0]
    ok_rows = np.all(slack.reshape(-1, len(x)) >= -1e-14, axis=0)
    ok_rows &= x <= data.d0 + 1e-12
    rows = len(x) if ok_rows.all() else int(np.argmin(ok_rows))
    if rows < min_rows:
        raise ResolutionError(f"admissible depth spans {rows} grid rows; need {min_rows}")
    grid = _crop_rows(data.grid, rows)

    def cut(a):
        return a[(slice(None),) * (n - 1) + (slice(0, rows),)]

    u = ImmersionField(grid, cut(u.values), cut(u.jac), cut(u.hess))
    S, dS, linear = cut(S), cut(dS), cut(linear)
    xs = x[:rows]
    inner = xs > 0
    rem = np.abs(S - linear).max(axis=tuple(range(n - 1)) + (-2, -1))
    remainder = float((rem[inner] / xs[inner] ** 2).max()) if inner.any() else 0.0
    cropped = BoundaryData(grid, data.f, data.mu, SymTensorField(grid, cut(data.g.values)),
                           float(xs[-1]), data.f_jac, data.f_hess, data.mu_jac, data.mu_hess)
    return AnsatzResult(u, cropped.g, S, dS, linear, float(xs[-1]), remainder, cropped)


# ---------------------------------------------------------------- Whitney layers

def _bump(y: np.ndarray):
    """exp(-1/(1-y^2)) on |y| < 1 and its derivative."""
    inside = np.abs(y) < 1.0
    y = np.where(inside, y, 0.0)
    w = np.where(inside, 1.0 - y ** 2, 1.0)
    b = np.where(inside, np.exp(-1.0 / w), 0.0)
    db = np.where(inside, b * (-2.0 * y / w ** 2), 0.0)
    return b, db


@dataclass
class WhitneyLayers:
    """chi_q, q = 0..Q, with sum chi_q^2 = 1 on 0 <= x_n <= d0.

    chi_q for q < Q is supported in d_{q+1} < x_n < d_{q-1}.  The deepest
    function chi_Q collects every finer layer and covers 0 <= x_n < d_{Q-1}.
    """
    d0: float
    depths: np.ndarray
    chi: list
    C: float
    truncation_depth: float

    @property
    def count(self) -> int:
        return len(self.chi)

    def support(self, q: int) -> np.ndarray:
        return self.chi[q].values > 0


def build_layers(d0: float, grid: Grid, min_rows: int = 4) -> WhitneyLayers:
    h = grid.spacing[-1]
    Q = int(math.floor(math.log2(d0 / (min_rows * h))))
    if Q < 2:
        raise ResolutionError(f"only {max(Q + 1, 0)} dyadic layers are resolvable; need 3")
    xn = grid.coords()[..., -1]
    pos = xn > 0
    y = np.where(pos, np.log2(d0 / np.where(pos, xn, 1.0)), np.inf)
    dy = np.where(pos, -1.0 / (np.where(pos, xn, 1.0) * math.log(2.0)), 0.0)
    top = int(np.ceil(np.nanmax(np.where(np.isfinite(y), y, -1.0)))) + 2
    bs, dbs = zip(*[_bump(y - p) for p in range(max(top, Q + 2))])
    bs, dbs = np.array(bs), np.array(dbs)
    S = (bs ** 2).sum(axis=0)
    dS = 2.0 * (bs * dbs).sum(axis=0)
    T = (bs[Q:] ** 2).sum(axis=0)
    dT = 2.0 * (bs[Q:] * dbs[Q:]).sum(axis=0)
    # on Sigma itself only the deepest function survives
    S = np.where(pos, S, 1.0)
    T = np.where(pos, T, 1.0)
    chi, C = [], 0.0
    for q in range(Q + 1):
        if q < Q:
            val = bs[q] / np.sqrt(S)
            dval = dbs[q] / np.sqrt(S) - 0.5 * bs[q] * dS / S ** 1.5
        else:
            ratio = T / S
            val = np.sqrt(ratio)
            dratio = (dT * S - T * dS) / S ** 2
            dval = np.where(ratio > 0, 0.5 * dratio / np.where(ratio > 0, val, 1.0), 0.0)
        dval = np.where(pos, dval * dy, 0.0)
        grad = np.zeros(grid.shape + (grid.n,))
        grad[..., -1] = dval
        chi.append(ScalarField(grid, val, grad))
        if q >= 1:
            C = max(C, float(np.abs(dval).max()) * d0 * 2.0 ** -q)
    depths = d0 * 2.0 ** -np.arange(Q + 1)
    return WhitneyLayers(d0, depths, chi, C, float(depths[-1]))


# ---------------------------------------------------------------- adapted state

@dataclass
class AdaptedShortState:
    """g - dv^T dv = rho^2 (Id + G) with derivative bounds of constant M."""
    v: ImmersionField
    rho: ScalarField
    G: SymTensorField
    M: float
    r: float
    tau: float
    g: SymTensorField


def definition_margins(v: ImmersionField, rho: ScalarField, G: SymTensorField,
                       g: SymTensorField) -> dict:
    """Measured constants of the adapted-short inequalities on {rho > 0}."""
    grid = v.grid
    active = rho.values > 0
    J = v.jacobian()
    defect = g.values - np.einsum("...ai,...aj->...ij", J, J)
    recon = (rho.values ** 2)[..., None, None] * (np.eye(grid.n) + G.values)
    if not active.any():
        return {"identity": float(np.abs(defect).max()), "r": 0.0, "M_hess": 0.0,
                "M_rho": 0.0, "M_G": 0.0, "M": 0.0, "shortness": 0.0}
    rv = rho.values[active]
    m_hess = pointwise_norm(v.hessian(), grid)[active] * rv ** 2
    m_rho = pointwise_norm(rho.gradient(), grid)[active] * rv
    m_G = pointwise_norm(G.gradient(), grid)[active] * rv ** 3
    eig = np.linalg.eigvalsh(defect[active])[..., 0]
    return {
        "identity": float(np.abs(defect - recon).max()),
        "r": float(operator_norm(G.values[active]).max()),
        "M_hess": float(m_hess.max()),
        "M_rho": float(m_rho.max()),
        "M_G": float(m_G.max()),
        "M": float(max(m_hess.max(), m_rho.max(), m_G.max())),
        "shortness": float(eig.min()),
    }


@dataclass
class ExtensionResult:
    state: AdaptedShortState
    ansatz: AnsatzResult
    layers: WhitneyLayers
    K: float
    report: dict
    diagnostics: list = field(default_factory=list)


def _amplitude(chi: ScalarField, b: ScalarField, b_grad: np.ndarray, rho: ScalarField) -> ScalarField:
    val = chi.values * b.values * rho.values
    grad = (chi.grad * (b.values * rho.values)[..., None]
            + b_grad * (chi.values * rho.values)[..., None]
            + rho.grad * (chi.values * b.values)[..., None])
    return ScalarField(chi.grid, val, grad)


def _run_layers(base: ImmersionField, layer_ids, layers, amps, dirs, theta_of, K, profile,
                gamma_min):
    """Independent stages from a common base, merged by their disjoint supports."""
    values, jac, hess = base.values.copy(), base.jac.copy(), base.hess.copy()
    rows = []
    for q in layer_ids:
        deficits = [(a, w) for a, w in zip(amps[q], dirs) if a.values.max() > 0]
        if not deficits:
            continue
        d_q = layers.depths[q]
        amax = max(a.values.max() for a in amps[q])
        gamma = max(gamma_min, 2.05 * amax ** 2 / d_q)
        theta = theta_of(q)
        p = StepParams(eps=d_q, delta=1.0, theta=theta, theta_tilde=theta,
                       lam=theta * K / math.sqrt(d_q), gamma=gamma)
        res = stage(base, deficits, p, K, profile)
        changed = layers.support(q)
        sel = changed[..., None]
        values = np.where(sel, res.v.values, values)
        jac = np.where(sel[..., None], res.v.jac, jac)
        hess = np.where(sel[..., None, None], res.v.hess, hess)
        for row in res.diagnostics:
            rows.append({"layer": q, **row})
    return ImmersionField(base.grid, values, jac, hess), rows


def adapted_extension(data: BoundaryData, K: float, frame: DirectionFrame | None = None,
                      profile: CorrugationProfile | None = None,
                      ansatz: AnsatzResult | None = None,
                      layers: WhitneyLayers | None = None) -> ExtensionResult:
    """Absorb (g - du^T du - tau rho^2 Id) on every layer, odd layers first."""
    ans = ansatz or short_ansatz(data)
    grid = ans.u.grid
    n = grid.n
    frame = frame or balanced_frame(n)
    S, dS = ans.deficit, ans.deficit_grad
    inner = grid.coords()[..., -1] > 0
    rho2 = np.where(inner, np.trace(S, axis1=-2, axis2=-1) / n, 0.0)
    drho2 = np.where(inner[..., None], np.trace(dS, axis1=-3, axis2=-2) / n, 0.0)
    rho_v = np.sqrt(np.maximum(rho2, 0.0))
    rho_grad = np.where(inner[..., None], drho2 / (2.0 * np.where(inner, rho_v, 1.0))[..., None], 0.0)
    rho = ScalarField(grid, rho_v, rho_grad)
    eig = np.linalg.eigvalsh(S[inner])[..., 0]
    tau = 0.5 * float((eig / (2.0 * rho2[inner])).min())
    if tau <= 0:
        raise ExtensionError("deficit is not positive definite inside the chart")
    glob = decompose_global(SymTensorField(grid, S), rho, tau, frame)
    b_grads = [fd_gradient(b.values, grid) for b in glob.coefficients]
    layers = layers or build_layers(ans.d0, grid)
    amps = {q: [_amplitude(layers.chi[q], b, bg, rho) for b, bg in zip(glob.coefficients, b_grads)]
            for q in range(layers.count)}
    lo_eig = float(np.linalg.eigvalsh(metric_jet(ans.u)[0])[..., 0].min())
    hi_eig = float(np.linalg.eigvalsh(ans.g.values)[..., -1].max())
    # a deficit whose rescaled amplitude would leave the profile domain is
    # absorbed in equal parts by repeated steps along the same direction
    amax = max(float(a.values.max()) for q in amps for a in amps[q])
    if profile is None:
        # widen the tabulated domain instead of splitting: every extra step
        # multiplies the even-layer frequencies by K
        need = 1.1 * lo_eig ** -0.5 * amax
        profile = default_profile() if need <= DELTA_STAR else CorrugationProfile(
            delta_star=math.ceil(2.0 * need) / 2.0)
    # |xi~| <= lambda_min(du^T du)^(-1/2), and the metric only grows stage by stage
    xi_bound = lo_eig ** -0.5
    # every intermediate metric lies between du^T du and g
    gamma_min = max(2.0, 1.05 / (2.0 * lo_eig), 1.05 * hi_eig / 2.0)
    splits = max(1, math.ceil((1.1 * xi_bound * amax / profile.delta_star) ** 2))
    if splits > 1:
        scale = 1.0 / math.sqrt(splits)
        amps = {q: [ScalarField(grid, a.values * scale, a.grad * scale)
                    for a in amps[q] for _ in range(splits)] for q in amps}
    directions = np.repeat(glob.directions, splits, axis=0)
    N = len(directions)
    odd = [q for q in range(layers.count) if q % 2 == 1]
    even = [q for q in range(layers.count) if q % 2 == 0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v_odd, rows_odd = _run_layers(ans.u, odd, layers, amps, directions,
                                      lambda q: 1.0 / layers.depths[q], K, profile, gamma_min)
        v, rows_even = _run_layers(v_odd, even, layers, amps, directions,
                                   lambda q: K ** N / layers.depths[q], K, profile, gamma_min)

    g = ans.g
    Jg, dJg = metric_jet(v)
    D = g.values - Jg
    dD = fd_gradient(g.values, grid) - dJg
    rho_out = ScalarField(grid, math.sqrt(tau) * rho_v, math.sqrt(tau) * rho_grad)
    t2 = np.where(inner, tau * rho2, 1.0)
    Gv = np.where(inner[..., None, None], D / t2[..., None, None] - np.eye(n), 0.0)
    dG = dD / t2[..., None, None, None] - np.einsum(
        "...ij,...k->...ijk", D, tau * drho2 / t2[..., None] ** 2)
    dG = np.where(inner[..., None, None, None], dG, 0.0)
    G = SymTensorField(grid, Gv, dG)
    report = definition_margins(v, rho_out, G, g)
    ratio = rho_out.values[inner] ** 2 / grid.coords()[..., -1][inner]
    report.update({
        "K": K, "tau": tau, "d0": ans.d0, "layers": layers.count, "steps": N,
        "splits": splits,
        "layer_C": layers.C, "remainder": ans.remainder,
        "rho2_over_xn_min": float(ratio.min()), "rho2_over_xn_max": float(ratio.max()),
        "boundary_trace": float(np.abs(v.values[..., 0, :] - data.f).max()),
        "max_lambda": max((row["lam"] for row in rows_odd + rows_even), default=0.0),
    })
    state = AdaptedShortState(v, rho_out, G, report["M"], report["r"], tau, g)
    return ExtensionResult(state, ans, layers, K, report, rows_odd + rows_even)


def extension_sweep(data: BoundaryData, Ks, r_max: float, M_max: float = math.inf,
                    frame: DirectionFrame | None = None,
                    profile: CorrugationProfile | None = None) -> ExtensionResult:
    """First K in ``Ks`` whose state meets |G| <= r_max and M <= M_max."""
    ans = short_ansatz(data)
    layers = build_layers(ans.d0, ans.u.grid)
    reports, last = [], None
    for K in Ks:
        last = adapted_extension(data, K, frame, profile, ans, layers)
        reports.append(last.report)
        if last.report["r"] <= r_max and last.report["M"] <= M_max:
            return last
    G = last.state.G.values
    nodes = np.argwhere(operator_norm(G) > r_max)
    raise ExtensionError(f"no K in {list(Ks)} reaches |G| <= {r_max} with M <= {M_max}",
                         reports, nodes[:20])


# ---------------------------------------------------------------- demo data

def _flat_metric(grid: Grid) -> SymTensorField:
    return SymTensorField(grid, np.broadcast_to(np.eye(grid.n), grid.shape + (grid.n, grid.n)))


def strip_data(radius: float = 1.0, resolution=(129, 129), half_width: float = 1.0,
               depth: float = 0.25, outward: bool = False) -> BoundaryData:
    """Flat strip bounded by an arc of the given radius in the plane x3 = 0.

    f(x1) = r (cos(x1/r), sin(x1/r), 0) with the inward normal, which makes
    the condition margin equal to 1/r.
    """
    grid = Grid((-half_width, 0.0), (half_width, depth), tuple(resolution))
    x1 = grid.axes()[0]
    c, s = np.cos(x1 / radius), np.sin(x1 / radius)
    z = np.zeros_like(x1)
    sign = 1.0 if outward else -1.0
    f = radius * np.stack([c, s, z], axis=-1)
    f_jac = np.stack([-s, c, z], axis=-1)[..., None]
    f_hess = (np.stack([-c, -s, z], axis=-1) / radius)[..., None, None]
    mu = sign * np.stack([c, s, z], axis=-1)
    mu_jac = sign * (np.stack([-s, c, z], axis=-1) / radius)[..., None]
    mu_hess = sign * (np.stack([-c, -s, z], axis=-1) / radius ** 2)[..., None, None]
    return BoundaryData(grid, f, mu, _flat_metric(grid), depth, f_jac, f_hess, mu_jac, mu_hess)


def straight_line_data(resolution=(129, 129), half_width: float = 1.0,
                       depth: float = 0.25) -> BoundaryData:
    """Flat strip along a straight line: both boundary curves are geodesic."""
    grid = Grid((-half_width, 0.0), (half_width, depth), tuple(resolution))
    x1 = grid.axes()[0]
    z = np.zeros_like(x1)
    f = np.stack([x1, z, z], axis=-1)
    mu = np.stack([z, -np.ones_like(x1), z], axis=-1)
    zero1 = np.zeros(x1.shape + (3, 1))
    zero2 = np.zeros(x1.shape + (3, 1, 1))
    f_jac = np.stack([np.ones_like(x1), z, z], axis=-1)[..., None]
    return BoundaryData(grid, f, mu, _flat_metric(grid), depth, f_jac, zero2, zero1, zero2)
