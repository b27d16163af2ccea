"""Inductive scheme turning an adapted short immersion into an isometric one.

Iterate q removes the part of the deficit lying above the level
eps_{q+1}: on {rho_q > 7/4 eps_{q+1}^(1/2)} a conformal stage adds
(rho_q^2 - eps_{q+1})(Id + G~_q), leaving a deficit of size eps_{q+1} there
and nothing changed elsewhere.  Every field carries exact first derivatives
(and the immersion its Hessian), so the checks below never difference a
corrugated field on the grid.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .convex_integration import (ConvexIntegrationError, FrequencyCapError, StepParams,
                                 add_conformal_deficit)
from .corrugation import CorrugationProfile
from .decomposition import DirectionFrame, OutOfRadiusError, balanced_frame, n_star
from .extension import AdaptedShortState
from .fields import ImmersionField, ScalarField, SymTensorField, fd_gradient, metric_jet, \
    operator_norm, pointwise_norm

__all__ = [
    "ScheduleError", "SummabilityWarning", "IterationAbort", "EscalationExhausted", "StallError",
    "check_alpha", "Schedule", "LevelSets", "level_sets", "cutoff", "CutoffPair", "cutoffs", "Check",
    "Verification", "verify_adapted", "deficit_split", "IterateResult", "iterate_once",
    "ConvergenceReport", "RunResult", "run", "metric_defect", "tail_ratios",
]


class ScheduleError(ValueError):
    """Schedule parameters outside their admissible ranges."""


class SummabilityWarning(UserWarning):
    """The requested Hoelder exponent is above the summability threshold of the schedule."""


class IterationAbort(ConvexIntegrationError):
    """An iterate broke an inductive bound; a larger A is required."""

    def __init__(self, message: str, q: int, verification=None):
        super().__init__(f"iterate {q}: {message}; increase A")
        self.q = q
        self.verification = verification


class EscalationExhausted(ConvexIntegrationError):
    def __init__(self, message: str, report):
        super().__init__(message)
        self.report = report


class StallError(ConvexIntegrationError):
    def __init__(self, message: str, report):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------- schedule

def check_alpha(alpha: float, n: int) -> None:
    """Reject Hoelder exponents at or above the extension theorem's 1/(n(n+1)+1)."""
    denom = n * (n + 1) + 1
    if alpha >= 1.0 / denom:
        raise ScheduleError(
            f"alpha = {alpha} is not below 1/(n(n+1)+1) = 1/{denom}: "
            f"the isometric extension theorem only provides C^(1,alpha) limits "
            f"for alpha < 1/(n(n+1)+1)")


@dataclass(frozen=True)
class Schedule:
    """eps_q = eps0 A^(-2aq) and theta_q = A^((n*+a)q + 3a).

    ``alpha`` is the target Hoelder exponent of the limit.  It must stay below
    1/(n(n+1)+1); at or above a/(n*+a) the increments are not expected to be
    summable in C^{1,alpha} and a :class:`SummabilityWarning` is emitted.
    """
    eps0: float
    a: float
    A: float
    n: int = 2
    alpha: float | None = None

    def __post_init__(self):
        if not (0 < self.a < 0.5):
            raise ScheduleError(f"a must lie in (0, 1/2), got {self.a}")
        if not self.A > 1:
            raise ScheduleError(f"A must exceed 1, got {self.A}")
        if not self.eps0 > 0:
            raise ScheduleError(f"eps0 must be positive, got {self.eps0}")
        if self.n < 2:
            raise ScheduleError(f"dimension must be at least 2, got {self.n}")
        if self.alpha is not None:
            if not self.alpha > 0:
                raise ScheduleError(f"alpha must be positive, got {self.alpha}")
            check_alpha(self.alpha, self.n)
            if self.alpha >= self.alpha_ceiling:
                warnings.warn(
                    f"alpha = {self.alpha} >= a/(n*+a) = {self.alpha_ceiling:.5f}: "
                    f"C^(1,alpha) summability of the increments is not expected",
                    SummabilityWarning, stacklevel=3)

    @property
    def n_star(self) -> int:
        return n_star(self.n)

    @property
    def alpha_ceiling(self) -> float:
        return self.a / (self.n_star + self.a)

    def eps(self, q: int) -> float:
        return self.eps0 * self.A ** (-2.0 * self.a * q)

    def theta(self, q: int) -> float:
        return self.A ** ((self.n_star + self.a) * q + 3.0 * self.a)

    def escalated(self) -> "Schedule":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SummabilityWarning)
            return replace(self, A=2.0 * self.A)

    @classmethod
    def for_state(cls, state: AdaptedShortState, a: float, A: float, alpha: float | None = None,
                  eps0: float | None = None) -> "Schedule":
        """eps0 defaults to max(max rho0^2, 1)."""
        if eps0 is None:
            eps0 = max(float(state.rho.values.max()) ** 2, 1.0)
        return cls(eps0, a, A, state.v.grid.n, alpha)


# ---------------------------------------------------------------- level sets and cutoffs

@dataclass
class LevelSets:
    """masks[j] = {rho_q > 9/8 eps_{j+1}^(1/2)}, nested increasing in j."""
    masks: list
    thresholds: np.ndarray

    def level(self) -> np.ndarray:
        """Smallest j with the node in masks[j]; -1 where rho_q = 0."""
        out = np.full(self.masks[0].shape, -1, dtype=int)
        for j in reversed(range(len(self.masks))):
            out[self.masks[j]] = j
        return out


def level_sets(rho: ScalarField, sched: Schedule, max_levels: int = 400) -> LevelSets:
    r = rho.values
    positive = r[r > 0]
    floor = float(positive.min()) if positive.size else math.inf
    masks, thresholds = [], []
    for j in range(max_levels):
        t = 9.0 / 8.0 * math.sqrt(sched.eps(j + 1))
        masks.append(r > t)
        thresholds.append(t)
        if t < floor:
            break
    return LevelSets(masks, np.array(thresholds))


def cutoff(s):
    """chi(s) = 0 for s <= 7/4, 1 for s >= 2, smooth in between; returns (chi, chi')."""
    s = np.asarray(s, dtype=float)
    x = np.clip((s - 1.75) * 4.0, 0.0, 1.0)
    inner = (x > 0) & (x < 1)
    xs = np.where(inner, x, 0.5)
    f0, f1 = np.exp(-1.0 / xs), np.exp(-1.0 / (1.0 - xs))
    chi = np.where(inner, f0 / (f0 + f1), x)
    df0, df1 = f0 / xs ** 2, -f1 / (1.0 - xs) ** 2
    dchi = np.where(inner, 4.0 * (df0 * (f0 + f1) - f0 * (df0 + df1)) / (f0 + f1) ** 2, 0.0)
    return chi, dchi


@dataclass
class CutoffPair:
    phi: ScalarField
    psi: ScalarField


def cutoffs(rho: ScalarField, sched: Schedule, q: int) -> CutoffPair:
    root = math.sqrt(sched.eps(q + 1))
    grad = rho.gradient()
    out = []
    for scale in (1.0, 4.0 / 3.0):
        c, dc = cutoff(scale * rho.values / root)
        out.append(ScalarField(rho.grid, c, (dc * scale / root)[..., None] * grad))
    return CutoffPair(*out)


# ---------------------------------------------------------------- verification

@dataclass
class Check:
    name: str
    ok: bool
    worst: float
    node: tuple | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "worst": self.worst,
                "node": None if self.node is None else list(self.node)}


@dataclass
class Verification:
    """Worst ratio of each inductive bound (a ratio <= 1 passes)."""
    q: int
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list:
        return [c.name for c in self.checks if not c.ok]


def _worst(ratio: np.ndarray, mask: np.ndarray, name: str, slack: float = 1e-12) -> Check:
    if not mask.any():
        return Check(name, True, 0.0, None)
    r = np.where(mask, ratio, -np.inf)
    node = np.unravel_index(int(np.argmax(r)), r.shape)
    worst = float(r[node])
    return Check(name, worst <= 1.0 + slack, worst, tuple(int(i) for i in node))


def verify_adapted(state: AdaptedShortState, sched: Schedule, q: int,
                   frame: DirectionFrame | None = None, M: float | None = None) -> Verification:
    """Evaluate the three inductive conditions at iterate q, nodewise.

    G_radius / rho_ceiling: |G_q| <= r2 and rho_q <= 4 eps_q^(1/2).
    small_rho_G: |G_q| <= r1 wherever rho_q <= 2 eps_{q+1}^(1/2).
    hessian / rho_gradient / G_gradient: on the level set of index j >= q,
    |d^2 v| <= M eps_j^(1/2) theta_j, |d rho| <= M eps_{j+1}^(1/2) theta_j and
    |dG| <= M theta_j.
    """
    grid = state.v.grid
    frame = frame or balanced_frame(grid.n)
    M = state.M if M is None else M
    rho = state.rho.values
    Gn = operator_norm(state.G.values)
    everywhere = np.ones(grid.shape, dtype=bool)
    checks = [
        _worst(Gn / frame.r2, everywhere, "G_radius"),
        _worst(rho / (4.0 * math.sqrt(sched.eps(q))), everywhere, "rho_ceiling"),
        _worst(Gn / frame.r1, rho <= 2.0 * math.sqrt(sched.eps(q + 1)), "small_rho_G"),
    ]
    levels = level_sets(state.rho, sched, max_levels=400 + q).level()
    active = levels >= 0
    j = np.maximum(levels, q)
    # deep levels overflow theta_j to inf, which only makes their bounds vacuous
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        eps_j = sched.eps0 * sched.A ** (-2.0 * sched.a * j)
        eps_j1 = sched.eps0 * sched.A ** (-2.0 * sched.a * (j + 1))
        theta_j = sched.A ** ((sched.n_star + sched.a) * j + 3.0 * sched.a)
    hess = pointwise_norm(state.v.hessian(), grid)
    drho = pointwise_norm(state.rho.gradient(), grid)
    dG = pointwise_norm(state.G.gradient(), grid)
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        ratios = [np.nan_to_num(hess / (M * np.sqrt(eps_j) * theta_j)),
                  np.nan_to_num(drho / (M * np.sqrt(eps_j1) * theta_j)),
                  np.nan_to_num(dG / (M * theta_j))]
    checks += [_worst(r, active, name)
               for r, name in zip(ratios, ("hessian", "rho_gradient", "G_gradient"))]
    return Verification(q, checks)


# ---------------------------------------------------------------- one iterate

def deficit_split(state: AdaptedShortState, sched: Schedule, q: int,
                  frame: DirectionFrame | None = None, cut: CutoffPair | None = None):
    """rho~_q = phi sqrt(rho^2 - eps_{q+1}) and G~_q = psi rho^2 G/(rho^2 - eps_{q+1}).

    Both carry exact gradients.  Raises :class:`OutOfRadiusError` when G~_q
    leaves the decomposition radius.
    """
    grid = state.v.grid
    frame = frame or balanced_frame(grid.n)
    cut = cut or cutoffs(state.rho, sched, q)
    e1 = sched.eps(q + 1)
    rho, drho = state.rho.values, state.rho.gradient()
    G, dG = state.G.values, state.G.gradient()
    phi, dphi = cut.phi.values, cut.phi.grad
    psi, dpsi = cut.psi.values, cut.psi.grad
    gap = rho ** 2 - e1
    # psi > 0 forces rho >= 21/16 eps_{q+1}^(1/2), so the gap is positive there
    live = psi > 0
    safe = np.where(live, gap, 1.0)
    root = np.sqrt(np.where(phi > 0, safe, 1.0))
    rt = np.where(phi > 0, phi * root, 0.0)
    drt = np.where((phi > 0)[..., None],
                   dphi * root[..., None] + (phi * rho / root)[..., None] * drho, 0.0)
    c = np.where(live, rho ** 2 / safe, 0.0)
    dc = np.where(live[..., None], -2.0 * e1 * (rho / safe ** 2)[..., None] * drho, 0.0)
    Gt = np.where(live[..., None, None], (psi * c)[..., None, None] * G, 0.0)
    dGt = (np.einsum("...k,...ij->...ijk", dpsi * c[..., None] + psi[..., None] * dc, G)
           + (psi * c)[..., None, None, None] * dG)
    dGt = np.where(live[..., None, None, None], dGt, 0.0)
    rho_t = ScalarField(grid, rt, drt)
    G_t = SymTensorField(grid, Gt, dGt)
    norm = operator_norm(Gt)
    active = rt > 0
    if active.any() and norm[active].max() > frame.r0:
        node = tuple(int(i) for i in np.argwhere(active & (norm > frame.r0))[0])
        raise OutOfRadiusError(frame.coefficients(np.eye(grid.n) + Gt[node]), node)
    return rho_t, G_t


def metric_defect(v: ImmersionField, g: SymTensorField) -> np.ndarray:
    J = v.jacobian()
    return g.values - np.einsum("...ai,...aj->...ij", J, J)


@dataclass
class IterateResult:
    state: AdaptedShortState
    row: dict
    before: Verification
    after: Verification
    increment: np.ndarray
    diagnostics: list = field(default_factory=list)


def _pinching_gamma(v: ImmersionField, g: SymTensorField) -> float:
    lo = float(np.linalg.eigvalsh(metric_jet(v)[0])[..., 0].min())
    hi = float(np.linalg.eigvalsh(g.values)[..., -1].max())
    return max(1.05 / (2.0 * lo), 1.05 * hi / 2.0)


def iterate_once(state: AdaptedShortState, sched: Schedule, q: int, K: float | None = None,
                 frame: DirectionFrame | None = None, profile: CorrugationProfile | None = None,
                 strict: bool = True) -> IterateResult:
    """(v_q, rho_q, G_q) -> (v_{q+1}, rho_{q+1}, G_{q+1}).

    The stage runs with eps = delta = eps_q, theta = theta_q and stage ratio K
    (default A).  Nodes with phi_q = 0 are copied unchanged.  In strict mode a
    failure of the radius or small-rho bounds after the iterate raises
    :class:`IterationAbort`; the derivative bounds and increment bounds are
    always reported, never enforced.
    """
    grid = state.v.grid
    n = grid.n
    frame = frame or balanced_frame(n)
    K = sched.A if K is None else K
    before = verify_adapted(state, sched, q, frame)
    cut = cutoffs(state.rho, sched, q)
    try:
        rho_t, G_t = deficit_split(state, sched, q, frame, cut)
    except OutOfRadiusError as err:
        raise IterationAbort(f"split deficit leaves the decomposition radius ({err})", q,
                             before) from err
    eq, e1 = sched.eps(q), sched.eps(q + 1)
    theta = sched.theta(q)
    phi = cut.phi.values
    on = phi > 0
    v = state.v
    rows = []
    if on.any():
        gamma = max(2.0, 2.05 * float(rho_t.values.max()) ** 2 / eq, _pinching_gamma(v, state.g))
        p = StepParams(eps=eq, delta=eq, theta=theta, theta_tilde=theta, lam=theta * K,
                       M=max(state.M, 1.0), gamma=gamma)
        try:
            res = add_conformal_deficit(v, rho_t, G_t, p, K, frame, profile)
        except OutOfRadiusError as err:
            raise IterationAbort(f"regularized deficit leaves the decomposition radius ({err})",
                                 q, before) from err
        new_v, increment, rows = res.v, res.increment, res.diagnostics
    else:
        new_v, increment = v, np.zeros_like(v.values)

    D_old = metric_defect(v, state.g)
    D_new = metric_defect(new_v, state.g)
    phi2 = phi ** 2
    E = D_new - ((1.0 - phi2)[..., None, None] * D_old + (phi2 * e1)[..., None, None] * np.eye(n))
    if np.any(E[~on] != 0.0):
        raise ConvexIntegrationError("stage error is not supported in supp phi_q")

    rho, drho2 = state.rho.values, 2.0 * state.rho.values[..., None] * state.rho.gradient()
    dphi2 = 2.0 * phi[..., None] * cut.phi.grad
    r2_new = rho ** 2 * (1.0 - phi2) + e1 * phi2
    dr2_new = drho2 * (1.0 - phi2)[..., None] + (e1 - rho ** 2)[..., None] * dphi2
    rho_new = np.sqrt(r2_new)
    drho_new = dr2_new / (2.0 * np.where(on, rho_new, 1.0))[..., None]
    _, dJ = metric_jet(new_v)
    dD = fd_gradient(state.g.values, grid) - dJ
    safe = np.where(on, r2_new, 1.0)
    G_new = D_new / safe[..., None, None] - np.eye(n)
    dG_new = (dD / safe[..., None, None, None]
              - np.einsum("...ij,...k->...ijk", D_new, dr2_new / safe[..., None] ** 2))

    keep = ~on
    vals = np.where(keep[..., None], v.values, new_v.values)
    jac = np.where(keep[..., None, None], v.jac, new_v.jac)
    hess = np.where(keep[..., None, None, None], v.hessian(), new_v.hess)
    out_v = ImmersionField(grid, vals, jac, hess)
    out_rho = ScalarField(grid, np.where(keep, rho, rho_new),
                          np.where(keep[..., None], state.rho.gradient(), drho_new))
    out_G = SymTensorField(grid, np.where(keep[..., None, None], state.G.values, G_new),
                           np.where(keep[..., None, None, None], state.G.gradient(), dG_new))
    increment = np.where(keep[..., None], 0.0, increment)
    new_state = AdaptedShortState(out_v, out_rho, out_G, state.M, float(operator_norm(
        out_G.values).max()), state.tau, state.g)

    after = verify_adapted(new_state, sched, q + 1, frame)
    d0 = float(pointwise_norm(increment, grid).max())
    d1 = float(pointwise_norm(out_v.jac - v.jac, grid).max())
    d2 = float(pointwise_norm(out_v.hess - v.hessian(), grid).max())
    M = state.M
    defect = float(operator_norm(metric_defect(out_v, state.g)).max())
    row = {
        "q": q + 1, "A": sched.A, "K": K, "eps": e1, "theta": sched.theta(q + 1),
        "defect": defect, "rho_max": float(out_rho.values.max()),
        "G_max": float(operator_norm(out_G.values).max()),
        "E_max": float(operator_norm(E).max()),
        "dv0": d0, "dv1": d1, "dv2": d2,
        "dv0_bound": M * math.sqrt(eq) / theta, "dv1_bound": M * math.sqrt(eq),
        "changed_nodes": int(on.sum()),
        "max_lambda": max((r["lam"] for r in rows), default=0.0),
        "phase_error": max((r["phase_error"] for r in rows), default=0.0),
        "verified": after.ok, "failed": ";".join(after.failed()),
    }
    if strict:
        hard = [c for c in ("G_radius", "rho_ceiling", "small_rho_G") if not after[c].ok]
        if hard:
            raise IterationAbort("bounds " + ", ".join(
                f"{c} (worst ratio {after[c].worst:.3g})" for c in hard) + " fail", q + 1, after)
    return IterateResult(new_state, row, before, after, increment, rows)


# ---------------------------------------------------------------- driver

def tail_ratios(values) -> list:
    """Ratios of successive partial-sum tails sum_{p>m} x_p (m = 0, 1, ...)."""
    x = np.asarray(list(values), dtype=float)
    tails = [x[m:].sum() for m in range(len(x))]
    return [tails[m + 1] / tails[m] if tails[m] > 0 else 0.0 for m in range(len(tails) - 1)]


def _fit_rate(values) -> float | None:
    v = np.asarray([x for x in values if x > 0], dtype=float)
    if len(v) < 2:
        return None
    slope = np.polyfit(np.arange(len(v)), np.log(v), 1)[0]
    return float(math.exp(slope))


@dataclass
class ConvergenceReport:
    rows: list
    stop_reason: str
    schedule: Schedule
    initial_defect: float
    escalations: int = 0
    failures: list = field(default_factory=list)
    distance: float = 0.0
    distance_bound: float = 0.0

    def defects(self) -> list:
        return [self.initial_defect] + [r["defect"] for r in self.rows]

    def holder_increments(self, alpha: float) -> list:
        """|v_q - v_{q-1}|_{1+alpha} interpolated as |.|_1^(1-alpha) |.|_2^alpha."""
        return [r["dv1"] ** (1.0 - alpha) * r["dv2"] ** alpha for r in self.rows]

    def summary(self) -> dict:
        s = self.schedule
        alpha = s.alpha if s.alpha is not None else 0.9 * s.alpha_ceiling
        return {
            "stop_reason": self.stop_reason, "iterates": len(self.rows), "A": s.A, "a": s.a,
            "eps0": s.eps0, "escalations": self.escalations,
            "initial_defect": self.initial_defect,
            "final_defect": self.defects()[-1],
            "defect_rate": _fit_rate(self.defects()[1:]) if len(self.rows) > 1 else None,
            "expected_defect_rate": s.A ** (-2.0 * s.a),
            "increment_rate": _fit_rate(self.holder_increments(alpha)),
            "expected_increment_rate": s.A ** ((s.n_star + s.a) * alpha - s.a),
            "alpha": alpha, "distance": self.distance, "distance_bound": self.distance_bound,
            "failures": self.failures,
        }

    def write_csv(self, path) -> None:
        keys = ["q", "A", "K", "eps", "theta", "defect", "rho_max", "G_max", "E_max", "dv0",
                "dv1", "dv2", "dv0_bound", "dv1_bound", "changed_nodes", "max_lambda",
                "phase_error", "verified", "failed"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: r.get(k) for k in keys})


@dataclass
class RunResult:
    v: ImmersionField
    state: AdaptedShortState
    report: ConvergenceReport
    states: list = field(default_factory=list)


def _run_once(state0, sched, Q_max, tol, K, frame, profile, strict, keep_states):
    defect0 = float(operator_norm(metric_defect(state0.v, state0.g)).max())
    report = ConvergenceReport([], "", sched, defect0)
    state = state0
    states = [state0] if keep_states else []
    total = np.zeros_like(state0.v.values)
    if defect0 <= tol:
        report.stop_reason = "tolerance"
        return RunResult(state.v, state, report, states)
    first = verify_adapted(state0, sched, 0, frame)
    if not first.ok:
        report.failures.append({"q": 0, "failed": first.failed()})
        if strict:
            raise IterationAbort("initial state breaks " + ", ".join(first.failed()), 0, first)
    for q in range(Q_max):
        try:
            res = iterate_once(state, sched, q, K, frame, profile, strict)
        except FrequencyCapError as err:
            report.stop_reason = f"frequency cap: {err}"
            break
        except IterationAbort as err:
            if strict:
                err.report = report
                raise
            report.failures.append({"q": err.q, "failed": str(err)})
            report.stop_reason = f"abort: {err}"
            break
        state = res.state
        total += res.increment
        report.rows.append(res.row)
        if not res.after.ok:
            report.failures.append({"q": q + 1, "failed": res.after.failed()})
        if keep_states:
            states.append(state)
        d = report.defects()
        if d[-1] <= tol:
            report.stop_reason = "tolerance"
            break
        if q + 1 < Q_max and len(d) >= 3 and d[-1] > 0.99 * d[-3]:
            report.stop_reason = "stall"
            report.distance = float(pointwise_norm(total, state.v.grid).max())
            raise StallError(f"defect decreased by less than 1% over iterates {q - 1}..{q + 1} "
                             f"({d[-3]:.3e} -> {d[-1]:.3e})", report)
    else:
        report.stop_reason = "iteration limit"
    report.distance = float(pointwise_norm(total, state.v.grid).max())
    return RunResult(state.v, state, report, states)


def run(state0: AdaptedShortState, sched: Schedule, Q_max: int, tol: float,
        K: float | None = None, frame: DirectionFrame | None = None,
        profile: CorrugationProfile | None = None, strict: bool = True,
        max_escalations: int = 3, keep_states: bool = False) -> RunResult:
    """Iterate until the sup defect is <= tol, Q_max iterates, or a cap halts progress.

    In strict mode an :class:`IterationAbort` doubles A and restarts from
    state0, at most ``max_escalations`` times.
    """
    frame = frame or balanced_frame(state0.v.grid.n)
    if Q_max < 0 or tol < 0:
        raise ScheduleError("Q_max and tol must be nonnegative")
    escalations = 0
    errors = []
    while True:
        try:
            result = _run_once(state0, sched, Q_max, tol, K, frame, profile, strict, keep_states)
            break
        except IterationAbort as err:
            errors.append({"A": sched.A, "error": str(err)})
            if escalations >= max_escalations:
                report = getattr(err, "report", None) or ConvergenceReport([], "", sched, math.nan)
                report.escalations = escalations
                report.failures.extend(errors)
                report.stop_reason = "escalation exhausted"
                raise EscalationExhausted(
                    f"inductive bounds still fail after {escalations} doublings of A "
                    f"(A = {sched.A:g}): {err}", report) from err
            escalations += 1
            sched = sched.escalated()
    report = result.report
    report.escalations = escalations
    report.failures = errors + report.failures
    s = report.schedule
    report.distance_bound = 2.0 * state0.M * math.sqrt(s.eps0) * s.A ** (-s.n_star - 2.0 * s.a)
    return result
