"""Periodic corrugation profile.

The profile is the classical Kuiper ansatz

    (1 + d/dt G1, d/dt G2) = sqrt(1 + s^2) (cos(alpha cos t), sin(alpha cos t))

with alpha(s) fixed by J0(alpha) = 1 / sqrt(1 + s^2), so that both integrands
have zero mean over a period and (G1, G2) are 2*pi periodic in t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

DELTA_STAR = 1.0
TABLE_SIZE = 1024
QUADRATURE_NODES = 64
HARMONICS = 24
CHUNK = 1 << 16


class CorrugationDomainError(ValueError):
    pass


# ---------------------------------------------------------------- Bessel functions

_SERIES_LIMIT = 16.0


def _series(x, order: int, terms: int = 80):
    """Power series of J_order, summed in extended precision against cancellation."""
    x = np.asarray(x, dtype=np.longdouble)
    q = -(x / 2) ** 2
    term = (x / 2) ** order / math.factorial(order)
    total = term
    for m in range(1, terms):
        term = term * q / (m * (m + order))
        total = total + term
    return total.astype(float)


def _hankel(x, order: int, terms: int = 40):
    """Large-argument expansion, summed until its terms stop decreasing."""
    x = np.asarray(x, dtype=float)
    mu = 4.0 * order ** 2
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    last = np.full_like(x, np.inf)
    live = np.ones(x.shape, dtype=bool)
    for k in range(1, terms):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        size = np.abs(term)
        live &= size < last
        last = np.where(live, size, last)
        contrib = np.where(live, term, 0.0)
        if k % 2 == 1:
            q = q + (-1) ** ((k - 1) // 2) * contrib
        else:
            p = p + (-1) ** (k // 2) * contrib
    w = x - (0.5 * order + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * x)) * (p * np.cos(w) - q * np.sin(w))


def bessel_j0(x):
    x = np.abs(np.asarray(x, dtype=float))
    return np.where(x <= _SERIES_LIMIT, _series(np.minimum(x, _SERIES_LIMIT), 0),
                    _hankel(np.maximum(x, _SERIES_LIMIT), 0))


def bessel_j1(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    val = np.where(ax <= _SERIES_LIMIT, _series(np.minimum(ax, _SERIES_LIMIT), 1),
                   _hankel(np.maximum(ax, _SERIES_LIMIT), 1))
    return np.sign(x) * val


def one_minus_j0(x):
    """1 - J0(x) without cancellation near x = 0 (series from its first term)."""
    x = np.asarray(x, dtype=np.longdouble)
    q = -(x / 2) ** 2
    term = -q
    total = term
    for m in range(2, 80):
        term = term * q / (m * m)
        total = total + term
    return total.astype(float)


_SMALL_S = 1e-4


def _small_amplitude(s):
    """alpha = sqrt(2) s (1 - 5 s^2/16) + O(s^5), from expanding both sides of the J0 condition."""
    s = np.asarray(s, dtype=float)
    return math.sqrt(2.0) * s * (1.0 - 5.0 * s * s / 16.0)


def _deficit_target(s):
    """1 - 1/sqrt(1 + s^2), written without cancellation."""
    root = np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)
    return np.asarray(s, dtype=float) ** 2 / (root * (1.0 + root))


def _bisect(fn, lo: float, hi: float, tol: float = 1e-15, maxiter: int = 200) -> float:
    flo = fn(lo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


J0_FIRST_ZERO = _bisect(lambda a: float(bessel_j0(a)), 2.0, 3.0)


def amplitude(s: float, delta_star: float = DELTA_STAR) -> float:
    """Solve J0(alpha) = 1/sqrt(1+s^2) for alpha in [0, j0) by bisection."""
    if s < 0 or s > delta_star:
        raise CorrugationDomainError(f"s = {s} outside [0, {delta_star}]")
    if s < _SMALL_S:
        return float(_small_amplitude(s))
    target = float(_deficit_target(s))
    return _bisect(lambda a: target - float(one_minus_j0(a)), 0.0, J0_FIRST_ZERO, tol=1e-15)


def amplitude_array(s) -> np.ndarray:
    """Vectorized bisection for alpha(s); same root as :func:`amplitude`."""
    s = np.asarray(s, dtype=float)
    target = _deficit_target(s)
    lo = np.zeros_like(s)
    hi = np.full_like(s, J0_FIRST_ZERO)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        above = one_minus_j0(mid) < target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return np.where(s < _SMALL_S, _small_amplitude(s), 0.5 * (lo + hi))


def amplitude_derivative(s, alpha):
    """d alpha / ds = -s / ((1+s^2)^{3/2} J0'(alpha)), with J0' = -J1."""
    s = np.asarray(s, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    j1 = bessel_j1(alpha)
    small = alpha < 1e-6
    safe = np.where(small, 1.0, j1)
    out = s / ((1.0 + s * s) ** 1.5 * safe)
    # alpha ~ sqrt(2) s near zero, J1(alpha) ~ alpha / 2
    return np.where(small, math.sqrt(2.0), out)


# ---------------------------------------------------------------- the profile

def _integrands(s, alpha, dalpha, tau):
    """t-integrands of G1, G2 and their s-derivatives on quadrature nodes."""
    root = np.sqrt(1.0 + s * s)
    phase = alpha * np.cos(tau)
    c, sn = np.cos(phase), np.sin(phase)
    f1 = root * c - 1.0
    f2 = root * sn
    droot = s / root
    dphase = dalpha * np.cos(tau)
    df1 = droot * c - root * sn * dphase
    df2 = droot * sn + root * c * dphase
    return f1, f2, df1, df2


def _cos_coefficients(samples: np.ndarray) -> np.ndarray:
    """Cosine-series coefficients of even periodic samples on equispaced nodes.

    samples[..., j] at tau_j = 2 pi j / P; returns a_0 (mean) and a_k with
    f(tau) = a_0 + sum_k a_k cos(k tau) (trapezoid rule, exact for
    trigonometric polynomials of degree < P/2).
    """
    spec = np.fft.rfft(samples, axis=-1) / samples.shape[-1]
    coef = 2.0 * spec.real
    coef[..., 0] *= 0.5
    return coef[..., :HARMONICS + 1]


_PARITY = {"f1": 0, "df1": 0, "f2": 1, "df2": 1}


def _harmonics(parity: int) -> np.ndarray:
    ks = np.arange(1, HARMONICS + 1)
    return ks[ks % 2 == parity]


def _columns(parity: int) -> np.ndarray:
    """Mean column followed by the harmonics of one parity."""
    return np.concatenate([[0], _harmonics(parity)])


@dataclass
class CorrugationProfile:
    """Tabulated corrugation pair on [0, delta_star] x R."""
    delta_star: float = DELTA_STAR
    table_size: int = TABLE_SIZE
    quadrature_order: int = QUADRATURE_NODES
    s_table: np.ndarray = field(init=False, repr=False)
    amplitude_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.linspace(0.0, self.delta_star, self.table_size)
        alpha = amplitude_array(s)
        dalpha = amplitude_derivative(s, alpha)
        self.s_table = s
        self.amplitude_table = alpha
        tau = 2.0 * np.pi * np.arange(self.quadrature_order) / self.quadrature_order
        f1, f2, df1, df2 = _integrands(s[:, None], alpha[:, None], dalpha[:, None], tau[None, :])
        self._coef = {name: _cos_coefficients(v)
                      for name, v in (("f1", f1), ("f2", f2), ("df1", df1), ("df2", df2))}
        self._alpha_spline = CubicSpline(s, alpha)
        self._dalpha_spline = CubicSpline(s, dalpha)
        # cos(alpha cos t) has only even harmonics and sin(alpha cos t) only odd ones
        self._splines = {name: CubicSpline(s, c[:, _columns(_PARITY[name])], axis=0)
                         for name, c in self._coef.items()}

    # -- amplitude

    def alpha(self, s):
        s = np.asarray(s, dtype=float)
        self._check(s)
        out = self._alpha_spline(s)
        return np.where(s == 0.0, 0.0, out)

    def _check(self, s):
        if np.any(s < 0) or np.any(s > self.delta_star * (1 + 1e-12)):
            raise CorrugationDomainError(
                f"amplitude outside [0, {self.delta_star}]: range "
                f"[{float(np.min(s)):.4g}, {float(np.max(s)):.4g}]")

    def period_means(self, s):
        """Period means of d/dt G1 and d/dt G2 (both vanish up to rounding)."""
        s = np.asarray(s, dtype=float)
        return self._splines["f1"](s)[..., 0], self._splines["f2"](s)[..., 0]

    # -- evaluation

    def _series(self, name: str, s, t, ds: int = 0):
        """Antiderivative in t of the tabulated integrand ``name``.

        The sine sum over harmonics of one parity is evaluated by Clenshaw's
        recurrence in the step-two angle, so each node costs two sines.
        """
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        flat_s, flat_t = s.ravel(), t.ravel()
        out = np.empty(flat_s.shape)
        ks = _harmonics(_PARITY[name])
        k0 = int(ks[0])
        for lo in range(0, flat_s.size, CHUNK):
            cs, ct = flat_s[lo:lo + CHUNK], flat_t[lo:lo + CHUNK]
            coef = self._splines[name](cs, ds)
            step = 2.0 * np.cos(2.0 * ct)
            b1 = np.zeros_like(ct)
            b2 = np.zeros_like(ct)
            for j in range(len(ks) - 1, -1, -1):
                b1, b2 = coef[:, j + 1] / ks[j] + step * b1 - b2, b1
            total = b1 * np.sin(k0 * ct) + b2 * np.sin((2 - k0) * ct)
            out[lo:lo + CHUNK] = coef[:, 0] * ct + total
        return out.reshape(s.shape)

    def gamma(self, s, t):
        """(G1, G2)(s, t)."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        self._check(s)
        g1 = self._series("f1", s, t)
        g2 = self._series("f2", s, t)
        zero = s == 0.0
        return np.where(zero, 0.0, g1), np.where(zero, 0.0, g2)

    def gamma_t(self, s, t, k: int = 1):
        """k-th t-derivative of (G1, G2), k in {1, 2}, from the closed-form integrand."""
        if k == 0:
            return self.gamma(s, t)
        if k > 2:
            raise ValueError("t-derivatives above order 2 are not supported")
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        alpha = self.alpha(s)
        root = np.sqrt(1.0 + s * s)
        phase = alpha * np.cos(t)
        if k == 1:
            return root * np.cos(phase) - 1.0, root * np.sin(phase)
        dphase = -alpha * np.sin(t)
        return -root * np.sin(phase) * dphase, root * np.cos(phase) * dphase

    def gamma_s(self, s, t, k: int = 0):
        """d/ds d^k/dt^k of (G1, G2) for k in {0, 1, 2}."""
        if k > 2:
            raise ValueError("t-derivatives above order 2 are not supported")
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        self._check(s)
        if k == 0:
            return (self._series("df1", s, t),
                    self._series("df2", s, t))
        alpha = self.alpha(s)
        dalpha = self._dalpha_spline(s)
        f1, f2, df1, df2 = _integrands(s, alpha, dalpha, t)
        if k == 1:
            return df1, df2
        root = np.sqrt(1.0 + s * s)
        droot = s / root
        phase = alpha * np.cos(t)
        dphase_t = -alpha * np.sin(t)
        c, sn = np.cos(phase), np.sin(phase)
        # d/dt of df1 = droot cos(phase) - root sin(phase) dalpha cos t
        d2f1 = (-droot * sn * dphase_t - root * c * dphase_t * dalpha * np.cos(t)
                + root * sn * dalpha * np.sin(t))
        d2f2 = (droot * c * dphase_t - root * sn * dphase_t * dalpha * np.cos(t)
                - root * c * dalpha * np.sin(t))
        return d2f1, d2f2

    def gamma_ss(self, s, t):
        """Second s-derivative of (G1, G2) (from the differentiated coefficient splines)."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        self._check(s)
        return self._series("df1", s, t, ds=1), self._series("df2", s, t, ds=1)

    def gamma_partials(self, s, t, k: int, with_s: bool = False):
        if k > 2:
            raise ValueError("t-derivatives above order 2 are not supported")
        out = {"t": self.gamma_t(s, t, k) if k else self.gamma(s, t)}
        if with_s:
            out["s"] = self.gamma_s(s, t, k)
        return out

    def identity_residual(self, s, t):
        d1, d2 = self.gamma_t(s, t, 1)
        s = np.asarray(s, dtype=float)
        return (1.0 + d1) ** 2 + d2 ** 2 - (1.0 + s * s)


_DEFAULT: CorrugationProfile | None = None


def default_profile() -> CorrugationProfile:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = CorrugationProfile()
    return _DEFAULT


def corrugation_table(profile: CorrugationProfile, ns: int = 64, nt: int = 256) -> np.ndarray:
    """Rows (s, t, G1, G2, identity residual) on an ns x nt grid of [0, delta*] x [0, 2 pi]."""
    s, t = np.meshgrid(np.linspace(0.0, profile.delta_star, ns),
                       np.linspace(0.0, 2.0 * np.pi, nt), indexing="ij")
    g1, g2 = profile.gamma(s, t)
    res = profile.identity_residual(s, t)
    return np.column_stack([s.ravel(), t.ravel(), g1.ravel(), g2.ravel(), res.ravel()])
