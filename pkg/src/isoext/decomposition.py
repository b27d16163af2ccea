"""Primitive-metric decompositions P = sum_k a_k^2 nu_k (x) nu_k."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Grid, ScalarField, SymTensorField


class DecompositionError(ValueError):
    pass


class OutOfRadiusError(DecompositionError):
    """Some linear coefficient went negative."""

    def __init__(self, coeffs, node=None):
        self.coeffs = np.asarray(coeffs)
        self.node = node
        where = f" at node {node}" if node is not None else ""
        super().__init__(f"negative primitive coefficient{where}: min {self.coeffs.min():.3e}")


class MarginViolationError(DecompositionError):
    def __init__(self, node, eig):
        self.node = tuple(int(i) for i in node)
        super().__init__(f"S - tau rho^2 Id is not positive definite at node {self.node} "
                         f"(smallest eigenvalue {eig:.3e})")


def n_star(n: int) -> int:
    return n * (n + 1) // 2


@dataclass(frozen=True)
class DirectionFrame:
    """n* unit directions whose rank-one projectors span Sym(n).

    ``functionals[k]`` is the symmetric matrix W_k with tr(W_k P) = c_k(P),
    the coefficient of nu_k nu_k^T in the expansion of P.
    """
    directions: np.ndarray
    functionals: np.ndarray
    r0: float

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    @property
    def size(self) -> int:
        return self.directions.shape[0]

    @property
    def r1(self) -> float:
        return self.r0 / 25.0

    @property
    def r2(self) -> float:
        return self.r0 / 5.0

    def coefficients(self, P: np.ndarray) -> np.ndarray:
        """Linear coefficients c_k(P) (trailing axis k); P may carry leading axes."""
        return np.einsum("kij,...ij->...k", self.functionals, P)

    def reconstruct(self, c: np.ndarray) -> np.ndarray:
        return np.einsum("...k,ki,kj->...ij", c, self.directions, self.directions)


def frame_from_directions(directions) -> DirectionFrame:
    d = np.asarray(directions, dtype=float)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    n = d.shape[1]
    if d.shape[0] != n_star(n):
        raise DecompositionError(f"need {n_star(n)} directions in dimension {n}")
    ia, ib = np.triu_indices(n)
    # column k holds the upper-triangle entries of nu_k nu_k^T
    N = (d[:, ia] * d[:, ib]).T
    if np.linalg.matrix_rank(N) < n_star(n):
        raise DecompositionError("projectors nu_k nu_k^T are linearly dependent")
    Ninv = np.linalg.inv(N)
    funcs = np.zeros((n_star(n), n, n))
    funcs[:, ia, ib] = np.where(ia == ib, 1.0, 0.5) * Ninv
    funcs[:, ib, ia] = funcs[:, ia, ib]
    return DirectionFrame(d, funcs, _calibrate_r0(funcs))


def _calibrate_r0(funcs: np.ndarray) -> float:
    """Half the largest r with c_k(P) >= 0 on {|P - Id| <= r}.

    On that ball min c_k = c_k(Id) - r ||W_k||_nuclear (the nuclear norm is
    dual to the operator norm), so the boundary minimum is available in closed
    form.
    """
    cid = np.einsum("kii->k", funcs)
    nuc = np.abs(np.linalg.eigvalsh(funcs)).sum(axis=1)
    if np.any(cid <= 0):
        return 0.0
    return 0.5 * float(np.min(cid / nuc))


def nash_frame(n: int) -> DirectionFrame:
    """{e_i} together with {(e_i + e_j)/sqrt 2 : i < j}."""
    if n < 2:
        raise DecompositionError("dimension must be at least 2")
    dirs = [np.eye(n)[i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            v = np.zeros(n)
            v[i] = v[j] = 1.0
            dirs.append(v / np.sqrt(2.0))
    return frame_from_directions(dirs)


def balanced_frame(n: int) -> DirectionFrame:
    """A frame with Id strictly inside the cone of its projectors.

    n = 2: three directions 60 degrees apart.  n = 3: the six icosahedral
    diagonals.  n >= 4: the Nash frame pushed through Q^{-1/2} with
    Q = Id + (11^T - Id)/(2n), which is interior to the Nash cone.
    """
    if n < 2:
        raise DecompositionError("dimension must be at least 2")
    if n == 2:
        ang = np.pi * np.arange(3) / 3.0
        return frame_from_directions(np.column_stack([np.cos(ang), np.sin(ang)]))
    if n == 3:
        phi = 0.5 * (1.0 + np.sqrt(5.0))
        dirs = [(0, 1, phi), (0, 1, -phi), (1, phi, 0), (1, -phi, 0), (phi, 0, 1), (-phi, 0, 1)]
        return frame_from_directions(dirs)
    Q = np.eye(n) + (np.ones((n, n)) - np.eye(n)) / (2.0 * n)
    w, V = np.linalg.eigh(Q)
    q_inv_half = V @ np.diag(w ** -0.5) @ V.T
    return frame_from_directions(nash_frame(n).directions @ q_inv_half.T)


def standard_frame(n: int) -> DirectionFrame:
    return nash_frame(n)


def decompose_near_identity(P, frame: DirectionFrame, check: bool = True) -> np.ndarray:
    """Return a_k >= 0 with P = sum a_k^2 nu_k nu_k^T.

    ``P`` may be a single matrix or an array of matrices (leading axes).
    """
    c = frame.coefficients(np.asarray(P, dtype=float))
    if check and np.any(c < 0):
        node = None
        if c.ndim > 1:
            node = tuple(int(i) for i in np.argwhere(c.min(axis=-1) < 0)[0])
        raise OutOfRadiusError(c[node] if node is not None else c, node)
    return np.sqrt(np.maximum(c, 0.0))


@dataclass
class PrimitiveDecomposition:
    frame: DirectionFrame
    coefficients: list

    def reconstruct(self) -> np.ndarray:
        a = np.stack([np.asarray(getattr(c, "values", c)) for c in self.coefficients], axis=-1)
        return self.frame.reconstruct(a ** 2)


def decompose_field(P: SymTensorField, frame: DirectionFrame) -> PrimitiveDecomposition:
    a = decompose_near_identity(P.values, frame)
    return PrimitiveDecomposition(frame, [ScalarField(P.grid, a[..., k]) for k in range(frame.size)])


# ---------------------------------------------------------------- global decomposition

@dataclass
class GlobalDecomposition:
    """S/rho^2 - tau Id = sum_k bbar_k^2 w_k (x) w_k where rho > 0."""
    directions: np.ndarray
    coefficients: list
    tau: float
    base_points: np.ndarray
    grid: Grid

    @property
    def count(self) -> int:
        return len(self.directions)

    def reconstruct(self) -> np.ndarray:
        b = np.stack([c.values for c in self.coefficients], axis=-1)
        return np.einsum("...k,ki,kj->...ij", b ** 2, self.directions, self.directions)


def _sqrtm_spd(B):
    w, V = np.linalg.eigh(B)
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


def _ramp(x):
    """Smooth step: 1 for x <= 0, 0 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    a = np.where(x < 1, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
    b = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    return a / (a + b)


def decompose_global(S: SymTensorField, rho: ScalarField, tau: float,
                     frame: DirectionFrame | None = None,
                     max_base_points: int = 64) -> GlobalDecomposition:
    """Decompose S/rho^2 - tau Id into primitive metrics wherever rho > 0.

    With Qhat = Q / (tr Q / n): if every node has |Qhat - Id| <= r0 the frame
    is used directly (N = n*).  Otherwise base points B_m are chosen greedily
    among the sampled Qhat, each carrying the frame B_m^{1/2} nu_k, and a
    smooth partition of unity in matrix space blends them (N = n* x #B).
    """
    grid = S.grid
    n = grid.n
    frame = frame or balanced_frame(n)
    rho_v = rho.values
    active = rho_v > 2 * np.finfo(float).eps
    r2 = np.where(active, rho_v ** 2, 1.0)
    Q = S.values / r2[..., None, None] - tau * np.eye(n)
    eig = np.linalg.eigvalsh(Q)[..., 0]
    bad = active & (eig <= 0)
    if np.any(bad):
        node = np.argwhere(bad)[0]
        raise MarginViolationError(node, eig[tuple(node)])
    Q = np.where(active[..., None, None], Q, np.eye(n))
    lam = np.trace(Q, axis1=-2, axis2=-1) / n
    Qhat = Q / lam[..., None, None]
    r0 = frame.r0

    def dist(B_inv_half):
        X = B_inv_half @ Qhat @ B_inv_half
        return np.abs(np.linalg.eigvalsh(X - np.eye(n))).max(axis=-1)

    samples = Qhat[active]
    bases, inv_halves, halves = [], [], []
    if samples.size:
        d_id = np.abs(np.linalg.eigvalsh(samples - np.eye(n))).max(axis=-1)
        if d_id.max() <= r0:
            bases.append(np.eye(n))
        else:
            uncovered = np.ones(len(samples), dtype=bool)
            center = samples.mean(axis=0)
            center /= np.trace(center) / n
            candidate = center
            while uncovered.any():
                if len(bases) >= max_base_points:
                    raise DecompositionError("matrix-space covering needs too many base points")
                half, inv_half = _sqrtm_spd(candidate)
                X = inv_half @ samples @ inv_half
                d = np.abs(np.linalg.eigvalsh(X - np.eye(n))).max(axis=-1)
                newly = uncovered & (d <= 0.5 * r0)
                if not newly.any():
                    candidate = samples[np.argmax(uncovered)]
                    continue
                bases.append(candidate)
                uncovered &= ~newly
                if uncovered.any():
                    idx = np.flatnonzero(uncovered)
                    candidate = samples[idx[len(idx) // 2]]
    if not bases:
        bases.append(np.eye(n))
    for B in bases:
        half, inv_half = _sqrtm_spd(B)
        halves.append(half)
        inv_halves.append(inv_half)

    if len(bases) == 1 and np.allclose(bases[0], np.eye(n)):
        weights = [np.ones(grid.shape)]
    else:
        raw = [_ramp(dist(ih) / r0 * 2.0 - 1.0) for ih in inv_halves]
        total = sum(raw)
        total = np.where(total > 0, total, 1.0)
        weights = [w / total for w in raw]

    dirs, coeffs = [], []
    for B_half, B_inv_half, w in zip(halves, inv_halves, weights):
        X = B_inv_half @ Qhat @ B_inv_half
        c = frame.coefficients(X)
        use = active & (w > 0)
        if np.any(use & (c.min(axis=-1) < 0)):
            node = np.argwhere(use & (c.min(axis=-1) < 0))[0]
            raise OutOfRadiusError(c[tuple(node)], tuple(int(i) for i in node))
        mapped = frame.directions @ B_half.T
        lengths = np.linalg.norm(mapped, axis=1)
        for k in range(frame.size):
            dirs.append(mapped[k] / lengths[k])
            b2 = lam * w * np.maximum(c[..., k], 0.0) * lengths[k] ** 2
            coeffs.append(ScalarField(grid, np.where(active, np.sqrt(b2), 0.0)))
    return GlobalDecomposition(np.array(dirs), coeffs, tau, np.array(bases), grid)
