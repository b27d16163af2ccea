"""Grid-sampled fields over a rectangular chart.

Values are stored node-major: a field on a grid of shape ``(N1, ..., Nn)``
carries an array of shape ``(N1, ..., Nn, *components)``.  Scalars have no
component axes, immersions have one (``n + 1`` entries) and symmetric tensors
have two (``n x n``).
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

MIN_RESOLUTION = 9
EXHAUSTIVE_PAIR_LIMIT = 65 * 65


class FieldError(ValueError):
    pass


class ImmersionError(FieldError):
    """Jacobian rank drops below n at some node."""

    def __init__(self, node, sigma_min):
        self.node = tuple(int(i) for i in node)
        self.sigma_min = float(sigma_min)
        super().__init__(f"Jacobian is rank deficient at node {self.node} "
                         f"(smallest singular value {self.sigma_min:.3e})")


class UnsupportedOrderError(FieldError):
    pass


class MollificationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    resolution: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        res = tuple(int(x) for x in self.resolution)
        if not (len(lo) == len(hi) == len(res)) or len(res) == 0:
            raise FieldError("lo, hi and resolution must have one entry per axis")
        if any(r < MIN_RESOLUTION for r in res):
            raise FieldError(f"resolution must be >= {MIN_RESOLUTION} per axis, got {res}")
        if any(h <= l for l, h in zip(lo, hi)):
            raise FieldError("hi must exceed lo on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    @property
    def n(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def spacing(self) -> tuple:
        return tuple((h - l) / (r - 1) for l, h, r in zip(self.lo, self.hi, self.resolution))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(l, h, r) for l, h, r in zip(self.lo, self.hi, self.resolution)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(1, -1) for _ in range(self.n))] = True
        return mask

    def to_dict(self) -> dict:
        return {"n": self.n, "lo": list(self.lo), "hi": list(self.hi),
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(d["lo"]), tuple(d["hi"]), tuple(d["resolution"]))


def _checked(grid: Grid, values, ncomp_axes: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[:grid.n] != grid.shape or values.ndim != grid.n + ncomp_axes:
        raise FieldError(f"values of shape {values.shape} do not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise FieldError("field values must be finite")
    return values


@dataclass
class ScalarField:
    """One real per node; ``grad`` optionally carries the exact gradient."""
    grid: Grid
    values: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.values = _checked(self.grid, self.values, 0)
        if self.grad is not None:
            self.grad = _checked(self.grid, self.grad, 1)

    def gradient(self) -> np.ndarray:
        return self.grad if self.grad is not None else fd_gradient(self.values, self.grid)


@dataclass
class ImmersionField:
    """A map into R^{n+1}.

    ``jac`` optionally carries the Jacobian exactly (shape ``(*shape, n+1, n)``)
    and ``hess`` the second derivatives (shape ``(*shape, n+1, n, n)``).
    Corrugation steps propagate both by the chain rule so that oscillations
    above the grid's resolution still yield exact pointwise metrics.
    """
    grid: Grid
    values: np.ndarray
    jac: np.ndarray | None = None
    hess: np.ndarray | None = None

    def __post_init__(self):
        self.values = _checked(self.grid, self.values, 1)
        if self.values.shape[-1] != self.grid.n + 1:
            raise FieldError("an immersion field needs n + 1 components per node")
        if self.jac is not None:
            self.jac = _checked(self.grid, self.jac, 2)
        if self.hess is not None:
            self.hess = _checked(self.grid, self.hess, 3)

    @property
    def codim_dimension(self) -> int:
        return self.values.shape[-1]

    def jacobian(self) -> np.ndarray:
        if self.jac is not None:
            return self.jac
        return fd_gradient(self.values, self.grid)

    def hessian(self) -> np.ndarray:
        if self.hess is not None:
            return self.hess
        d2 = fd_gradient(self.jacobian(), self.grid)
        return 0.5 * (d2 + np.swapaxes(d2, -1, -2))


@dataclass
class SymTensorField:
    """Symmetric n x n matrix per node; ``grad`` optionally carries d_k T_ij as (i, j, k)."""
    grid: Grid
    values: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        v = _checked(self.grid, self.values, 2)
        if v.shape[-1] != v.shape[-2]:
            raise FieldError("tensor components must be square")
        self.values = 0.5 * (v + np.swapaxes(v, -1, -2))
        if self.grad is not None:
            d = _checked(self.grid, self.grad, 3)
            self.grad = 0.5 * (d + np.swapaxes(d, -2, -3))

    def gradient(self) -> np.ndarray:
        return self.grad if self.grad is not None else fd_gradient(self.values, self.grid)

    def upper(self) -> np.ndarray:
        i, j = np.triu_indices(self.values.shape[-1])
        return self.values[..., i, j]

    @classmethod
    def from_upper(cls, grid: Grid, upper: np.ndarray) -> "SymTensorField":
        m = upper.shape[-1]
        n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
        full = np.zeros(upper.shape[:-1] + (n, n))
        i, j = np.triu_indices(n)
        full[..., i, j] = upper
        full[..., j, i] = upper
        return cls(grid, full)


# ---------------------------------------------------------------- derivatives

def fd_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered differences inside, first-order one-sided at the boundary.

    Returns an array with a trailing derivative axis of length n.
    """
    values = np.asarray(values, dtype=float)
    parts = np.gradient(values, *grid.spacing, axis=tuple(range(grid.n)), edge_order=1)
    if grid.n == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def fd_hessian(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Second derivatives, trailing axes ``(n, n)`` symmetrized."""
    d1 = fd_gradient(values, grid)
    d2 = fd_gradient(d1, grid)
    return 0.5 * (d2 + np.swapaxes(d2, -1, -2))


def gradient(f) -> np.ndarray:
    if isinstance(f, ImmersionField):
        return f.jacobian()
    return f.gradient()


# ---------------------------------------------------------------- mollification

def bump_kernel(grid: Grid, ell: float) -> np.ndarray:
    """Discrete radial C^inf bump of radius ell with unit mass."""
    half = [int(np.floor(ell / h)) for h in grid.spacing]
    offs = np.meshgrid(*[np.arange(-m, m + 1) * h for m, h in zip(half, grid.spacing)],
                       indexing="ij")
    r2 = sum(o ** 2 for o in offs) / ell ** 2
    ker = np.zeros_like(r2)
    inside = r2 < 1.0
    ker[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return ker / ker.sum()


def mollify_array(values: np.ndarray, grid: Grid, ell: float) -> tuple[np.ndarray, bool]:
    """Convolve with the bump kernel at scale ell after constant edge extension.

    Returns ``(result, clamped)``; ``clamped`` is True when ell is below the
    grid spacing and the input was returned unchanged.
    """
    if ell <= 0:
        raise FieldError("mollification length must be positive")
    values = np.asarray(values, dtype=float)
    if ell < min(grid.spacing):
        return values.copy(), True
    ker = bump_kernel(grid, ell)
    half = [(k - 1) // 2 for k in ker.shape]
    pad = [(m, m) for m in half]
    comps = values.reshape(grid.shape + (-1,))
    out = np.empty_like(comps)
    # one component at a time keeps the FFT workspace small on large grids
    for c in range(comps.shape[-1]):
        padded = np.pad(comps[..., c], pad, mode="edge")
        out[..., c] = fftconvolve(padded, ker, mode="valid")
    return out.reshape(values.shape), False


def mollify(f, ell: float):
    out, clamped = mollify_array(f.values, f.grid, ell)
    if clamped:
        warnings.warn(f"mollification length {ell:.3e} is below the grid spacing; "
                      "returning the field unchanged", MollificationWarning, stacklevel=2)
    if isinstance(f, ImmersionField):
        jac = hess = None
        if f.jac is not None:
            jac, _ = mollify_array(f.jac, f.grid, ell)
        if f.hess is not None:
            hess, _ = mollify_array(f.hess, f.grid, ell)
        return ImmersionField(f.grid, out, jac, hess)
    grad = None
    if getattr(f, "grad", None) is not None:
        grad, _ = mollify_array(f.grad, f.grid, ell)
    return type(f)(f.grid, out, grad)


# ---------------------------------------------------------------- norms

def pointwise_norm(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Euclidean norm over all component axes at each node."""
    extra = values.ndim - grid.n
    if extra == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values ** 2, axis=tuple(range(grid.n, values.ndim))))


def sup_norm(values: np.ndarray, grid: Grid, mask: np.ndarray | None = None) -> float:
    p = pointwise_norm(values, grid)
    if mask is not None:
        p = p[mask]
    return float(p.max()) if p.size else 0.0


def _derivatives_of_order(values: np.ndarray, grid: Grid, m: int) -> list[np.ndarray]:
    if m == 0:
        return [values]
    d1 = fd_gradient(values, grid)
    if m == 1:
        return [d1[..., i] for i in range(grid.n)]
    d2 = fd_gradient(d1, grid)
    return [0.5 * (d2[..., i, j] + d2[..., j, i])
            for i in range(grid.n) for j in range(i, grid.n)]


def _values_of(f):
    return (f.values, f.grid)


def c_norm(f, m: int, mask: np.ndarray | None = None) -> float:
    """||f||_m: sum over orders j <= m of the largest sup of a j-th partial."""
    if m > 2:
        raise UnsupportedOrderError(f"derivative order {m} exceeds the supported maximum 2")
    values, grid = _values_of(f)
    total = 0.0
    for j in range(m + 1):
        total += max(sup_norm(d, grid, mask) for d in _derivatives_of_order(values, grid, j))
    return total


def _pair_sample(grid: Grid, mask: np.ndarray | None):
    nodes = int(np.prod(grid.shape))
    if nodes <= EXHAUSTIVE_PAIR_LIMIT:
        stride = 1
    else:
        stride = int(np.ceil((nodes / EXHAUSTIVE_PAIR_LIMIT) ** (1.0 / grid.n)))
    sl = tuple(slice(None, None, stride) for _ in range(grid.n))
    sub = np.zeros(grid.shape, dtype=bool)
    sub[sl] = True
    if mask is not None:
        sub &= mask
    return sub, stride


def holder_seminorm(f, m: int, alpha: float, mask: np.ndarray | None = None,
                    chunk: int = 512) -> float:
    """Discrete [f]_{m+alpha} over node pairs.

    Small grids use every pair.  Larger grids use a strided node subset for
    all pairs plus every nearest-neighbour pair on the full grid.
    """
    if m > 2:
        raise UnsupportedOrderError(f"derivative order {m} exceeds the supported maximum 2")
    if not 0.0 <= alpha <= 1.0:
        raise FieldError("Holder exponent must lie in [0, 1]")
    if alpha == 0.0:
        return 0.0
    values, grid = _values_of(f)
    coords = grid.coords()
    sub, stride = _pair_sample(grid, mask)
    best = 0.0
    for d in _derivatives_of_order(values, grid, m):
        flat = d.reshape(grid.shape + (-1,))
        pts = coords[sub]
        vals = flat[sub]
        for start in range(0, len(pts), chunk):
            p = pts[start:start + chunk]
            v = vals[start:start + chunk]
            dist = np.sqrt(((p[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
            diff = np.sqrt(((v[:, None, :] - vals[None, :, :]) ** 2).sum(-1))
            ok = dist > 0
            if np.any(ok):
                best = max(best, float((diff[ok] / dist[ok] ** alpha).max()))
        if stride > 1:
            best = max(best, _neighbour_quotient(flat, grid, alpha, mask))
    return best


def _neighbour_quotient(flat, grid, alpha, mask):
    best = 0.0
    h = np.array(grid.spacing)
    for off in itertools.product((0, 1), repeat=grid.n):
        if not any(off):
            continue
        a = tuple(slice(0, s - o) for s, o in zip(grid.shape, off))
        b = tuple(slice(o, None) for o in off)
        diff = np.sqrt(((flat[b] - flat[a]) ** 2).sum(-1))
        if mask is not None:
            diff = diff[mask[a] & mask[b]]
        if diff.size:
            dist = float(np.sqrt(np.sum((np.array(off) * h) ** 2)))
            best = max(best, float(diff.max()) / dist ** alpha)
    return best


def holder_norm(f, m: int, alpha: float, mask: np.ndarray | None = None) -> float:
    """||f||_{m+alpha} = ||f||_m + [f]_{m+alpha}."""
    return c_norm(f, m, mask) + holder_seminorm(f, m, alpha, mask)


# ---------------------------------------------------------------- geometry

def pullback_metric(u: ImmersionField, check_rank: bool = True,
                    rank_tol: float = 1e-10) -> SymTensorField:
    """Nodewise J^T J from the (carried or finite-difference) Jacobian."""
    jac = u.jacobian()
    if check_rank:
        sv = np.linalg.svd(jac, compute_uv=False)
        ratio = sv[..., -1] / np.maximum(sv[..., 0], np.finfo(float).tiny)
        bad = (ratio <= rank_tol) & u.grid.interior_mask()
        if np.any(bad):
            node = np.argwhere(bad)[0]
            raise ImmersionError(node, sv[tuple(node)][-1])
    return SymTensorField(u.grid, np.einsum("...ai,...aj->...ij", jac, jac))


def metric_jet(u: ImmersionField) -> tuple[np.ndarray, np.ndarray]:
    """J^T J and its gradient (trailing derivative axis) from the carried jets."""
    J = u.jacobian()
    H = u.hessian()
    dg = np.einsum("...aik,...aj->...ijk", H, J)
    return np.swapaxes(J, -1, -2) @ J, dg + np.swapaxes(dg, -2, -3)


def eigvalsh(values: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of symmetric matrices; closed form for 2 x 2."""
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != (2, 2):
        return np.linalg.eigvalsh(values)
    a, b, d = values[..., 0, 0], 0.5 * (values[..., 0, 1] + values[..., 1, 0]), values[..., 1, 1]
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    return np.stack([mid - rad, mid + rad], axis=-1)


def sym_eigs(t: SymTensorField) -> np.ndarray:
    return eigvalsh(t.values)


def operator_norm(values: np.ndarray) -> np.ndarray:
    """|P| = largest absolute eigenvalue, nodewise, for symmetric P."""
    return np.abs(eigvalsh(values)).max(axis=-1)


# ---------------------------------------------------------------- serialization

_KINDS = {"scalar": ScalarField, "immersion": ImmersionField, "symtensor": SymTensorField}


def _kind_of(f) -> str:
    for k, cls in _KINDS.items():
        if isinstance(f, cls):
            return k
    raise FieldError(f"cannot serialize {type(f).__name__}")


def _flat_columns(f) -> np.ndarray:
    n_nodes = int(np.prod(f.grid.shape))
    if isinstance(f, SymTensorField):
        return f.upper().reshape(n_nodes, -1)
    return f.values.reshape(n_nodes, -1)


def save_field(path, f) -> None:
    """Write a field as CSV (``.csv``) or raw little-endian float64 (otherwise).

    Both layouts start with a header carrying kind, n, resolution and bounds.
    Rows are nodes in C order (last grid axis fastest); columns are the
    components (upper triangle, row by row, for symmetric tensors).
    """
    path = Path(path)
    cols = _flat_columns(f)
    header = {"kind": _kind_of(f), **f.grid.to_dict(), "components": cols.shape[1]}
    if path.suffix == ".csv":
        with open(path, "w") as fh:
            for key, val in header.items():
                fh.write(f"# {key}: {json.dumps(val)}\n")
            np.savetxt(fh, cols, delimiter=",", fmt="%.17g")
    else:
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode())
            fh.write(cols.astype("<f8").tobytes())


def load_field(path):
    path = Path(path)
    if path.suffix == ".csv":
        header = {}
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, val = line[1:].partition(":")
                header[key.strip()] = json.loads(val)
        cols = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    else:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            cols = np.frombuffer(fh.read(), dtype="<f8").reshape(-1, header["components"])
    for key in ("kind", "n", "lo", "hi", "resolution", "components"):
        if key not in header:
            raise FieldError(f"{path}: header is missing '{key}'")
    grid = Grid.from_dict(header)
    if cols.shape != (int(np.prod(grid.shape)), header["components"]):
        raise FieldError(f"{path}: expected {header['components']} columns per node")
    kind = header["kind"]
    if kind == "scalar":
        return ScalarField(grid, cols.reshape(grid.shape))
    if kind == "immersion":
        return ImmersionField(grid, cols.reshape(grid.shape + (-1,)))
    if kind == "symtensor":
        return SymTensorField.from_upper(grid, cols.reshape(grid.shape + (-1,)))
    raise FieldError(f"{path}: unknown field kind '{kind}'")
