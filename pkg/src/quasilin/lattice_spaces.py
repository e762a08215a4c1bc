"""Integer-lattice geometry of the embedded lattice W and weighted sequence norms.

A mode index ``k`` in Z^b is embedded into space frequencies through
``n_k = sum_j k_j n_j``.  Functions supported on W are stored as dense arrays
over the box ``|k|_inf <= K_t``; entries with Euclidean ``|k| > K_t`` are kept
at zero (the validity mask).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidBasis


def int_det(rows: Sequence[Sequence[int]]) -> int:
    """Exact determinant of a square integer matrix (Bareiss elimination)."""
    m = [list(map(int, r)) for r in rows]
    n = len(m)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for i in range(n - 1):
        if m[i][i] == 0:
            for r in range(i + 1, n):
                if m[r][i] != 0:
                    m[i], m[r] = m[r], m[i]
                    sign = -sign
                    break
            else:
                return 0
        for r in range(i + 1, n):
            for c in range(i + 1, n):
                m[r][c] = (m[r][c] * m[i][i] - m[r][i] * m[i][c]) // prev
        prev = m[i][i]
    return sign * m[n - 1][n - 1]


@dataclass(frozen=True)
class Basis:
    """Tangential wave vectors ``n_1..n_b`` in Z^d together with ``rho``."""

    n: tuple
    rho: float = math.sqrt(2.0) - 1.0

    def __post_init__(self):
        vecs = tuple(tuple(int(x) for x in v) for v in self.n)
        object.__setattr__(self, "n", vecs)
        object.__setattr__(self, "rho", float(self.rho))
        if not vecs:
            raise InvalidBasis("basis needs at least one vector")
        d = len(vecs[0])
        if d == 0 or any(len(v) != d for v in vecs):
            raise InvalidBasis("all basis vectors must have the same positive dimension d")
        if len(vecs) > d:
            raise InvalidBasis(f"b={len(vecs)} exceeds d={d}")
        if any(all(x == 0 for x in v) for v in vecs):
            raise InvalidBasis("basis vectors must be nonzero")
        if int_det(self.gram_rows()) == 0:
            raise InvalidBasis("Gram matrix is singular: basis vectors are linearly dependent")

    @property
    def b(self) -> int:
        return len(self.n)

    @property
    def d(self) -> int:
        return len(self.n[0])

    def gram_rows(self):
        return [[sum(x * y for x, y in zip(u, v)) for v in self.n] for u in self.n]

    @functools.cached_property
    def gram(self) -> np.ndarray:
        return np.array(self.gram_rows(), dtype=np.int64)

    @functools.cached_property
    def norms2(self) -> np.ndarray:
        """|n_j|^2 as an integer array."""
        return np.diag(self.gram).copy()

    @property
    def omega0(self) -> np.ndarray:
        return self.norms2.astype(float) + self.rho

    def with_rho(self, rho: float) -> "Basis":
        return Basis(self.n, rho)

    def to_dict(self):
        return {"n": [list(v) for v in self.n], "rho": self.rho}


def embed_mode(basis: Basis, k: Sequence[int]) -> tuple:
    """Return ``n_k = sum_j k_j n_j`` computed in integer arithmetic."""
    k = tuple(int(x) for x in k)
    if len(k) != basis.b:
        raise ValueError(f"mode index has length {len(k)}, basis has b={basis.b}")
    return tuple(sum(kj * v[i] for kj, v in zip(k, basis.n)) for i in range(basis.d))


def gram_min_eigen(basis: Basis) -> float:
    """Smallest eigenvalue c_1 of the Gram matrix; |n_k|^2 >= c_1 |k|^2."""
    c1 = float(np.linalg.eigvalsh(basis.gram.astype(float))[0])
    if c1 <= 0.0:
        raise InvalidBasis("Gram matrix is singular: basis vectors are linearly dependent")
    return c1


def unit(b: int, j: int) -> tuple:
    return tuple(1 if i == j else 0 for i in range(b))


# --- dense mode grids -------------------------------------------------------


@dataclass(frozen=True)
class ModeGrid:
    """Index data for the box ``|k|_inf <= radius`` in Z^b."""

    b: int
    radius: int
    k: np.ndarray = field(repr=False)        # shape (*box, b), integer
    kabs2: np.ndarray = field(repr=False)    # shape box, integer |k|^2
    mask: np.ndarray = field(repr=False)     # |k| <= radius

    @property
    def shape(self):
        return self.mask.shape

    def index(self, k: Sequence[int]):
        return tuple(int(x) + self.radius for x in k)

    def contains(self, k: Sequence[int]) -> bool:
        return sum(int(x) * int(x) for x in k) <= self.radius ** 2


@functools.lru_cache(maxsize=64)
def mode_grid(b: int, radius: int) -> ModeGrid:
    axes = [np.arange(-radius, radius + 1, dtype=np.int64)] * b
    k = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    kabs2 = np.sum(k * k, axis=-1)
    mask = kabs2 <= radius * radius
    for arr in (k, kabs2, mask):
        arr.setflags(write=False)
    return ModeGrid(b, radius, k, kabs2, mask)


@functools.lru_cache(maxsize=64)
def embedded_norm2(basis: Basis, radius: int) -> np.ndarray:
    """|n_k|^2 = k^T G k on the grid, exact integers."""
    g = mode_grid(basis.b, radius)
    out = np.einsum("...i,ij,...j->...", g.k, basis.gram, g.k)
    out.setflags(write=False)
    return out


# --- spectral vectors ---------------------------------------------------------


class SpectralVector:
    """Finitely supported map k -> complex amplitude on the lattice W.

    Coefficients live in a dense centred array of shape ``(2K+1,)*b``.  A real
    dtype is kept whenever every coefficient is real, which makes lattice
    convolutions exact in real arithmetic.
    """

    __slots__ = ("coeffs", "radius")

    def __init__(self, coeffs: np.ndarray, radius: int):
        coeffs = np.asarray(coeffs)
        if coeffs.dtype.kind not in "fc":
            coeffs = coeffs.astype(float)
        b = coeffs.ndim
        if coeffs.shape != (2 * radius + 1,) * b:
            raise ValueError(f"coefficient array of shape {coeffs.shape} does not match radius {radius}")
        grid = mode_grid(b, radius)
        if not np.all(grid.mask):
            coeffs = np.where(grid.mask, coeffs, 0)
        self.coeffs = coeffs
        self.radius = int(radius)

    @classmethod
    def zeros(cls, b: int, radius: int, dtype=float) -> "SpectralVector":
        return cls(np.zeros((2 * radius + 1,) * b, dtype=dtype), radius)

    @classmethod
    def from_modes(cls, b: int, radius: int, modes: Mapping) -> "SpectralVector":
        dtype = complex if any(complex(c).imag != 0 for c in modes.values()) else float
        arr = np.zeros((2 * radius + 1,) * b, dtype=dtype)
        grid = mode_grid(b, radius)
        for k, c in modes.items():
            if len(k) != b:
                raise ValueError(f"mode {k} does not have length b={b}")
            if not grid.contains(k):
                raise ValueError(f"mode {k} lies outside the truncation |k| <= {radius}")
            arr[grid.index(k)] = c if dtype is complex else complex(c).real
        return cls(arr, radius)

    @property
    def b(self) -> int:
        return self.coeffs.ndim

    @property
    def is_real(self) -> bool:
        return self.coeffs.dtype.kind == "f" or not np.any(self.coeffs.imag)

    def real_part(self) -> "SpectralVector":
        return SpectralVector(self.coeffs.real.copy(), self.radius)

    def get(self, k) -> complex:
        grid = mode_grid(self.b, self.radius)
        if not grid.contains(k):
            return 0.0
        return self.coeffs[grid.index(k)]

    def items(self):
        """Nonzero entries as ``(k, value)`` in lexicographic k order."""
        grid = mode_grid(self.b, self.radius)
        idx = np.argwhere(self.coeffs != 0)
        for i in idx:
            yield tuple(int(x) for x in grid.k[tuple(i)]), self.coeffs[tuple(i)]

    def support(self):
        return [k for k, _ in self.items()]

    def resized(self, radius: int) -> "SpectralVector":
        """Zero-pad or truncate to a new radius."""
        if radius == self.radius:
            return SpectralVector(self.coeffs.copy(), radius)
        diff = radius - self.radius
        if diff > 0:
            arr = np.pad(self.coeffs, diff)
        else:
            sl = (slice(-diff, diff),) * self.b
            arr = self.coeffs[sl].copy()
        return SpectralVector(arr, radius)

    def reflect_conj(self) -> "SpectralVector":
        """Coefficients of the complex conjugate field: k -> conj(u(-k))."""
        arr = np.flip(self.coeffs)
        if arr.dtype.kind == "c":
            arr = np.conj(arr)
        return SpectralVector(arr.copy(), self.radius)

    def _binary(self, other, op):
        if isinstance(other, SpectralVector):
            r = max(self.radius, other.radius)
            return SpectralVector(op(self.resized(r).coeffs, other.resized(r).coeffs), r)
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return SpectralVector(self.coeffs * scalar, self.radius)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVector(-self.coeffs, self.radius)

    def __repr__(self):
        return f"SpectralVector(b={self.b}, radius={self.radius}, nnz={int(np.count_nonzero(self.coeffs))})"

    def allclose(self, other: "SpectralVector", atol=0.0, rtol=0.0) -> bool:
        r = max(self.radius, other.radius)
        return bool(np.allclose(self.resized(r).coeffs, other.resized(r).coeffs, atol=atol, rtol=rtol))


# --- weighted norm ------------------------------------------------------------


@dataclass(frozen=True)
class NormParams:
    """Parameters of the analytic weighted norm ||.||_{sigma,s}."""

    sigma: float
    s: float
    algebra_const: float

    @classmethod
    def default(cls, b: int, sigma: float = 0.5, s: float | None = None,
                algebra_const: float | None = None) -> "NormParams":
        if s is None:
            s = b / 2 + 1
        if algebra_const is None:
            algebra_const = 4.0 ** s * math.exp(b * sigma)
        p = cls(float(sigma), float(s), float(algebra_const))
        p.check(b)
        return p

    def check(self, b: int):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.s > b / 2:
            raise ValueError(f"s must exceed b/2 = {b / 2}, got {self.s}")
        if not self.algebra_const > 0:
            raise ValueError("algebra_const must be positive")


@functools.lru_cache(maxsize=64)
def _weight2(b: int, radius: int, sigma: float, s: float) -> np.ndarray:
    g = mode_grid(b, radius)
    kabs = np.sqrt(g.kabs2.astype(float))
    w2 = np.maximum(kabs, 1.0) ** (2 * s) * np.exp(2 * sigma * kabs)
    w2.setflags(write=False)
    return w2


def weighted_norm(u: SpectralVector, p: NormParams) -> float:
    """(C sum_k |u(k)|^2 max(|k|,1)^{2s} e^{2 sigma |k|})^{1/2}."""
    w2 = _weight2(u.b, u.radius, p.sigma, p.s)
    a2 = u.coeffs.real ** 2 if u.coeffs.dtype.kind == "f" else np.abs(u.coeffs) ** 2
    return float(math.sqrt(p.algebra_const * float(np.sum(a2 * w2))))


# --- projectors ----------------------------------------------------------------


def resonant_mask(modes: Iterable[Sequence[int]], b: int, radius: int) -> np.ndarray:
    grid = mode_grid(b, radius)
    mask = np.zeros(grid.shape, dtype=bool)
    for k in modes:
        if grid.contains(k):
            mask[grid.index(k)] = True
    return mask


def project(u: SpectralVector, R, part: str) -> SpectralVector:
    """P keeps the non-resonant entries, Q keeps the resonant ones."""
    modes = R.all if hasattr(R, "all") else R
    mask = resonant_mask(modes, u.b, u.radius)
    if part == "P":
        return SpectralVector(np.where(mask, 0, u.coeffs), u.radius)
    if part == "Q":
        return SpectralVector(np.where(mask, u.coeffs, 0), u.radius)
    raise ValueError(f"part must be 'P' or 'Q', got {part!r}")
