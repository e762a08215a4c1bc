"""The nonlinear map S(u) = dH/d(u bar) evaluated as exact lattice convolutions.

Products of fields become convolutions of their coefficient arrays; the
conjugate field has coefficients ``conj(u(-k))``.  Convolutions are direct
sums over pairs of nonzero entries (no FFT), so results are reproducible bit
for bit and real inputs stay exactly real.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
import sympy

from .lattice_spaces import Basis, SpectralVector, unit

_PAIR_CHUNK = 1 << 22


def _conv(A: np.ndarray, ha: int, B: np.ndarray, hb: int, hout: int) -> np.ndarray:
    """Direct convolution of centred arrays, cropped to |k|_inf <= hout."""
    b = A.ndim
    dtype = np.result_type(A, B)
    out = np.zeros((2 * hout + 1,) * b, dtype=dtype)
    ia = np.nonzero(A)
    ib = np.nonzero(B)
    if len(ia[0]) == 0 or len(ib[0]) == 0:
        return out
    va, vb = A[ia], B[ib]
    ka = [x - ha for x in ia]
    kb = [x - hb for x in ib]
    side = 2 * hout + 1
    strides = [side ** (b - 1 - i) for i in range(b)]
    nb = len(vb)
    step = max(1, _PAIR_CHUNK // nb)
    flat = out.reshape(-1)
    for start in range(0, len(va), step):
        sl = slice(start, start + step)
        keep = None
        code = 0
        for i in range(b):
            ki = ka[i][sl, None] + kb[i][None, :]
            ok = np.abs(ki) <= hout
            keep = ok if keep is None else keep & ok
            code = code + (ki + hout) * strides[i]
        prod = va[sl, None] * vb[None, :]
        idx = code[keep]
        vals = prod[keep]
        if dtype.kind == "c":
            flat += np.bincount(idx, weights=vals.real, minlength=flat.size)
            flat += 1j * np.bincount(idx, weights=vals.imag, minlength=flat.size)
        else:
            flat += np.bincount(idx, weights=vals, minlength=flat.size)
    return out


def product(factors, radius_out: int) -> SpectralVector:
    """Coefficients of the pointwise product of the given fields, truncated."""
    factors = list(factors)
    cur, h = factors[0].coeffs, factors[0].radius
    remaining = sum(f.radius for f in factors[1:])
    if len(factors) == 1:
        return SpectralVector(cur, h).resized(radius_out)
    for f in factors[1:]:
        remaining -= f.radius
        hout = min(h + f.radius, radius_out + remaining)
        cur = _conv(cur, h, f.coeffs, f.radius, hout)
        h = hout
    return SpectralVector(cur, h).resized(radius_out)


# --- Hamiltonian ---------------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianSpec:
    """H = |u|^4 + sum alpha_{l,l'} u^l ubar^{l'} with finitely many terms.

    ``monomials`` always contains the leading term ``(2, 2, 1.0)``.
    """

    monomials: tuple = ((2, 2, 1.0),)

    def __post_init__(self):
        terms = {}
        for l, lp, alpha in self.monomials:
            key = (int(l), int(lp))
            terms[key] = terms.get(key, 0.0) + float(alpha)
        if terms.get((2, 2)) != 1.0:
            raise ValueError("the |u|^4 term must be present with coefficient exactly 1")
        for (l, lp), alpha in terms.items():
            if (l, lp) == (2, 2):
                continue
            if l < 0 or lp < 0 or l + lp < 5:
                raise ValueError(f"monomial u^{l} ubar^{lp} must have l, l' >= 0 and l + l' >= 5")
            if terms.get((lp, l)) != alpha:
                raise ValueError(f"alpha_{{{l},{lp}}} must equal alpha_{{{lp},{l}}}")
        mono = tuple(sorted((l, lp, a) for (l, lp), a in terms.items() if a != 0.0 or (l, lp) == (2, 2)))
        object.__setattr__(self, "monomials", mono)

    @classmethod
    def quartic(cls) -> "HamiltonianSpec":
        return cls()

    @classmethod
    def from_extra(cls, extra) -> "HamiltonianSpec":
        """Leading |u|^4 plus the given ``[l, l', alpha]`` triples."""
        return cls(((2, 2, 1.0),) + tuple(tuple(t) for t in extra))

    @property
    def gauge_invariant(self) -> bool:
        return all(l == lp for l, lp, _ in self.monomials)

    @property
    def extra(self):
        return [[l, lp, a] for l, lp, a in self.monomials if (l, lp) != (2, 2)]

    def s_terms(self):
        """Terms (coefficient, p, q) of dH/d(ubar) = sum c u^p ubar^q."""
        return [(lp * a, l, lp - 1) for l, lp, a in self.monomials if lp >= 1]


def _monomial(u: SpectralVector, ubar: SpectralVector, p: int, q: int, radius: int):
    return product([u] * p + [ubar] * q, radius)


def eval_S(u: SpectralVector, H: HamiltonianSpec, K_t: int | None = None) -> SpectralVector:
    """dH/d(ubar)(u, ubar) = 2 u^2 ubar + sum l' alpha u^l ubar^(l'-1), truncated to K_t."""
    K_t = u.radius if K_t is None else K_t
    ubar = u.reflect_conj()
    total = None
    for c, p, q in H.s_terms():
        term = _monomial(u, ubar, p, q, K_t) * c
        total = term if total is None else total + term
    return total


def eval_dS(u: SpectralVector, w: SpectralVector, H: HamiltonianSpec,
            K_t: int | None = None) -> SpectralVector:
    """Real-linear directional derivative D_u S(u) w + D_ubar S(u) wbar."""
    K_t = u.radius if K_t is None else K_t
    ubar, wbar = u.reflect_conj(), w.reflect_conj()
    total = SpectralVector.zeros(u.b, K_t, dtype=np.result_type(u.coeffs, w.coeffs))
    for c, p, q in H.s_terms():
        if p:
            total = total + product([u] * (p - 1) + [ubar] * q + [w], K_t) * (c * p)
        if q:
            total = total + product([u] * p + [ubar] * (q - 1) + [wbar], K_t) * (c * q)
    return total


def scaled_S(w: SpectralVector, eps: float, H: HamiltonianSpec, K_t: int | None = None) -> SpectralVector:
    """eps^-1 S(eps w), the rescaled nonlinearity (order eps^2)."""
    return eval_S(w * eps, H, K_t) * (1.0 / eps)


# --- symbolic cubic coefficients -------------------------------------------------


@functools.lru_cache(maxsize=16)
def amplitude_symbols(b: int):
    return sympy.symbols(f"a1:{b + 1}", real=True)


def resonant_symbols(k2):
    return {k: sympy.Symbol("x_" + "_".join(str(x).replace("-", "m") for x in k), real=True) for k in k2}


@dataclass(frozen=True)
class CubicCoefficients:
    """(|v|^2 v)^(k0) split into its a_res-free part and its a_res-linear part."""

    k0: tuple
    constant: sympy.Poly
    linear: dict   # k -> Poly in a_1..a_b


def cubic_coeff_extract(basis: Basis, R, k0) -> CubicCoefficients:
    """Symbolic convolution over K of v = sum a_j e_j + sum_{k in K_2} x_k k."""
    k0 = tuple(k0)
    if k0 not in R.k2:
        raise ValueError(f"{k0} is not a nontrivial resonant mode")
    b = basis.b
    a = amplitude_symbols(b)
    xs = resonant_symbols(R.k2)
    coef = {unit(b, j): a[j] for j in range(b)}
    coef.update(xs)
    modes = set(coef)
    expr = sympy.Integer(0)
    for k, kp in itertools.product(coef, repeat=2):
        kpp = tuple(x + y - z for x, y, z in zip(k, kp, k0))
        if kpp in modes:
            expr += coef[k] * coef[kp] * coef[kpp]
    xvars = [xs[k] for k in R.k2]
    full = sympy.Poly(sympy.expand(expr), *xvars)
    zero = (0,) * len(xvars)
    const = full.as_dict().get(zero, sympy.Integer(0))
    linear = {}
    for i, k in enumerate(R.k2):
        mono = tuple(1 if j == i else 0 for j in range(len(xvars)))
        linear[k] = sympy.Poly(full.as_dict().get(mono, sympy.Integer(0)), *a, domain="ZZ")
    return CubicCoefficients(k0, sympy.Poly(const, *a, domain="ZZ"), linear)
