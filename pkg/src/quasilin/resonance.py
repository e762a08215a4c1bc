"""Resonant-mode set K(n_1..n_b) and the geometric predicates that control it.

For irrational rho a mode k is resonant iff

    sum_j k_j = 1   and   sum_j k_j |n_j|^2 = |n_k|^2,

both checked here in exact integer arithmetic.  Every resonant k obeys
``|k| <= sqrt(b) max_j |n_j|^2 / c_1`` (coercivity of the Gram form), which
bounds the enumeration.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import VerificationFailure
from .lattice_spaces import Basis, gram_min_eigen, int_det, unit


@dataclass(frozen=True)
class ResonantSet:
    all: tuple
    k1: tuple
    k2: tuple
    has_triple_form: bool
    bound: float
    basis: Basis = field(repr=False, compare=False, default=None)

    def __contains__(self, k):
        return tuple(k) in self.all

    def to_dict(self):
        return {
            "K": [list(k) for k in self.all],
            "K1": [list(k) for k in self.k1],
            "K2": [list(k) for k in self.k2],
            "has_triple_form": self.has_triple_form,
            "enumeration_bound": self.bound,
        }


@dataclass(frozen=True)
class GeometricFlags:
    pairwise_nonparallel: bool
    nonperp_differences: bool
    acute_differences: bool
    equal_norm_orthogonal: bool

    def to_dict(self):
        return dict(self.__dict__)


def is_triple_form(k) -> bool:
    """k = +-e_i +- e_j +- e_l for distinct i, j, l."""
    nz = [x for x in k if x != 0]
    return len(nz) == 3 and all(abs(x) == 1 for x in nz)


def resonance_defect(gram, k) -> tuple:
    """(sum_j k_j - 1, sum_j k_j |n_j|^2 - |n_k|^2), exact integers."""
    b = len(k)
    nk2 = sum(k[i] * gram[i][j] * k[j] for i in range(b) for j in range(b))
    lin = sum(k[j] * gram[j][j] for j in range(b))
    return sum(k) - 1, lin - nk2


def enumeration_bound(gram_rows, c1: float) -> float:
    b = len(gram_rows)
    return math.sqrt(b) * max(gram_rows[j][j] for j in range(b)) / c1


def _solve_resonances(G, kmax: int) -> list:
    """All integer k with sum k = 1 and k^T G k = sum_j k_j G_jj, |k_j| <= kmax.

    The last two coordinates are eliminated: with the outer coordinates fixed,
    k = p + t e with e = e_{b-2} - e_{b-1}, and the resonance condition is an
    integer quadratic in t solved exactly with isqrt.
    """
    b = len(G)
    diag = [G[j][j] for j in range(b)]
    if b == 1:
        return [(1,)]
    e = [0] * b
    e[b - 2], e[b - 1] = 1, -1

    def quad(x, y):
        return sum(x[i] * G[i][j] * y[j] for i in range(b) for j in range(b))

    a_coef = quad(e, e)
    Ge = [sum(G[i][j] * e[j] for j in range(b)) for i in range(b)]
    de = sum(diag[j] * e[j] for j in range(b))
    found = []
    outer_ranges = [range(-kmax, kmax + 1)] * (b - 2)
    for outer in itertools.product(*outer_ranges):
        if sum(x * x for x in outer) > kmax * kmax:
            continue
        p = list(outer) + [0, 1 - sum(outer)]
        b_coef = 2 * sum(p[i] * Ge[i] for i in range(b)) - de
        c_coef = quad(p, p) - sum(diag[j] * p[j] for j in range(b))
        disc = b_coef * b_coef - 4 * a_coef * c_coef
        if disc < 0:
            continue
        r = math.isqrt(disc)
        if r * r != disc:
            continue
        for num in {-b_coef + r, -b_coef - r}:
            if num % (2 * a_coef) == 0:
                t = num // (2 * a_coef)
                found.append(tuple(p[i] + t * e[i] for i in range(b)))
    return found


def _resonant_from_gram(G, c1: float, basis=None) -> ResonantSet:
    b = len(G)
    bound = enumeration_bound(G, c1)
    kmax = int(math.floor(bound * (1 + 1e-12))) + 1
    found = _solve_resonances(G, kmax)
    for k in found:
        if resonance_defect(G, k) != (0, 0):
            raise VerificationFailure(f"enumerated mode {k} fails the resonance conditions")
        if sum(x * x for x in k) > bound * bound * (1 + 1e-9) + 1e-9:
            raise VerificationFailure(f"resonant mode {k} violates the enumeration bound {bound}")
    k1 = tuple(unit(b, j) for j in range(b))
    missing = [k for k in k1 if k not in found]
    if missing:
        raise VerificationFailure(f"unit modes {missing} missing from the resonant set")
    k2 = tuple(sorted(set(found) - set(k1)))
    return ResonantSet(
        all=k1 + k2,
        k1=k1,
        k2=k2,
        has_triple_form=any(is_triple_form(k) for k in k2),
        bound=bound,
        basis=basis,
    )


def enumerate_resonant(basis: Basis) -> ResonantSet:
    """Enumerate K(n_1..n_b) exactly and split it into K_1 and K_2."""
    G = basis.gram_rows()
    return _resonant_from_gram(G, gram_min_eigen(basis), basis)


def _flags_from_gram(G) -> GeometricFlags:
    b = len(G)
    nonpar = all(G[i][j] ** 2 != G[i][i] * G[j][j] for i in range(b) for j in range(i + 1, b))
    prods = [
        G[i][i] - G[i][j] - G[i][l] + G[j][l]
        for i, j, l in itertools.permutations(range(b), 3)
    ]
    eno = len({G[j][j] for j in range(b)}) == 1 and all(
        G[i][j] == 0 for i in range(b) for j in range(b) if i != j
    )
    return GeometricFlags(
        pairwise_nonparallel=nonpar,
        nonperp_differences=all(p != 0 for p in prods),
        acute_differences=all(p > 0 for p in prods),
        equal_norm_orthogonal=eno,
    )


def geometric_flags(basis: Basis) -> GeometricFlags:
    """Exact evaluation of the inner-product predicates on the basis.

    ``(n_i - n_j).(n_i - n_l)`` ranges over ordered triples of distinct
    indices; for b < 3 the triple predicates hold vacuously.
    """
    return _flags_from_gram(basis.gram_rows())


def classify_supports(R: ResonantSet, flags: GeometricFlags | None = None) -> dict:
    """Report |supp k| and triple form for every k in K_2 and check them
    against the support classification (needs ``R.basis`` when ``flags`` is
    not given)."""
    if flags is None:
        flags = geometric_flags(R.basis)
    modes = []
    problems = []
    for k in R.k2:
        supp = sum(1 for x in k if x != 0)
        triple = is_triple_form(k)
        modes.append({"k": list(k), "support": supp, "triple_form": triple})
        if supp < 3:
            problems.append(f"{k}: support {supp} < 3")
        if flags.acute_differences and supp < 4:
            problems.append(f"{k}: support {supp} < 4 although all difference angles are acute")
        if flags.nonperp_differences and triple:
            problems.append(f"{k}: triple form although no differences are perpendicular")
    if flags.equal_norm_orthogonal and R.k2:
        problems.append("equal-norm orthogonal basis with nontrivial resonances")
    if problems:
        raise VerificationFailure("support classification violated: " + "; ".join(problems))
    return {"K2": modes, "flags": flags.to_dict(), "consistent": True}


def _trusted_basis(n, rho) -> Basis:
    obj = object.__new__(Basis)
    object.__setattr__(obj, "n", n)
    object.__setattr__(obj, "rho", float(rho))
    return obj


def search_bases(d: int, b: int, radius: int,
                 want: Callable[[GeometricFlags, ResonantSet], bool],
                 rho: float = math.sqrt(2.0) - 1.0) -> list:
    """Scan b-subsets of nonzero vectors in {|n|_inf <= radius}^d.

    Subsets are taken in lexicographic order of lexicographically sorted
    vectors, so each basis appears once up to permutation.  Resonant sets and
    flags depend on the Gram matrix only and are cached on it.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if b > d:
        return []
    vecs = [v for v in itertools.product(range(-radius, radius + 1), repeat=d) if any(v)]
    V = np.array(vecs, dtype=np.int64)
    dots = V @ V.T
    cache = {}
    out = []
    for combo in itertools.combinations(range(len(vecs)), b):
        G = tuple(tuple(int(dots[i, j]) for j in combo) for i in combo)
        entry = cache.get(G)
        if entry is None:
            if int_det(G) == 0:
                entry = False
            else:
                Gf = np.array(G, dtype=float)
                c1 = float(np.linalg.eigvalsh(Gf)[0])
                entry = (_flags_from_gram(G), _resonant_from_gram(G, c1))
            cache[G] = entry
        if entry is False:
            continue
        flags, R = entry
        basis = _trusted_basis(tuple(vecs[i] for i in combo), rho)
        R = ResonantSet(R.all, R.k1, R.k2, R.has_triple_form, R.bound, basis)
        if want(flags, R):
            out.append(basis)
    return out
