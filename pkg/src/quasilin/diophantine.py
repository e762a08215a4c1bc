"""Finite Diophantine certificates for rho and the gauge shift rho -> rho + rho'."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import HypothesisRefused

DEFAULT_SHIFT_CANDIDATES = (
    math.sqrt(2.0) - 1.0,
    math.sqrt(3.0) - 1.0,
    (math.sqrt(5.0) - 1.0) / 2.0,
)


@dataclass(frozen=True)
class DiophantineCert:
    """min over 1 <= m <= M of m^tau dist(m rho, Z).

    A positive ``gamma_best`` certifies |m rho - l| >= gamma / m^tau only for
    m up to ``M``; it is not a proof for all m.
    """

    rho: float
    tau: float
    M: int
    gamma_best: float
    argmin_m: int

    def passes(self, gamma_floor: float) -> bool:
        return self.gamma_best > gamma_floor

    def to_dict(self):
        return {
            "rho": self.rho,
            "tau": self.tau,
            "M": self.M,
            "gamma_best": self.gamma_best,
            "argmin_m": self.argmin_m,
            "status": f"certified up to m = {self.M}",
        }


def _exact(rho) -> Fraction:
    if isinstance(rho, Fraction):
        return rho
    if isinstance(rho, str):
        return Fraction(rho.strip())
    return Fraction(float(rho))


def best_gamma(rho, tau: float, M: int) -> DiophantineCert:
    """Scan m = 1..M with exact rational arithmetic on the given value of rho.

    Floats are taken at their exact binary value; decimal strings such as
    ``"0.1"`` are read as the exact decimal fraction.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    x = _exact(rho)
    best, arg = math.inf, 1
    for m in range(1, M + 1):
        y = m * x
        frac = y - math.floor(y)
        dist = min(frac, 1 - frac)
        val = float(dist) * m ** tau
        if val < best:
            best, arg = val, m
            if best == 0.0:
                break
    return DiophantineCert(float(x), float(tau), int(M), best, arg)


def gauge_shift(H, rho, tau: float, M: int, candidates=DEFAULT_SHIFT_CANDIDATES,
                gamma_floor: float = 1e-3) -> float:
    """Shift rho' making rho + rho' Diophantine up to M; valid for gauge-invariant H only.

    Returns 0.0 if rho itself already passes.  Solutions of the shifted
    problem map back through u = exp(-i rho' t) u~, i.e. omega_j -> omega_j - rho'.
    """
    if not H.gauge_invariant:
        raise HypothesisRefused(
            "gauge shift needs H = |u|^4 + sum alpha_p |u|^(2p); "
            f"non-gauge-invariant monomials present: {H.extra}", stage="gauge")
    if best_gamma(rho, tau, M).passes(gamma_floor):
        return 0.0
    for c in candidates:
        if best_gamma(float(rho) + float(c), tau, M).passes(gamma_floor):
            return float(c)
    raise HypothesisRefused(
        f"no candidate shift makes rho + rho' Diophantine above gamma floor {gamma_floor}", stage="gauge")
