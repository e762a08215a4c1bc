"""Range equation P T_w P u + P Lap(eps^-1 S(eps v + eps u)) = 0.

On W the operator (P T_w P)^-1 P Lap is diagonal with entries
``lap_sign |n_k|^2 / (-k.w + |n_k|^2 + rho)``; the fixed point

    u = G(u) = -(P T_w P)^-1 P Lap(eps^-1 S(eps v + eps u))

is found by plain Picard iteration from u = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, DivisorError, NotConverged
from .lattice_spaces import (
    Basis,
    NormParams,
    SpectralVector,
    embedded_norm2,
    gram_min_eigen,
    mode_grid,
    resonant_mask,
    weighted_norm,
)
from .nonlinearity import HamiltonianSpec, scaled_S

# Fourier multiplier of Lap is lap_sign * |n_k|^2.  Direct differentiation
# gives -|n_k|^2; the "paper" convention carries +|n_k|^2 through every formula.
LAP_SIGN = {"physical": -1.0, "paper": 1.0}

_NOISE = 256 * np.finfo(float).eps


def lap_sign(convention: str) -> float:
    try:
        return LAP_SIGN[convention]
    except KeyError:
        raise ValueError(f"sign_convention must be one of {sorted(LAP_SIGN)}, got {convention!r}") from None


def divisor(basis: Basis, k, omega) -> float:
    """-k.omega + |n_k|^2 + rho."""
    k = np.asarray(k, dtype=np.int64)
    nk2 = int(k @ basis.gram @ k)
    return float(-np.dot(k, np.asarray(omega, dtype=float)) + nk2 + basis.rho)


def divisor_grid(basis: Basis, omega, radius: int) -> np.ndarray:
    g = mode_grid(basis.b, radius)
    kw = g.k.astype(float) @ np.asarray(omega, dtype=float)
    return -kw + embedded_norm2(basis, radius) + basis.rho


@dataclass
class DivisorAudit:
    min_abs_divisor: float
    argmin_k: tuple
    sup_multiplier: float
    K1_threshold: float
    K_const: float
    bound_K_over_gamma: float
    gamma: float
    tau: float
    floor: float
    below_floor: list = field(default_factory=list)
    large_k_ok: bool = True
    large_k_violations: list = field(default_factory=list)
    K1_sufficient: float = 0.0

    @property
    def passes(self) -> bool:
        return self.sup_multiplier <= self.bound_K_over_gamma

    def to_dict(self):
        return {
            "min_abs_divisor": self.min_abs_divisor,
            "argmin_k": list(self.argmin_k),
            "sup_multiplier": self.sup_multiplier,
            "K1_threshold": self.K1_threshold,
            "K_const": self.K_const,
            "bound_K_over_gamma": self.bound_K_over_gamma,
            "gamma": self.gamma,
            "tau": self.tau,
            "floor": self.floor,
            "below_floor": [list(k) for k in self.below_floor],
            "large_k_ok": self.large_k_ok,
            "large_k_violations": [list(k) for k in self.large_k_violations],
            "K1_sufficient": self.K1_sufficient,
            "passes": self.passes,
        }


def audit_divisors(basis: Basis, omega, gamma: float, tau: float, K_t: int, R=None) -> DivisorAudit:
    """Scan the non-resonant divisors with |k| <= K_t against the small-divisor bounds.

    K_1 = max_j(|n_j|^2 + 2|rho|)/c_1 separates the large-|k| regime, where the
    divisor must exceed c_1|k|^2/2, from the small-|k| regime with floor
    gamma K_1^-tau / 2.

    The large-|k| lower bound is only spot-checked: with K_1 as defined it can
    fail (T2 at k = (2, 0) has divisor 2 - rho < c_1 |k|^2 / 2).  Violations are
    listed, together with the radius ``K1_sufficient`` from which
    c_1|k|^2 - |k||omega| - |rho| >= c_1|k|^2/2 does hold.  ``passes`` refers to
    the multiplier bound alone.
    """
    g = mode_grid(basis.b, K_t)
    res = resonant_mask(R.all if R is not None else [], basis.b, K_t)
    site = g.mask & ~res
    dv = divisor_grid(basis, omega, K_t)
    nk2 = embedded_norm2(basis, K_t).astype(float)
    absd = np.abs(dv)
    scale = 1.0 + np.sqrt(g.kabs2) * float(np.max(np.abs(omega))) + nk2 + abs(basis.rho)
    zero = site & (absd <= 1e-12 * scale)
    if np.any(zero):
        ks = [tuple(int(x) for x in g.k[tuple(i)]) for i in np.argwhere(zero)[:5]]
        raise DivisorError(
            f"vanishing divisor at non-resonant modes {ks}: rho={basis.rho} is not Diophantine "
            "or omega is too far from omega_0", stage="range")
    c1 = gram_min_eigen(basis)
    sum_n2 = float(np.sum(basis.norms2))
    K1 = float(np.max(basis.norms2) + 2 * abs(basis.rho)) / c1
    K2 = 2 * sum_n2 / c1
    K = max(K2, 2 * K1 ** (tau + 2) * sum_n2)
    bound = K / gamma if gamma > 0 else math.inf
    floor = 0.5 * gamma * K1 ** (-tau)
    if np.any(site):
        masked = np.where(site, absd, np.inf)
        i = np.unravel_index(np.argmin(masked), masked.shape)
        min_abs = float(masked[i])
        argmin = tuple(int(x) for x in g.k[i])
        sup_mult = float(np.max(np.where(site, nk2 / np.where(site, absd, 1.0), 0.0)))
    else:
        min_abs, argmin, sup_mult = math.inf, (0,) * basis.b, 0.0
    kabs = np.sqrt(g.kabs2)
    below = site & (absd < floor)
    large = site & (kabs > K1)
    bad = large & (absd < 0.5 * c1 * g.kabs2)
    wn = float(np.linalg.norm(np.asarray(omega, dtype=float)))
    K1_suff = (wn + math.sqrt(wn * wn + 2 * c1 * abs(basis.rho))) / c1
    return DivisorAudit(
        min_abs_divisor=min_abs,
        argmin_k=argmin,
        sup_multiplier=sup_mult,
        K1_threshold=K1,
        K_const=K,
        bound_K_over_gamma=bound,
        gamma=gamma,
        tau=tau,
        floor=floor,
        below_floor=[tuple(int(x) for x in g.k[tuple(j)]) for j in np.argwhere(below)],
        large_k_ok=not bool(np.any(bad)),
        large_k_violations=[tuple(int(x) for x in g.k[tuple(j)]) for j in np.argwhere(bad)],
        K1_sufficient=K1_suff,
    )


def range_multiplier(basis: Basis, omega, K_t: int, R, convention: str) -> np.ndarray:
    """Diagonal of -(P T_w P)^-1 P Lap; zero on resonant and truncated sites."""
    g = mode_grid(basis.b, K_t)
    site = g.mask & ~resonant_mask(R.all, basis.b, K_t)
    dv = divisor_grid(basis, omega, K_t)
    nk2 = embedded_norm2(basis, K_t).astype(float)
    return np.where(site, -lap_sign(convention) * nk2 / np.where(site, dv, 1.0), 0.0)


@dataclass
class RangeSolution:
    u: SpectralVector
    iterations: int
    contraction_estimate: float
    fp_residual: float
    contraction_history: list = field(default_factory=list)
    audit: DivisorAudit | None = None
    step_history: list = field(default_factory=list)

    def eps_threshold(self, eps: float) -> float:
        """Estimated eps below which the contraction factor stays <= 1/2 (factor ~ eps^2)."""
        q = self.contraction_estimate
        return math.inf if q <= 0 else eps * math.sqrt(0.5 / q)

    def diagnostics(self, eps: float | None = None):
        out = {
            "iterations": self.iterations,
            "contraction_estimate": self.contraction_estimate,
            "contraction_history": list(self.contraction_history),
            "fp_residual": self.fp_residual,
        }
        if eps is not None:
            out["eps_threshold_half_contraction"] = self.eps_threshold(eps)
        if self.audit is not None:
            out["divisor_audit"] = self.audit.to_dict()
        return out


def solve_range(basis: Basis, v: SpectralVector, omega, eps: float, H: HamiltonianSpec, K_t: int,
                tol: float = 1e-13, max_iter: int = 100, *, R, convention: str = "physical",
                norm: NormParams | None = None, audit: DivisorAudit | None = None,
                gamma: float | None = None, tau: float = 2.0,
                u0: SpectralVector | None = None) -> RangeSolution:
    """Picard iteration for the range component u with Q(u) = 0."""
    norm = norm or NormParams.default(basis.b)
    if audit is None:
        if gamma is None:
            from .diophantine import best_gamma
            gamma = best_gamma(basis.rho, tau, 1000).gamma_best
        audit = audit_divisors(basis, omega, gamma, tau, K_t, R)
    v = v.resized(K_t)
    mult = range_multiplier(basis, omega, K_t, R, convention)

    def G(u):
        N = scaled_S(v + u, eps, H, K_t)
        return SpectralVector(mult * N.coeffs, K_t)

    u = u0.resized(K_t) if u0 is not None else SpectralVector.zeros(basis.b, K_t)
    ratios, steps = [], []
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = G(u)
        step = weighted_norm(g - u, norm)
        noise = _NOISE * max(weighted_norm(g, norm), 1e-300)
        steps.append(step)
        if prev is not None and prev > noise and step > noise:
            q = step / prev
            ratios.append(q)
            if q >= 1.0:
                raise Diverged(f"range iteration not contracting (factor {q:.3g} at iteration {it})",
                               stage="range")
        u, prev = g, step
        if step <= tol or step <= noise:
            converged = True
            break
    if not converged:
        raise NotConverged(f"range iteration did not reach tol={tol} in {max_iter} iterations "
                           f"(last step {prev:.3g})", stage="range")
    fp = weighted_norm(u - G(u), norm)
    return RangeSolution(
        u=u,
        iterations=it,
        contraction_estimate=max(ratios) if ratios else 0.0,
        fp_residual=fp,
        contraction_history=ratios,
        audit=audit,
        step_history=steps,
    )


def range_sensitivity(basis: Basis, v: SpectralVector, omega, eps: float, H: HamiltonianSpec, K_t: int,
                      tol: float = 1e-15, *, R, convention: str = "physical",
                      norm: NormParams | None = None, h: float | None = None,
                      amplitude_modes=None, max_iter: int = 100) -> dict:
    """Central finite differences of u in omega_j and in the amplitudes of v.

    Every perturbed point is a fresh range solve warm-started from the base
    solution.  ``amplitude_modes`` defaults to the unit modes e_j.
    """
    norm = norm or NormParams.default(basis.b)
    h = eps ** 3 if h is None else h
    omega = np.asarray(omega, dtype=float)
    from .diophantine import best_gamma
    gamma = best_gamma(basis.rho, 2.0, 1000).gamma_best
    kw = dict(R=R, convention=convention, norm=norm, gamma=gamma, max_iter=max_iter)
    base = solve_range(basis, v, omega, eps, H, K_t, tol, **kw)

    def fd(solve_plus, solve_minus):
        up = solve_plus().u
        um = solve_minus().u
        return (up - um) * (1.0 / (2 * h))

    d_omega = []
    for j in range(basis.b):
        e = np.zeros(basis.b)
        e[j] = h
        du = fd(lambda: solve_range(basis, v, omega + e, eps, H, K_t, tol, u0=base.u, **kw),
                lambda: solve_range(basis, v, omega - e, eps, H, K_t, tol, u0=base.u, **kw))
        d_omega.append(du)
    if amplitude_modes is None:
        amplitude_modes = [tuple(1 if i == j else 0 for i in range(basis.b)) for j in range(basis.b)]
    d_amp = {}
    for k in amplitude_modes:
        dv = SpectralVector.from_modes(basis.b, v.radius, {tuple(k): h})
        du = fd(lambda: solve_range(basis, v + dv, omega, eps, H, K_t, tol, u0=base.u, **kw),
                lambda: solve_range(basis, v - dv, omega, eps, H, K_t, tol, u0=base.u, **kw))
        d_amp[tuple(k)] = du
    return {
        "h": h,
        "base": base,
        "d_omega": d_omega,
        "d_amplitude": d_amp,
        "d_omega_norms": [weighted_norm(x, norm) for x in d_omega],
        "d_amplitude_norms": {k: weighted_norm(x, norm) for k, x in d_amp.items()},
    }
