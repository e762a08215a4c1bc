"""Bifurcation equations on the resonant modes.

Q-I fixes the frequencies through sigma_j = (-omega_j + |n_j|^2 + rho)/eps^2,
Q-II fixes the amplitudes a_k, k in K_2, of the non-trivial resonant modes.
On a resonant mode the divisor is exactly eps^2 k.sigma, so both systems are
written in sigma and the eps^2 cancellation never happens in floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy

from .errors import HypothesisRefused, InsideExcludedSet, NotConverged, Diverged
from .lattice_spaces import Basis, SpectralVector, unit
from .nonlinearity import HamiltonianSpec, amplitude_symbols, cubic_coeff_extract, eval_S
from .range_solver import lap_sign


# --- matrix A --------------------------------------------------------------------


@dataclass
class MatrixA:
    """Integer quadratic forms A_{kk'}(a) on K_2 together with det A."""

    modes: tuple
    entries: list          # dim x dim sympy.Poly over ZZ in a_1..a_b
    det_poly: sympy.Poly
    mode: str
    b: int
    _fn: object = field(default=None, repr=False, compare=False)
    _det_fn: object = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.modes)

    @property
    def symbols(self):
        return amplitude_symbols(self.b)

    def diagonal(self):
        return [self.entries[i][i] for i in range(self.dim)]

    def evaluate(self, a) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, 0))
        if self._fn is None:
            M = sympy.Matrix(self.dim, self.dim, lambda i, j: self.entries[i][j].as_expr())
            self._fn = sympy.lambdify(self.symbols, M, "numpy")
        return np.array(self._fn(*np.asarray(a, dtype=float)), dtype=float)

    def det_at(self, a):
        """det A(a); ``a`` may be a (b,) vector or an (n, b) array of samples."""
        a = np.asarray(a, dtype=float)
        if self._det_fn is None:
            self._det_fn = sympy.lambdify(self.symbols, self.det_poly.as_expr(), "numpy")
        if a.ndim == 1:
            return float(self._det_fn(*a))
        out = self._det_fn(*a.T)
        return np.broadcast_to(np.asarray(out, dtype=float), a.shape[:1]).copy()

    @property
    def det_is_zero(self) -> bool:
        return self.det_poly.is_zero

    def det_monomials(self):
        """Canonical list [[coefficient, [exponents]], ...] in descending lex order."""
        terms = sorted(self.det_poly.terms(), key=lambda t: t[0], reverse=True)
        return [[int(c), list(m)] for m, c in terms]

    def to_dict(self):
        return {
            "mode": self.mode,
            "K2": [list(k) for k in self.modes],
            "entries": [[str(e.as_expr()) for e in row] for row in self.entries],
            "det": str(self.det_poly.as_expr()),
            "det_monomials": self.det_monomials(),
            "det_identically_zero": self.det_is_zero,
        }


def _poly(expr, a):
    return sympy.Poly(sympy.expand(expr), *a, domain="ZZ")


def _closed_form_entry(basis: Basis, k, kp, a):
    """Off-diagonal entry from the amplitude-index reading (j, l) of both sums."""
    b = basis.b
    expr = sympy.Integer(0)
    for j in range(b):
        for l in range(b):
            if tuple(x + y - z for x, y, z in zip(k, unit(b, j), unit(b, l))) == tuple(kp):
                expr += 2 * a[j] * a[l]
            if tuple(x + y - z for x, y, z in zip(unit(b, j), unit(b, l), k)) == tuple(kp):
                expr += a[j] * a[l]
    return expr


def build_A(basis: Basis, R, mode: str = "oracle") -> MatrixA:
    """Matrix of the linear part of Q-II, built from the convolution (oracle) or from the closed form.

    oracle: row k is |n_k|^2 times the a_{k'}-coefficient of (|v|^2 v)^(k),
    with the frequency term k.sigma at leading order added on the diagonal;
    the result is normalised by the factor 2 lap_sign common to the row.
    Triple-form modes also carry a constant term; it is not part of A and the
    solve refuses such bases separately.
    """
    b = basis.b
    a = amplitude_symbols(b)
    modes = tuple(R.k2)
    n2 = [int(x) for x in basis.norms2]
    if mode not in ("oracle", "closed_form"):
        raise ValueError(f"mode must be 'oracle' or 'closed_form', got {mode!r}")
    diag_closed = [_poly(sum(k[j] * n2[j] * a[j] ** 2 for j in range(b)), a) for k in modes]
    entries = []
    if mode == "oracle":
        S2 = sum(x ** 2 for x in a)
        half_f = [n2[j] * (2 * S2 - a[j] ** 2) for j in range(b)]
        for k in modes:
            nk2 = int(np.asarray(k) @ basis.gram @ np.asarray(k))
            cc = cubic_coeff_extract(basis, R, k)
            row = []
            for kp in modes:
                e = nk2 * cc.linear[kp].as_expr()
                if kp == k:
                    e -= sum(k[j] * half_f[j] for j in range(b))
                row.append(_poly(e, a))
            entries.append(row)
    else:
        for i, k in enumerate(modes):
            row = []
            for kp in modes:
                row.append(diag_closed[i] if kp == k else _poly(_closed_form_entry(basis, k, kp, a), a))
            entries.append(row)
    if modes:
        M = sympy.Matrix(len(modes), len(modes), lambda i, j: entries[i][j].as_expr())
        det = _poly(M.det(method="berkowitz"), a)
    else:
        det = sympy.Poly(1, *a, domain="ZZ")
    return MatrixA(modes, entries, det, mode, b)


def compare_A(oracle: MatrixA, closed: MatrixA) -> dict:
    """Entrywise comparison; disagreements are reported, never reconciled."""
    if oracle.modes != closed.modes:
        raise ValueError("matrices are indexed by different mode sets")
    diag_ok = all(oracle.entries[i][i] == closed.entries[i][i] for i in range(oracle.dim))
    off = []
    for i, k in enumerate(oracle.modes):
        for j, kp in enumerate(oracle.modes):
            if i != j and oracle.entries[i][j] != closed.entries[i][j]:
                o, c = oracle.entries[i][j].as_expr(), closed.entries[i][j].as_expr()
                ratio = sympy.simplify(o / c) if c != 0 else None
                off.append({"k": list(k), "k'": list(kp), "oracle": str(o), "closed_form": str(c),
                            "ratio": None if ratio is None else str(ratio)})
    return {"diagonal_agree": diag_ok, "offdiag_disagreements": off}


# --- resonant equations ---------------------------------------------------------


def build_v(basis: Basis, a, a_res, K_t: int) -> SpectralVector:
    """v = sum_j a_j e_j + sum_{k in K_2} a_k k on the lattice."""
    modes = {unit(basis.b, j): float(a[j]) for j in range(basis.b)}
    for k, x in (a_res or {}).items():
        modes[tuple(k)] = float(x)
    return SpectralVector.from_modes(basis.b, K_t, modes)


def scaled_N(w: SpectralVector, eps: float, H: HamiltonianSpec, K_t: int) -> SpectralVector:
    """eps^-3 S(eps w): the cubic part is eps-independent, higher terms carry eps^2 and up."""
    return eval_S(w * eps, H, K_t) * (1.0 / eps ** 3)


def resonant_equations(basis: Basis, sigma, w: SpectralVector, eps: float, H: HamiltonianSpec,
                       K_t: int, modes, convention: str = "physical", N: SpectralVector | None = None):
    """E(k) = (k.sigma) w(k) + lap_sign |n_k|^2 [eps^-3 S(eps w)](k) for resonant k.

    This is the Fourier equation at k divided by eps^2.
    """
    if N is None:
        N = scaled_N(w, eps, H, K_t)
    sg = lap_sign(convention)
    sigma = np.asarray(sigma, dtype=float)
    out = []
    for k in modes:
        ka = np.asarray(k)
        nk2 = float(ka @ basis.gram @ ka)
        out.append(float(ka @ sigma) * w.get(k).real + sg * nk2 * N.get(k).real)
    return np.array(out)


def leading_f(basis: Basis, a) -> np.ndarray:
    """f_j = 2 |n_j|^2 (2 sum_l a_l^2 - a_j^2)."""
    a = np.asarray(a, dtype=float)
    return 2 * basis.norms2 * (2 * np.sum(a ** 2) - a ** 2)


def predicted_omega(basis: Basis, a, eps: float, convention: str = "physical") -> np.ndarray:
    """omega_0 + lap_sign eps^2 |n_j|^2 (4 sum a^2 - 2 a_j^2)."""
    return basis.omega0 + lap_sign(convention) * eps ** 2 * leading_f(basis, a)


# --- Q-I ---------------------------------------------------------------------------


@dataclass
class QISolution:
    omega: np.ndarray
    sigma: np.ndarray
    h_norms: np.ndarray
    iterations: int
    g_residual: float
    range_solution: object = None
    history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "omega": self.omega.tolist(),
            "sigma": self.sigma.tolist(),
            "h_norms": self.h_norms.tolist(),
            "iterations": self.iterations,
            "g_residual": self.g_residual,
        }


def solve_QI(basis: Basis, a, eps: float, range_oracle, H: HamiltonianSpec, K_t: int,
             tol: float = 1e-12, max_iter: int = 30, *, a_res=None, convention: str = "physical",
             sigma0=None, fd_step: float = 1e-6) -> QISolution:
    """Newton iteration on g_j(sigma) = E(e_j) / a_j = 0.

    ``range_oracle(omega)`` returns a RangeSolution for the current frequencies.
    The Jacobian is a forward difference, one range solve per column.
    """
    a = np.asarray(a, dtype=float)
    b = basis.b
    units = [unit(b, j) for j in range(b)]
    v = build_v(basis, a, a_res, K_t)
    lead = -lap_sign(convention) * leading_f(basis, a)
    sigma = lead.copy() if sigma0 is None else np.asarray(sigma0, dtype=float).copy()

    def g(sig):
        rs = range_oracle(basis.omega0 - eps ** 2 * sig)
        w = v + rs.u
        return resonant_equations(basis, sig, w, eps, H, K_t, units, convention) / a, rs

    history = []
    gv, rs = g(sigma)
    for it in range(1, max_iter + 1):
        res = float(np.max(np.abs(gv)))
        history.append(res)
        if res <= tol:
            break
        J = np.empty((b, b))
        for j in range(b):
            hj = fd_step * max(1.0, abs(sigma[j]))
            sp = sigma.copy()
            sp[j] += hj
            J[:, j] = (g(sp)[0] - gv) / hj
        sigma = sigma - np.linalg.solve(J, gv)
        gv, rs = g(sigma)
    else:
        res = float(np.max(np.abs(gv)))
        history.append(res)
        if res > tol:
            raise NotConverged(f"Q-I Newton did not reach tol={tol} in {max_iter} iterations "
                               f"(|g| = {res:.3g})", stage="QI")
        it = max_iter
    omega = basis.omega0 - eps ** 2 * sigma
    return QISolution(
        omega=omega,
        sigma=sigma,
        h_norms=eps ** 2 * np.abs(sigma - lead),
        iterations=it,
        g_residual=float(np.max(np.abs(gv))),
        range_solution=rs,
        history=history,
    )


# --- Q-II --------------------------------------------------------------------------


@dataclass
class QIISolution:
    a_res: dict
    iterations: int
    contraction: float
    det: float
    inverse_norm: float
    cramer_bound: float
    ball_radius: float
    history: list = field(default_factory=list)

    def max_abs(self) -> float:
        return max((abs(x) for x in self.a_res.values()), default=0.0)

    def to_dict(self):
        return {
            "a_res": [[list(k), x] for k, x in self.a_res.items()],
            "iterations": self.iterations,
            "contraction": self.contraction,
            "det": self.det,
            "inverse_norm": self.inverse_norm,
            "cramer_bound": self.cramer_bound,
            "ball_radius": self.ball_radius,
        }


def excluded_threshold(eps: float) -> float:
    return eps ** (1.0 / 6.0)


def check_outside_excluded(A: MatrixA, a, eps: float) -> float:
    det = A.det_at(a) if A.dim else 1.0
    thr = excluded_threshold(eps)
    if abs(det) <= thr:
        raise InsideExcludedSet(f"|det A(a)| = {abs(det):.3g} <= eps^(1/6) = {thr:.3g}", stage="QII")
    return det


def solve_QII(basis: Basis, A: MatrixA, a, eps: float, remainder_oracle, tol: float = 1e-12,
              max_iter: int = 50, x0=None) -> QIISolution:
    """Fixed point of x -> -A(a)^-1 r(x) inside the ball |x| <= eps^(3/4).

    ``remainder_oracle(x)`` returns r(x) = F(x)/(2 lap_sign) - A(a) x with F the
    Q-II equations, i.e. everything beyond the linear normal form.
    """
    ball = eps ** 0.75
    if A.dim == 0:
        return QIISolution({}, 0, 0.0, 1.0, 0.0, 0.0, ball)
    det = check_outside_excluded(A, a, eps)
    M = A.evaluate(a)
    Minv = np.linalg.inv(M)
    adj = det * Minv
    cramer = float(np.max(np.abs(adj)) / abs(det))
    inv_norm = float(np.linalg.norm(Minv, 2))
    x = np.zeros(A.dim) if x0 is None else np.asarray(x0, dtype=float)
    prev = None
    ratios, steps = [], []
    for it in range(1, max_iter + 1):
        xn = -Minv @ np.asarray(remainder_oracle(x), dtype=float)
        step = float(np.max(np.abs(xn - x)))
        steps.append(step)
        noise = 64 * np.finfo(float).eps * max(float(np.max(np.abs(xn))), 1e-300)
        if prev is not None and prev > noise and step > noise:
            q = step / prev
            ratios.append(q)
            if q >= 1.0:
                raise Diverged(f"Q-II map not contracting (factor {q:.3g})", stage="QII")
        if float(np.max(np.abs(xn))) > ball:
            raise Diverged(f"Q-II iterate left the ball |a_k| <= eps^(3/4) = {ball:.3g}", stage="QII")
        x, prev = xn, step
        if step <= tol or step <= noise:
            break
    else:
        raise NotConverged(f"Q-II iteration did not reach tol={tol} in {max_iter} iterations", stage="QII")
    return QIISolution(
        a_res={k: float(xi) for k, xi in zip(A.modes, x)},
        iterations=it,
        contraction=max(ratios) if ratios else 0.0,
        det=float(det),
        inverse_norm=inv_norm,
        cramer_bound=cramer,
        ball_radius=ball,
        history=steps,
    )


# --- excluded set ------------------------------------------------------------------

MEASURE_CHUNK = 1 << 16


def sample_abs_det(A: MatrixA, samples: int, seed: int) -> np.ndarray:
    """|det A(a)| at uniform samples of [1,2]^b.

    Samples come in fixed-size chunks, each drawn from its own child of
    SeedSequence(seed), so the stream does not depend on how chunks are scheduled.
    """
    if A.det_is_zero:
        raise HypothesisRefused("det A vanishes identically; the excluded set is everything",
                                stage="measure")
    n_chunks = -(-samples // MEASURE_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = np.empty(samples)
    for i, ss in enumerate(children):
        lo = i * MEASURE_CHUNK
        m = min(MEASURE_CHUNK, samples - lo)
        pts = 1.0 + np.random.default_rng(ss).random((m, A.b))
        out[lo:lo + m] = np.abs(A.det_at(pts))
    return out


def wilson_half_width(p: float, n: int, z: float = 1.959963984540054) -> float:
    return z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)


@dataclass
class MeasureEstimate:
    eps: float
    threshold: float
    fraction: float
    half_width: float
    samples: int
    seed: int
    fraction_tenth: float | None = None
    c_hat: float | None = None

    def to_dict(self):
        return dict(self.__dict__)


def _fit_c(f_hi: float, f_lo: float) -> float | None:
    """Exponent c in fraction ~ eps^c from values at eps and eps/10."""
    if f_hi > 0 and f_lo > 0:
        return math.log10(f_hi / f_lo)
    return None


def estimate_measure(basis: Basis, A: MatrixA, eps: float, samples: int, seed: int,
                     dets: np.ndarray | None = None) -> MeasureEstimate:
    """Monte-Carlo fraction of [1,2]^b with |det A| <= eps^(1/6), plus c-hat from eps and eps/10."""
    if basis.b != A.b:
        raise ValueError("matrix and basis have different b")
    if dets is None:
        dets = sample_abs_det(A, samples, seed)
    thr = excluded_threshold(eps)
    p = float(np.count_nonzero(dets <= thr)) / samples
    p10 = float(np.count_nonzero(dets <= excluded_threshold(eps / 10))) / samples
    return MeasureEstimate(eps, thr, p, wilson_half_width(p, samples), samples, seed, p10, _fit_c(p, p10))


def measure_table(basis: Basis, A: MatrixA, eps_list, samples: int, seed: int) -> dict:
    """Fractions for every eps on one common sample set, with a log-log slope fit.

    Using the same samples for every eps makes the fractions exactly
    non-increasing as eps decreases.
    """
    dets = sample_abs_det(A, samples, seed)
    rows = [estimate_measure(basis, A, e, samples, seed, dets) for e in eps_list]
    pts = [(math.log(r.eps), math.log(r.fraction)) for r in rows if r.fraction > 0]
    slope = None
    if len(pts) >= 2:
        x, y = np.array(pts).T
        slope = float(np.polyfit(x, y, 1)[0])
    return {"rows": rows, "fitted_exponent": slope,
            "decreasing": all(rows[i + 1].fraction <= rows[i].fraction for i in range(len(rows) - 1))}
