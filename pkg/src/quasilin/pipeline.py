"""Full Lyapunov-Schmidt solve, reconstruction and verification."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bifurcation import (
    build_A,
    build_v,
    check_outside_excluded,
    compare_A,
    leading_f,
    predicted_omega,
    resonant_equations,
    solve_QI,
    solve_QII,
)
from .diophantine import DEFAULT_SHIFT_CANDIDATES, best_gamma, gauge_shift
from .errors import ConfigError, HypothesisRefused, NotConverged, QuasilinError
from .lattice_spaces import (
    Basis,
    NormParams,
    SpectralVector,
    _weight2,
    embedded_norm2,
    mode_grid,
    unit,
    weighted_norm,
)
from .nonlinearity import HamiltonianSpec, eval_S
from .range_solver import divisor_grid, lap_sign, solve_range
from .resonance import classify_supports, enumerate_resonant, geometric_flags

SCHEMA = "quasilin.solution/1"


@dataclass
class SolveConfig:
    basis: Basis
    eps: float
    H: HamiltonianSpec = field(default_factory=HamiltonianSpec.quartic)
    norm: NormParams | None = None
    a: tuple | None = None
    tau: float = 2.0
    gamma_floor: float = 1e-3
    M: int = 1000
    K_t: int = 8
    adaptive: bool = False
    K_t_max: int = 32
    adaptive_tol: float = 1e-12
    K_ext: int | None = None
    range_tol: float = 1e-13
    newton_tol: float = 1e-12
    outer_tol: float = 1e-12
    range_max_iter: int = 200
    newton_max_iter: int = 30
    qii_max_iter: int = 100
    outer_max_iter: int = 50
    sign_convention: str = "physical"
    kappa: float = 0.5
    seed: int | None = None
    waive_hypotheses: bool = False
    rho_shift: object = None          # None, "auto" or a number
    shift_candidates: tuple = DEFAULT_SHIFT_CANDIDATES
    verify: dict = field(default_factory=dict)   # eps_list, a_grid, samples for the verify/sweep/measure commands

    def __post_init__(self):
        if self.norm is None:
            self.norm = NormParams.default(self.basis.b)
        if self.a is None:
            self.a = (1.0,) * self.basis.b
        self.a = tuple(float(x) for x in self.a)
        if len(self.a) != self.basis.b:
            raise ValueError(f"need {self.basis.b} amplitudes, got {len(self.a)}")
        lap_sign(self.sign_convention)

    @property
    def ext_radius(self) -> int:
        return self.K_ext if self.K_ext is not None else 2 * self.K_t

    def replace(self, **kw) -> "SolveConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return {
            "basis": self.basis.to_dict(),
            "eps": self.eps,
            "hamiltonian": {"extra": self.H.extra},
            "norm": {"sigma": self.norm.sigma, "s": self.norm.s, "algebra_const": self.norm.algebra_const},
            "a": list(self.a),
            "tau": self.tau,
            "gamma_floor": self.gamma_floor,
            "M": self.M,
            "K_t": self.K_t,
            "adaptive": self.adaptive,
            "K_t_max": self.K_t_max,
            "K_ext": self.ext_radius,
            "range_tol": self.range_tol,
            "newton_tol": self.newton_tol,
            "outer_tol": self.outer_tol,
            "sign_convention": self.sign_convention,
            "kappa": self.kappa,
            "seed": self.seed,
            "waive_hypotheses": self.waive_hypotheses,
            "rho_shift": self.rho_shift,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SolveResult:
    basis: Basis
    omega: np.ndarray
    sigma: np.ndarray
    a: tuple
    a_res: dict
    u_range: SpectralVector
    full_field: SpectralVector
    residual_norm: float
    persistence: dict
    diagnostics: dict
    eps: float
    K_t: int
    rho_shift: float = 0.0
    config: SolveConfig | None = None

    @property
    def converged(self) -> bool:
        return True

    def summary(self):
        return {
            "omega": self.omega.tolist(),
            "sigma": self.sigma.tolist(),
            "a": list(self.a),
            "a_physical": [self.eps * x for x in self.a],
            "a_res": [[list(k), x] for k, x in self.a_res.items()],
            "residual_norm": self.residual_norm,
            "persistence": self.persistence,
            "K_t": self.K_t,
            "rho_shift": self.rho_shift,
            "diagnostics": self.diagnostics,
        }


# --- hypotheses -------------------------------------------------------------------


def hypothesis_checks(config: SolveConfig) -> dict:
    """Evaluate every hypothesis before solving; raise on refusal unless waived.

    Returns the report block plus the objects the solve needs.
    """
    basis = config.basis
    refusals = []
    cert = best_gamma(config.verify.get("rho_exact", basis.rho), config.tau, config.M)
    shift = 0.0
    if not cert.passes(config.gamma_floor):
        if config.rho_shift is not None:
            if config.rho_shift == "auto":
                shift = gauge_shift(config.H, basis.rho, config.tau, config.M,
                                    config.shift_candidates, config.gamma_floor)
            else:
                if not config.H.gauge_invariant:
                    raise HypothesisRefused("gauge shift requires a gauge-invariant Hamiltonian",
                                            stage="gauge")
                shift = float(config.rho_shift)
                if not best_gamma(basis.rho + shift, config.tau, config.M).passes(config.gamma_floor):
                    refusals.append(f"rho + rho' = {basis.rho + shift} fails the Diophantine floor")
        else:
            refusals.append(f"rho = {basis.rho}: gamma_best = {cert.gamma_best:.3g} <= floor {config.gamma_floor}")
    elif config.rho_shift not in (None, "auto"):
        if not config.H.gauge_invariant:
            raise HypothesisRefused("gauge shift requires a gauge-invariant Hamiltonian", stage="gauge")
        shift = float(config.rho_shift)
    work = basis.with_rho(basis.rho + shift)
    cert_work = best_gamma(work.rho, config.tau, config.M)
    flags = geometric_flags(basis)
    R = enumerate_resonant(basis)
    classification = classify_supports(R, flags)
    a = np.asarray(config.a)
    if np.any(a < 1.0) or np.any(a > 2.0):
        refusals.append(f"amplitudes {config.a} outside [1, 2]^b")
    A = None
    A_report = {"dim": 0}
    if R.k2:
        if R.has_triple_form:
            refusals.append("K_2 contains triple-form modes")
            A_report = {"dim": len(R.k2), "oracle": build_A(basis, R, "oracle").to_dict()}
        else:
            A = build_A(basis, R, "oracle")
            Ac = build_A(basis, R, "closed_form")
            A_report = {"dim": A.dim, "oracle": A.to_dict(), "comparison": compare_A(A, Ac)}
            if A.det_is_zero:
                refusals.append("det A vanishes identically")
    block = {
        "diophantine": cert.to_dict(),
        "diophantine_shifted": cert_work.to_dict() if shift else None,
        "rho_shift": shift,
        "flags": flags.to_dict(),
        "resonance": R.to_dict(),
        "classification": classification,
        "matrix_A": A_report,
        "refusals": refusals,
        "waived": bool(refusals) and config.waive_hypotheses,
    }
    if refusals and not config.waive_hypotheses:
        raise HypothesisRefused("; ".join(refusals), stage="hypotheses")
    if A is not None and not A.det_is_zero:
        A_report["det_at_a"] = check_outside_excluded(A, config.a, config.eps)
    return {"block": block, "shift": shift, "work_basis": work, "R": R, "A": A,
            "gamma": cert_work.gamma_best}


# --- core solve -----------------------------------------------------------------


def _solve_at(config: SolveConfig, K_t: int, hyp: dict) -> SolveResult:
    basis, work, R, A = config.basis, hyp["work_basis"], hyp["R"], hyp["A"]
    outside = [k for k in R.all if not mode_grid(basis.b, K_t).contains(k)]
    if outside:
        raise ConfigError(f"K_t = {K_t} does not contain the resonant modes {outside}")
    eps, H, conv, norm = config.eps, config.H, config.sign_convention, config.norm
    a = np.asarray(config.a)
    sg = lap_sign(conv)
    gamma = hyp["gamma"]
    x = {k: 0.0 for k in R.k2}
    sigma = -sg * leading_f(basis, a)
    state = {"u": None, "rs": None}

    def range_at(omega, v):
        rs = solve_range(work, v, omega, eps, H, K_t, config.range_tol, config.range_max_iter,
                         R=R, convention=conv, norm=norm, gamma=gamma, tau=config.tau, u0=state["u"])
        state["rs"] = rs
        return rs

    outer_changes = []
    qi = qii = None
    prev = None
    for outer in range(1, config.outer_max_iter + 1):
        v = build_v(work, a, x, K_t)
        qi = solve_QI(work, a, eps, lambda om: range_at(om, v), H, K_t, config.newton_tol,
                      config.newton_max_iter, a_res=x, convention=conv, sigma0=sigma)
        sigma = qi.sigma
        state["u"] = qi.range_solution.u
        if A is not None:
            omega = work.omega0 - eps ** 2 * sigma
            M = A.evaluate(a)

            def remainder(xv):
                xd = dict(zip(A.modes, (float(t) for t in xv)))
                vv = build_v(work, a, xd, K_t)
                rs = range_at(omega, vv)
                F = resonant_equations(work, sigma, vv + rs.u, eps, H, K_t, A.modes, conv)
                return F / (2 * sg) - M @ np.asarray(xv, dtype=float)

            qii = solve_QII(work, A, a, eps, remainder, config.newton_tol, config.qii_max_iter,
                            x0=np.array([x[k] for k in A.modes]))
            x = dict(qii.a_res)
            state["u"] = state["rs"].u
        cur = (sigma.copy(), np.array([x[k] for k in R.k2]), state["u"])
        if prev is not None:
            ch = max(float(np.max(np.abs(cur[0] - prev[0]))) * eps ** 2,
                     float(np.max(np.abs(cur[1] - prev[1]), initial=0.0)),
                     weighted_norm(cur[2] - prev[2], norm))
            outer_changes.append(ch)
            if ch <= config.outer_tol:
                break
        elif A is None:
            # without Q-II the Newton solve already includes the range equation
            outer_changes.append(0.0)
            break
        prev = cur
    else:
        raise NotConverged(f"outer alternation did not settle within {config.outer_max_iter} rounds",
                           stage="outer")
    # final range solve at the converged (omega, a_res), from u = 0 so that the
    # reported contraction history is that of the plain Picard iteration
    omega_work = work.omega0 - eps ** 2 * sigma
    v = build_v(work, a, x, K_t)
    state["u"] = None
    rs = range_at(omega_work, v)
    u = rs.u
    full = (v + u) * eps
    omega = omega_work - hyp["shift"]
    K_ext = config.K_ext if config.K_ext is not None else 2 * K_t
    residual = pde_residual_field(full, omega, basis, H, K_ext, norm, conv)
    diagnostics = {
        "hypotheses": hyp["block"],
        "range": rs.diagnostics(eps),
        "QI": qi.to_dict(),
        "QII": qii.to_dict() if qii is not None else None,
        "outer_iterations": len(outer_changes) + 1 if A is not None else 1,
        "outer_changes": outer_changes,
        "K_ext": K_ext,
    }
    if hyp["shift"]:
        diagnostics["residual_shifted_problem"] = pde_residual_field(full, omega_work, work, H, K_ext, norm, conv)
    res = SolveResult(
        basis=basis, omega=omega, sigma=sigma, a=tuple(config.a), a_res=x, u_range=u,
        full_field=full, residual_norm=residual, persistence={}, diagnostics=diagnostics,
        eps=eps, K_t=K_t, rho_shift=hyp["shift"], config=config,
    )
    res.persistence = persistence_checks(res, config.kappa, norm)
    return res


def solve_full(config: SolveConfig) -> SolveResult:
    """Hypothesis gate, then range / Q-I / Q-II alternation and reconstruction."""
    hyp = hypothesis_checks(config)
    if not config.adaptive:
        return _solve_at(config, config.K_t, hyp)
    K = config.K_t
    res = _solve_at(config, K, hyp)
    trail = [(K, weighted_norm(res.full_field, config.norm))]
    while 2 * K <= config.K_t_max:
        K *= 2
        nxt = _solve_at(config, K, hyp)
        trail.append((K, weighted_norm(nxt.full_field, config.norm)))
        res = nxt
        if abs(trail[-1][1] - trail[-2][1]) < config.adaptive_tol:
            break
    res.diagnostics["adaptive_K_t"] = [[k, n] for k, n in trail]
    return res


# --- verification ---------------------------------------------------------------


def pde_residual_field(field_: SpectralVector, omega, basis: Basis, H: HamiltonianSpec, K_ext: int,
                       norm: NormParams | None = None, convention: str = "physical") -> float:
    """Weighted norm of (-k.omega + |n_k|^2 + rho) u(k) + lap_sign |n_k|^2 S(u)(k) on |k| <= K_ext."""
    norm = norm or NormParams.default(basis.b)
    f = field_.resized(K_ext)
    S = eval_S(f, H, K_ext)
    d = divisor_grid(basis, omega, K_ext)
    nk2 = embedded_norm2(basis, K_ext).astype(float)
    r = d * f.coeffs + lap_sign(convention) * nk2 * S.coeffs
    return weighted_norm(SpectralVector(r, K_ext), norm)


def pde_residual(result: SolveResult, basis: Basis | None = None, H: HamiltonianSpec | None = None,
                 K_ext: int | None = None, norm: NormParams | None = None,
                 convention: str | None = None) -> float:
    cfg = result.config
    return pde_residual_field(
        result.full_field, result.omega, basis or result.basis, H or cfg.H,
        K_ext if K_ext is not None else 2 * result.K_t, norm or cfg.norm,
        convention or cfg.sign_convention)


def persistence_checks(result: SolveResult, kappa: float = 0.5, norm: NormParams | None = None) -> dict:
    """Anchor exactness, off-anchor weighted mass and frequency distance.

    The mass uses the k-lattice weights max(|k|,1)^s e^(sigma|k|) without the
    algebra constant; the version with the constant is reported alongside.
    """
    basis, eps = result.basis, result.eps
    norm = norm or NormParams.default(basis.b)
    b = basis.b
    f = result.full_field
    a_phys = np.array([eps * x for x in result.a])
    anchors = [f.get(unit(b, j)) for j in range(b)]
    anchor_err = max(abs(c - ap) for c, ap in zip(anchors, a_phys))
    g = mode_grid(b, f.radius)
    off = f.coeffs.copy()
    for j in range(b):
        off[g.index(unit(b, j))] = 0
    w2 = _weight2(b, f.radius, norm.sigma, norm.s)
    mass = math.sqrt(float(np.sum(np.abs(off) ** 2 * w2)))
    mass_C = math.sqrt(norm.algebra_const) * mass
    amp = float(np.linalg.norm(a_phys))
    dist = float(np.linalg.norm(result.omega - basis.omega0))
    return {
        "anchor_error": float(anchor_err),
        "anchor_exact": bool(anchor_err == 0.0),
        "off_anchor_mass": mass,
        "off_anchor_mass_with_C": mass_C,
        "mass_bound": amp ** (1 + kappa),
        "mass_ok": bool(mass < amp ** (1 + kappa)),
        "frequency_distance": dist,
        "frequency_bound": amp ** 2,
        "frequency_ok": bool(dist < amp ** 2),
        "kappa": kappa,
    }


def frequency_order_check(config: SolveConfig, eps_list) -> list:
    """delta_j(eps) = |omega_j - predicted_j| and successive ratios delta(eps_i)/delta(eps_{i+1}).

    delta_j is formed as eps^2 |sigma_j - sigma_lead_j|, the same quantity
    without the cancellation in omega_j - omega0_j.
    """
    eps_list = list(eps_list)
    if len(eps_list) < 3 or any(eps_list[i + 1] >= eps_list[i] for i in range(len(eps_list) - 1)):
        raise ValueError("eps_list must be a decreasing sequence of at least 3 values")
    basis = config.basis
    sg = lap_sign(config.sign_convention)
    rows = []
    for e in eps_list:
        r = solve_full(config.replace(eps=e))
        lead = -sg * leading_f(basis, r.a)
        delta = e ** 2 * np.abs(r.sigma - lead)
        shift = r.omega - basis.omega0
        rows.append({
            "eps": e,
            "omega": r.omega.tolist(),
            "predicted": predicted_omega(basis, r.a, e, config.sign_convention).tolist(),
            "predicted_shift_magnitude": (e ** 2 * leading_f(basis, r.a)).tolist(),
            "delta": delta.tolist(),
            "shift_sign_matches_convention": bool(np.all(np.sign(shift) == sg)),
            "ratio": None,
        })
    for i in range(1, len(rows)):
        d0, d1 = np.array(rows[i - 1]["delta"]), np.array(rows[i]["delta"])
        rows[i]["ratio"] = [float(x / y) if y > 0 else math.inf for x, y in zip(d0, d1)]
    return rows


# --- export / import ------------------------------------------------------------


@dataclass
class SolutionRecord:
    basis: Basis
    omega: np.ndarray
    field: SpectralVector
    meta: dict


def to_record(result: SolveResult) -> SolutionRecord:
    meta = {
        "tool_version": __version__,
        "eps": result.eps,
        "a": list(result.a),
        "a_physical": [result.eps * x for x in result.a],
        "a_res": [[list(k), x] for k, x in result.a_res.items()],
        "K_t": result.K_t,
        "rho_shift": result.rho_shift,
        "residual_norm": result.residual_norm,
        "sign_convention": result.config.sign_convention if result.config else "physical",
        "config_hash": result.config.hash() if result.config else None,
    }
    return SolutionRecord(result.basis, np.asarray(result.omega, dtype=float), result.full_field, meta)


def solution_payload(rec: SolutionRecord) -> str:
    coeffs = []
    for k, c in rec.field.items():
        nk = [int(x) for x in np.asarray(k) @ np.asarray(rec.basis.n)]
        c = complex(c)
        coeffs.append([list(k), nk, c.real, c.imag])
    doc = {
        "schema": SCHEMA,
        "meta": rec.meta,
        "basis": [list(v) for v in rec.basis.n],
        "rho": rec.basis.rho,
        "radius": rec.field.radius,
        "omega": [float(x) for x in rec.omega],
        "coefficients": coeffs,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def export_solution(result, path) -> str:
    """Write the Fourier expansion to ``path``; accepts a SolveResult or a SolutionRecord."""
    rec = result if isinstance(result, SolutionRecord) else to_record(result)
    text = solution_payload(rec)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def import_solution(path) -> SolutionRecord:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported solution schema {doc.get('schema')!r}")
    basis = Basis(tuple(tuple(v) for v in doc["basis"]), rho=doc["rho"])
    modes = {}
    for k, _nk, re, im in doc["coefficients"]:
        modes[tuple(k)] = complex(re, im) if im != 0.0 else re
    field_ = SpectralVector.from_modes(basis.b, int(doc["radius"]), modes)
    return SolutionRecord(basis, np.array(doc["omega"], dtype=float), field_, doc["meta"])


# --- sweeps -------------------------------------------------------------------------

SWEEP_FIELDS = ["config_hash", "eps", "a", "outcome", "residual", "omega", "off_anchor_mass", "message"]


def sweep(config: SolveConfig, a_grid, eps_list) -> list:
    """One solve per (a, eps); failures are recorded by outcome tag, not raised."""
    rows = []
    for e in eps_list:
        for a in a_grid:
            cfg = config.replace(eps=float(e), a=tuple(float(x) for x in a))
            row = {"config_hash": cfg.hash(), "eps": float(e), "a": list(cfg.a)}
            try:
                r = solve_full(cfg)
                row.update(outcome="ok", residual=r.residual_norm, omega=r.omega.tolist(),
                           off_anchor_mass=r.persistence["off_anchor_mass"], message="")
            except QuasilinError as exc:
                row.update(outcome=exc.outcome, residual=None, omega=None, off_anchor_mass=None,
                           message=str(exc))
            rows.append(row)
    return rows


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (list, tuple)):
        return " ".join(_cell(y) for y in x)
    return repr(x) if isinstance(x, float) else str(x)


def sweep_csv(rows, fields=SWEEP_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(r.get(f)) for f in fields])
    return buf.getvalue()
