"""TOML configuration for the command line pipelines.

Sections and defaults::

    [basis]        n = [[1, 0], [0, 1]]    rho = sqrt(2) - 1
    [hamiltonian]  extra = []              # [l, l', alpha] triples added to |u|^4
    [norm]         sigma = 0.5   s = b/2 + 1   algebra_const = 4^s e^(b sigma)
    [solver]       eps (required for solves)  a = [1, ...]  K_t = 8 or "adaptive"
                   K_t_max = 32  K_ext = 2 K_t  range_tol = 1e-13  newton_tol = 1e-12
                   outer_tol = 1e-12  sign_convention = "physical"  waive_hypotheses = false
    [diophantine]  tau = 2  gamma_floor = 1e-3  M = 1000  rho_shift = (none) | "auto" | number
                   candidates = [sqrt(2)-1, sqrt(3)-1, (sqrt(5)-1)/2]
    [verify]       kappa = 0.5  eps_list  a_grid  samples = 1000000  seed (required for measure)

``eps`` may also be given at top level.  ``rho`` may be a decimal string,
which the Diophantine scan then reads exactly.
"""
from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diophantine import DEFAULT_SHIFT_CANDIDATES
from .errors import ConfigError, InvalidBasis
from .lattice_spaces import Basis, NormParams
from .nonlinearity import HamiltonianSpec
from .pipeline import SolveConfig

KNOWN = {
    "basis": {"n", "rho"},
    "hamiltonian": {"extra"},
    "norm": {"sigma", "s", "algebra_const"},
    "solver": {"eps", "a", "K_t", "K_t_max", "K_ext", "range_tol", "newton_tol", "outer_tol",
               "range_max_iter", "newton_max_iter", "qii_max_iter", "outer_max_iter",
               "sign_convention", "waive_hypotheses", "adaptive_tol"},
    "diophantine": {"tau", "gamma_floor", "M", "rho_shift", "candidates"},
    "verify": {"kappa", "eps_list", "a_grid", "samples", "seed"},
}
TOP_LEVEL = {"eps", "seed"}


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from None


def config_from_dict(raw: dict, require_eps: bool = True) -> SolveConfig:
    """Validate ``raw`` and build a SolveConfig, reporting every problem at once."""
    problems = []
    for key, val in raw.items():
        if key in KNOWN:
            if not isinstance(val, dict):
                problems.append(f"[{key}] must be a table")
                continue
            for sub in val:
                if sub not in KNOWN[key]:
                    problems.append(f"unknown key {key}.{sub}")
        elif key not in TOP_LEVEL:
            problems.append(f"unknown section or key {key!r}")
    sec = {k: raw.get(k, {}) if isinstance(raw.get(k, {}), dict) else {} for k in KNOWN}

    # basis
    basis = None
    n = sec["basis"].get("n")
    rho = sec["basis"].get("rho", math.sqrt(2.0) - 1.0)
    rho_exact = None
    if isinstance(rho, str):
        try:
            rho_exact = rho
            rho = float(rho)
        except ValueError:
            problems.append(f"basis.rho: cannot parse {rho!r}")
            rho = 0.0
    elif not _num(rho):
        problems.append("basis.rho must be a number or a decimal string")
        rho = 0.0
    if n is None:
        problems.append("basis.n is required")
    elif not (isinstance(n, list) and n and all(isinstance(v, list) and v and all(
            isinstance(x, int) and not isinstance(x, bool) for x in v) for v in n)):
        problems.append("basis.n must be a nonempty list of integer vectors")
    else:
        d = len(n[0])
        if any(len(v) != d for v in n):
            problems.append("basis.n: all vectors need the same dimension d")
        elif len(n) > d:
            problems.append(f"basis.n: b = {len(n)} exceeds d = {d}")
        else:
            try:
                basis = Basis(tuple(tuple(v) for v in n), rho=float(rho))
            except InvalidBasis as exc:
                problems.append(f"basis.n: {exc}")
    b = basis.b if basis is not None else None

    # hamiltonian
    H = HamiltonianSpec.quartic()
    extra = sec["hamiltonian"].get("extra", [])
    if not (isinstance(extra, list) and all(isinstance(t, list) and len(t) == 3 for t in extra)):
        problems.append("hamiltonian.extra must be a list of [l, l', alpha] triples")
    else:
        try:
            H = HamiltonianSpec.from_extra(extra)
        except (ValueError, TypeError) as exc:
            problems.append(f"hamiltonian.extra: {exc}")

    # norm
    norm = None
    nsec = sec["norm"]
    sigma = nsec.get("sigma", 0.5)
    if not _num(sigma) or not sigma > 0:
        problems.append(f"norm.sigma must be > 0, got {sigma!r}")
    s = nsec.get("s")
    if s is not None and (not _num(s) or (b is not None and not s > b / 2)):
        problems.append(f"norm.s must exceed b/2 = {b / 2 if b else '?'}, got {s!r}")
    C = nsec.get("algebra_const")
    if C is not None and (not _num(C) or not C > 0):
        problems.append(f"norm.algebra_const must be > 0, got {C!r}")
    if b is not None and not any(p.startswith("norm.") for p in problems):
        norm = NormParams.default(b, float(sigma), None if s is None else float(s),
                                  None if C is None else float(C))

    # solver
    sv = sec["solver"]
    eps = sv.get("eps", raw.get("eps"))
    if eps is None:
        if require_eps:
            problems.append("solver.eps is required")
        eps = 1e-2
    elif not _num(eps) or not 0 < eps < 1:
        problems.append(f"solver.eps must lie in (0, 1), got {eps!r}")
        eps = 1e-2
    a = sv.get("a")
    if a is not None:
        if not (isinstance(a, list) and all(_num(x) for x in a)):
            problems.append("solver.a must be a list of numbers")
            a = None
        elif b is not None and len(a) != b:
            problems.append(f"solver.a needs {b} entries, got {len(a)}")
            a = None
    K_t = sv.get("K_t", 8)
    adaptive = K_t == "adaptive"
    if adaptive:
        K_t = 4
    elif not (isinstance(K_t, int) and not isinstance(K_t, bool) and K_t >= 1):
        problems.append(f"solver.K_t must be a positive integer or \"adaptive\", got {K_t!r}")
        K_t = 8
    ints = {}
    for key, default in (("K_t_max", 32), ("range_max_iter", 200), ("newton_max_iter", 30),
                         ("qii_max_iter", 100), ("outer_max_iter", 50)):
        val = sv.get(key, default)
        if not (isinstance(val, int) and not isinstance(val, bool) and val >= 1):
            problems.append(f"solver.{key} must be a positive integer")
            val = default
        ints[key] = val
    K_ext = sv.get("K_ext")
    if K_ext is not None and not (isinstance(K_ext, int) and K_ext >= K_t):
        problems.append("solver.K_ext must be an integer >= K_t")
        K_ext = None
    tols = {}
    for key, default in (("range_tol", 1e-13), ("newton_tol", 1e-12), ("outer_tol", 1e-12),
                         ("adaptive_tol", 1e-12)):
        val = sv.get(key, default)
        if not _num(val) or not val > 0:
            problems.append(f"solver.{key} must be > 0")
            val = default
        tols[key] = float(val)
    conv = sv.get("sign_convention", "physical")
    if conv not in ("physical", "paper"):
        problems.append(f"solver.sign_convention must be 'physical' or 'paper', got {conv!r}")
        conv = "physical"
    waive = sv.get("waive_hypotheses", False)
    if not isinstance(waive, bool):
        problems.append("solver.waive_hypotheses must be a boolean")
        waive = False

    # diophantine
    dp = sec["diophantine"]
    tau = dp.get("tau", 2.0)
    if not _num(tau) or not tau > 1:
        problems.append(f"diophantine.tau must exceed 1, got {tau!r}")
        tau = 2.0
    gfloor = dp.get("gamma_floor", 1e-3)
    if not _num(gfloor) or gfloor < 0:
        problems.append("diophantine.gamma_floor must be >= 0")
        gfloor = 1e-3
    M = dp.get("M", 1000)
    if not (isinstance(M, int) and not isinstance(M, bool) and M >= 1):
        problems.append("diophantine.M must be a positive integer")
        M = 1000
    shift = dp.get("rho_shift")
    if shift is not None and shift != "auto" and not _num(shift):
        problems.append("diophantine.rho_shift must be \"auto\" or a number")
        shift = None
    cands = dp.get("candidates", list(DEFAULT_SHIFT_CANDIDATES))
    if not (isinstance(cands, list) and all(_num(c) for c in cands)):
        problems.append("diophantine.candidates must be a list of numbers")
        cands = list(DEFAULT_SHIFT_CANDIDATES)

    # verify
    vf = sec["verify"]
    kappa = vf.get("kappa", 0.5)
    if not _num(kappa) or not kappa > 0:
        problems.append("verify.kappa must be > 0")
        kappa = 0.5
    verify = {}
    if "eps_list" in vf:
        el = vf["eps_list"]
        if not (isinstance(el, list) and el and all(_num(e) and 0 < e < 1 for e in el)):
            problems.append("verify.eps_list must be a list of numbers in (0, 1)")
        else:
            verify["eps_list"] = [float(e) for e in el]
    if "a_grid" in vf:
        ag = vf["a_grid"]
        if not (isinstance(ag, list) and all(isinstance(r, list) and all(_num(x) for x in r) for r in ag)):
            problems.append("verify.a_grid must be a list of amplitude vectors")
        elif b is not None and any(len(r) != b for r in ag):
            problems.append(f"verify.a_grid rows need {b} entries")
        else:
            verify["a_grid"] = [[float(x) for x in r] for r in ag]
    samples = vf.get("samples", 1_000_000)
    if not (isinstance(samples, int) and not isinstance(samples, bool) and samples >= 1):
        problems.append("verify.samples must be a positive integer")
        samples = 1_000_000
    verify["samples"] = samples
    seed = vf.get("seed", raw.get("seed"))
    if seed is not None and not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        problems.append("verify.seed must be a non-negative integer")
        seed = None
    if rho_exact is not None:
        verify["rho_exact"] = rho_exact

    if problems:
        raise ConfigError(problems)
    return SolveConfig(
        basis=basis, eps=float(eps), H=H, norm=norm,
        a=None if a is None else tuple(float(x) for x in a),
        tau=float(tau), gamma_floor=float(gfloor), M=M, K_t=K_t, adaptive=adaptive,
        K_ext=K_ext, sign_convention=conv, kappa=float(kappa), seed=seed,
        waive_hypotheses=waive, rho_shift=shift, shift_candidates=tuple(float(c) for c in cands),
        verify=verify, **ints, **tols,
    )


def parse_config(path, require_eps: bool = True) -> SolveConfig:
    return config_from_dict(load_toml(path), require_eps=require_eps)
