"""Command line front end: ``quasilin <command> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 hypothesis refused,
4 diverged, 5 not converged, 6 inside the excluded set, 7 verification failed.
The output directory is ``--out``, else ``$QUASILIN_OUT``, else ``./quasilin_out``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bifurcation import build_A, compare_A, measure_table
from .config import parse_config
from .diophantine import best_gamma
from .errors import ConfigError, HypothesisRefused, QuasilinError, VerificationFailure
from .pipeline import (
    export_solution,
    frequency_order_check,
    solve_full,
    sweep,
    sweep_csv,
)
from .resonance import classify_supports, enumerate_resonant, geometric_flags, search_bases

OUT_ENV = "QUASILIN_OUT"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, non-finite as strings."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n"


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Run:
    """One invocation: collects artifacts and appends exactly one manifest line."""

    def __init__(self, out: Path, command: str):
        self.out = out
        self.command = command
        self.started = _now()
        self.artifacts = []
        self.config_hash = None

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.artifacts.append(str(p))
        return p

    def finish(self, outcome: str, code: int):
        self.out.mkdir(parents=True, exist_ok=True)
        line = {
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": __version__,
            "started": self.started,
            "finished": _now(),
            "outcome": outcome,
            "exit_code": code,
            "artifacts": self.artifacts,
        }
        with open(self.out / "manifests.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def _hypothesis_block(cfg):
    basis = cfg.basis
    R = enumerate_resonant(basis)
    flags = geometric_flags(basis)
    block = {
        "diophantine": best_gamma(cfg.verify.get("rho_exact", basis.rho), cfg.tau, cfg.M).to_dict(),
        "flags": flags.to_dict(),
        "resonance": R.to_dict(),
        "classification": classify_supports(R, flags),
    }
    return block, R


# --- commands -----------------------------------------------------------------------


def cmd_resonance(args, run):
    cfg = parse_config(args.config, require_eps=False)
    run.config_hash = cfg.hash()
    block, R = _hypothesis_block(cfg)
    if R.k2:
        Ac = build_A(cfg.basis, R, "closed_form")
        block["matrix_A_closed_form"] = Ac.to_dict()
        Ao = build_A(cfg.basis, R, "oracle")
        block["matrix_A_oracle"] = Ao.to_dict()
        block["matrix_A_comparison"] = compare_A(Ao, Ac)
    text = dumps(block)
    run.write(f"resonance-{run.config_hash}.json", text)
    sys.stdout.write(text)
    return 0


def cmd_check_rho(args, run):
    rho = args.rho
    try:
        val = float(rho)
    except ValueError:
        raise ConfigError(f"--rho: cannot parse {rho!r}") from None
    cert = best_gamma(rho if any(c in rho for c in ".eE/") else val, args.tau, args.max_m)
    run.config_hash = hashlib.sha256(f"{rho}|{args.tau}|{args.max_m}".encode()).hexdigest()[:16]
    rep = cert.to_dict()
    rep["gamma_floor"] = args.gamma_floor
    rep["passes"] = cert.passes(args.gamma_floor)
    text = dumps(rep)
    sys.stdout.write(text)
    if not rep["passes"]:
        raise HypothesisRefused(f"gamma_best = {cert.gamma_best} <= floor {args.gamma_floor}", stage="check-rho")
    return 0


def cmd_solve(args, run):
    cfg = parse_config(args.config)
    run.config_hash = h = cfg.hash()
    res = solve_full(cfg)
    sol = run.out / f"solution-{h}.json"
    run.out.mkdir(parents=True, exist_ok=True)
    export_solution(res, sol)
    run.artifacts.append(str(sol))
    rep = {"config": cfg.to_dict(), "config_hash": h, "result": res.summary(), "solution_file": sol.name}
    text = dumps(rep)
    run.write(f"report-{h}.json", text)
    sys.stdout.write(dumps({"config_hash": h, "omega": res.omega, "residual_norm": res.residual_norm,
                            "persistence": res.persistence, "solution_file": str(sol)}))
    return 0


def cmd_sweep(args, run):
    cfg = parse_config(args.config)
    run.config_hash = cfg.hash()
    a_grid = cfg.verify.get("a_grid", [list(cfg.a)])
    eps_list = cfg.verify.get("eps_list", [cfg.eps])
    rows = sweep(cfg, a_grid, eps_list)
    text = sweep_csv(rows)
    run.write(f"sweep-{run.config_hash}.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_measure(args, run):
    cfg = parse_config(args.config, require_eps=False)
    run.config_hash = cfg.hash()
    if cfg.seed is None:
        raise ConfigError("verify.seed is mandatory for measure (no wall-clock entropy is used)")
    R = enumerate_resonant(cfg.basis)
    if not R.k2:
        raise HypothesisRefused("K_2 is empty: there is no matrix A and no excluded set", stage="measure")
    A = build_A(cfg.basis, R, "oracle")
    eps_list = cfg.verify.get("eps_list", [1e-3, 1e-6, 1e-9])
    tab = measure_table(cfg.basis, A, eps_list, cfg.verify["samples"], cfg.seed)
    lines = ["eps,fraction,half_width"]
    for r in tab["rows"]:
        lines.append(f"{r.eps!r},{r.fraction!r},{r.half_width!r}")
    csv_text = "\n".join(lines) + "\n"
    run.write(f"measure-{run.config_hash}.csv", csv_text)
    rep = {"matrix_A": A.to_dict(), "rows": [r.to_dict() for r in tab["rows"]],
           "fitted_exponent": tab["fitted_exponent"], "decreasing": tab["decreasing"]}
    run.write(f"measure-{run.config_hash}.json", dumps(rep))
    sys.stdout.write(csv_text)
    return 0


def cmd_verify(args, run):
    cfg = parse_config(args.config)
    run.config_hash = h = cfg.hash()
    checks = {}
    res = solve_full(cfg)
    p = res.persistence
    checks["anchor_exact"] = p["anchor_exact"]
    checks["off_anchor_mass"] = p["mass_ok"]
    checks["frequency_distance"] = p["frequency_ok"]
    trunc = []
    for K in (cfg.K_t // 2, cfg.K_t, 2 * cfg.K_t):
        if K < 1:
            continue
        try:
            trunc.append([K, solve_full(cfg.replace(K_t=K, adaptive=False)).residual_norm])
        except ConfigError:
            continue
    checks["residual_decreases_with_K_t"] = all(trunc[i + 1][1] <= trunc[i][1] for i in range(len(trunc) - 1))
    freq = None
    if not res.a_res:
        eps_list = cfg.verify.get("eps_list", [cfg.eps, cfg.eps / 2, cfg.eps / 4])
        freq = frequency_order_check(cfg, eps_list)
        ok = True
        for row in freq[1:]:
            for r, d in zip(row["ratio"], row["delta"]):
                # an exact closure gives delta at roundoff level; the ratio is then meaningless
                if d > 1e-14 * cfg.eps ** 2 and not 4 <= r <= 16:
                    ok = False
        checks["frequency_remainder_ratio"] = ok
        checks["shift_sign_matches_convention"] = all(r["shift_sign_matches_convention"] for r in freq)
    rep = {"config_hash": h, "checks": checks, "truncation": trunc, "frequency_order": freq,
           "result": res.summary()}
    run.write(f"verify-{h}.json", dumps(rep))
    sys.stdout.write(dumps({"config_hash": h, "checks": checks}))
    failed = [k for k, v in checks.items() if not v]
    if failed:
        raise VerificationFailure(f"failed checks: {failed}", stage="verify")
    return 0


WANTS = {
    "k2-empty": lambda f, R: not R.k2,
    "k2-nonempty": lambda f, R: bool(R.k2),
    "triple": lambda f, R: R.has_triple_form,
    "k2-no-triple": lambda f, R: bool(R.k2) and not R.has_triple_form,
    "nonperp-k2": lambda f, R: bool(R.k2) and f.nonperp_differences,
}


def cmd_search(args, run):
    run.config_hash = hashlib.sha256(f"{args.d}|{args.b}|{args.radius}|{args.want}".encode()).hexdigest()[:16]
    found = search_bases(args.d, args.b, args.radius, WANTS[args.want])
    out = []
    for basis in found[: args.limit]:
        R = enumerate_resonant(basis)
        out.append({"n": [list(v) for v in basis.n], "K2": [list(k) for k in R.k2],
                    "has_triple_form": R.has_triple_form})
    rep = {"d": args.d, "b": args.b, "radius": args.radius, "want": args.want,
           "count": len(found), "bases": out}
    text = dumps(rep)
    run.write(f"search-{run.config_hash}.json", text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasilin", description=__doc__.splitlines()[0])
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./quasilin_out)")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("resonance", cmd_resonance, "enumerate K, flags, support classification and A"),
        ("solve", cmd_solve, "full solve; writes solution and report"),
        ("sweep", cmd_sweep, "solves over verify.a_grid x verify.eps_list; CSV"),
        ("measure", cmd_measure, "Monte-Carlo estimate of the excluded set; CSV"),
        ("verify", cmd_verify, "solve and run the quantitative checks"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("check-rho", help="finite Diophantine certificate for rho")
    sp.add_argument("--rho", required=True)
    sp.add_argument("--tau", type=float, default=2.0)
    sp.add_argument("--max-m", type=int, default=1000)
    sp.add_argument("--gamma-floor", type=float, default=1e-3)
    sp.set_defaults(func=cmd_check_rho)
    sp = sub.add_parser("search", help="scan small integer bases for resonance structure")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--b", type=int, required=True)
    sp.add_argument("--radius", type=int, default=1)
    sp.add_argument("--want", choices=sorted(WANTS), default="k2-nonempty")
    sp.add_argument("--limit", type=int, default=20)
    sp.set_defaults(func=cmd_search)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.out or os.environ.get(OUT_ENV) or "quasilin_out")
    run = Run(out, args.command)
    try:
        code = args.func(args, run)
        run.finish("ok", code)
        return code
    except QuasilinError as exc:
        sys.stderr.write(f"quasilin {args.command}: {exc.outcome}: {exc}\n")
        run.finish(exc.outcome, exc.exit_code)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        sys.stderr.write(f"quasilin {args.command}: usage error: {exc}\n")
        run.finish("usage-error", 2)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
