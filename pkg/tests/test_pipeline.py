import math

import numpy as np
import pytest

from quasilin.errors import ConfigError, HypothesisRefused
from quasilin.lattice_spaces import Basis, SpectralVector
from quasilin.nonlinearity import HamiltonianSpec
from quasilin.pipeline import (
    SolveConfig,
    export_solution,
    frequency_order_check,
    import_solution,
    pde_residual,
    pde_residual_field,
    solve_full,
    solution_payload,
    sweep,
    sweep_csv,
    to_record,
)

from _oracles import single_mode_frequency

RHO = math.sqrt(2) - 1


def test_t1_exact(t1):
    r = solve_full(SolveConfig(t1, 1e-2))
    assert r.omega[0] == pytest.approx(single_mode_frequency(1, RHO, 1e-2, 1.0), abs=1e-14)
    assert r.residual_norm <= 1e-15
    assert r.persistence["anchor_exact"]
    assert r.full_field.support() == [(1,)]


def test_t2_solution(t2):
    r = solve_full(SolveConfig(t2, 1e-2))
    assert r.residual_norm <= 1e-12
    assert r.persistence["anchor_exact"] and r.persistence["mass_ok"]
    assert pde_residual(r) == pytest.approx(r.residual_norm)
    # reflection k -> (k1, k2) swap is a symmetry for equal amplitudes
    f = r.full_field
    for k, c in f.items():
        assert f.get(k[::-1]) == pytest.approx(c, abs=1e-18)


def test_refuses_bad_rho(t2):
    with pytest.raises(HypothesisRefused):
        solve_full(SolveConfig(t2.with_rho(0.5), 1e-2))
    with pytest.raises(HypothesisRefused):
        solve_full(SolveConfig(t2, 1e-2, a=(0.5, 1.0)))
    b3 = Basis(((1, 1, 1), (0, 0, 1), (-1, 0, 2)))   # K_2 reaches |k|^2 = 17
    with pytest.raises(ConfigError):
        solve_full(SolveConfig(b3, 1e-2, a=(1.0, 1.5, 1.2), K_t=4))


def test_refuses_triple_form(t3):
    with pytest.raises(HypothesisRefused):
        solve_full(SolveConfig(t3, 1e-2))


def test_gauge_shift(t2):
    base = t2.with_rho(0.0)
    r = solve_full(SolveConfig(base, 1e-2, rho_shift=math.sqrt(2)))
    assert r.rho_shift == math.sqrt(2)
    assert abs(r.residual_norm - r.diagnostics["residual_shifted_problem"]) <= 1e-12
    auto = solve_full(SolveConfig(base, 1e-2, rho_shift="auto"))
    assert auto.rho_shift != 0
    bad = HamiltonianSpec.from_extra([[4, 2, 0.1], [2, 4, 0.1]])
    with pytest.raises(HypothesisRefused):
        solve_full(SolveConfig(base, 1e-2, H=bad, rho_shift=math.sqrt(2)))


def test_zero_field_residual(t2):
    z = SpectralVector.zeros(2, 4)
    assert pde_residual_field(z, t2.omega0, t2, HamiltonianSpec.quartic(), 8) == 0.0


def test_export_round_trip(t2, tmp_path):
    r = solve_full(SolveConfig(t2, 1e-2, K_t=4))
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    text = export_solution(r, p1)
    rec = import_solution(p1)
    assert export_solution(rec, p2) == text
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(rec.omega, r.omega)
    assert rec.field.allclose(r.full_field, atol=0)


def test_export_empty_field(t1, tmp_path):
    rec = to_record(solve_full(SolveConfig(t1, 1e-2)))
    rec.field = SpectralVector.zeros(1, 2)
    p = tmp_path / "z.json"
    export_solution(rec, p)
    back = import_solution(p)
    assert back.field.support() == []
    assert solution_payload(back) == p.read_text()


def test_sweep(t2):
    rows = sweep(SolveConfig(t2, 1e-2, K_t=4), [[1.0, 1.0], [0.5, 1.0]], [1e-2])
    assert [r["outcome"] for r in rows] == ["ok", "hypothesis-refused"]
    csv = sweep_csv(rows)
    assert csv.splitlines()[0].startswith("config_hash,eps,a,outcome")
    assert csv == sweep_csv(sweep(SolveConfig(t2, 1e-2, K_t=4), [[1.0, 1.0], [0.5, 1.0]], [1e-2]))


def test_frequency_order(t2):
    rows = frequency_order_check(SolveConfig(t2, 1e-2, sign_convention="paper"), [1e-2, 5e-3, 2.5e-3])
    for row in rows[1:]:
        assert all(4 <= x <= 16 for x in row["ratio"])
    assert all(r["shift_sign_matches_convention"] for r in rows)
    with pytest.raises(ValueError):
        frequency_order_check(SolveConfig(t2, 1e-2), [1e-2, 2e-2, 1e-3])
