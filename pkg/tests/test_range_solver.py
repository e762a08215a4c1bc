import math

import numpy as np
import pytest

from quasilin.errors import Diverged, DivisorError, NotConverged
from quasilin.lattice_spaces import Basis, NormParams, SpectralVector, mode_grid, resonant_mask, weighted_norm
from quasilin.nonlinearity import HamiltonianSpec
from quasilin.range_solver import audit_divisors, divisor, range_sensitivity, solve_range
from quasilin.resonance import enumerate_resonant

H = HamiltonianSpec.quartic()
RHO = math.sqrt(2) - 1


def v_unit(basis, K, a=None):
    a = a or [1.0] * basis.b
    return SpectralVector.from_modes(basis.b, K, {tuple(int(i == j) for i in range(basis.b)): a[j]
                                                  for j in range(basis.b)})


def test_divisor(t2):
    assert divisor(t2, (1, 0), t2.omega0) == 0.0
    assert divisor(t2, (2, 0), t2.omega0) == pytest.approx(2 - RHO)
    assert divisor(t2, (0, 0), t2.omega0) == pytest.approx(RHO)


def test_audit_t1(t1):
    R = enumerate_resonant(t1)
    a = audit_divisors(t1, t1.omega0, 0.4, 2, 20, R)
    assert a.min_abs_divisor > 0 and a.passes
    assert a.K1_threshold == pytest.approx((1 + 2 * RHO) / 1)


def test_audit_reports_large_k_counterexample(t2):
    a = audit_divisors(t2, t2.omega0, 0.4, 2, 8, enumerate_resonant(t2))
    assert a.passes
    assert (2, 0) in a.large_k_violations
    assert all(math.hypot(*k) < a.K1_sufficient for k in a.large_k_violations)


def test_audit_zero_divisor():
    basis = Basis(((1, 0), (0, 1)), rho=0.0)
    with pytest.raises(DivisorError):
        audit_divisors(basis, basis.omega0, 0.4, 2, 4, enumerate_resonant(basis))


def test_single_mode_gives_zero(t1):
    R = enumerate_resonant(t1)
    s = solve_range(t1, v_unit(t1, 8), t1.omega0, 1e-2, H, 8, R=R)
    assert not np.any(s.u.coeffs) and s.fp_residual == 0.0
    s0 = solve_range(t1, SpectralVector.zeros(1, 8), t1.omega0, 1e-2, H, 8, R=R)
    assert not np.any(s0.u.coeffs)


def test_t2_invariants_and_scaling(t2):
    R = enumerate_resonant(t2)
    p = NormParams.default(2)
    ratios = []
    for eps in (1e-2, 5e-3):
        s = solve_range(t2, v_unit(t2, 8), t2.omega0, eps, H, 8, 1e-13, R=R)
        assert s.fp_residual <= 1e-13
        assert s.u.coeffs.dtype.kind == "f"
        assert not np.any(s.u.coeffs[resonant_mask(R.all, 2, 8)])
        assert all(q <= 0.5 for q in s.contraction_history)
        ratios.append(weighted_norm(s.u, p) / eps ** 2)
    assert 0.5 < ratios[0] / ratios[1] < 2
    # the support of u stays on the gauge plane sum k = 1
    assert all(sum(k) == 1 for k in s.u.support())


def test_divergence_and_iteration_limit(t2):
    R = enumerate_resonant(t2)
    with pytest.raises(Diverged):
        solve_range(t2, v_unit(t2, 8), t2.omega0, 0.3, H, 8, R=R)
    with pytest.raises(NotConverged):
        solve_range(t2, v_unit(t2, 8), t2.omega0, 0.05, H, 8, 1e-30, max_iter=2, R=R)


def test_sensitivity(t1, t2):
    s = range_sensitivity(t1, v_unit(t1, 6), t1.omega0, 1e-2, H, 6, R=enumerate_resonant(t1))
    assert max(s["d_omega_norms"]) == 0 and max(s["d_amplitude_norms"].values()) == 0
    R = enumerate_resonant(t2)
    s = range_sensitivity(t2, v_unit(t2, 6), t2.omega0, 1e-2, H, 6, R=R)
    d = list(s["d_amplitude_norms"].values())
    assert abs(d[0] - d[1]) <= 1e-8 * max(d)
    assert np.all(np.isfinite(s["d_omega_norms"]))
