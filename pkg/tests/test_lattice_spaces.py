import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasilin.errors import InvalidBasis
from quasilin.lattice_spaces import (
    Basis,
    NormParams,
    SpectralVector,
    embed_mode,
    gram_min_eigen,
    int_det,
    project,
    weighted_norm,
)
from quasilin.nonlinearity import product
from quasilin.resonance import enumerate_resonant


def test_embed_mode(t2, t3):
    assert embed_mode(t2, (1, 1)) == (1, 1)
    assert embed_mode(t3, (1, 1, -1)) == (1, 1, 1)
    assert embed_mode(t3, (0, 0, 0)) == (0, 0, 0)
    with pytest.raises(ValueError):
        embed_mode(t2, (1, 0, 0))


def test_gram_min_eigen(t2, t3, t4):
    assert gram_min_eigen(t4) == pytest.approx(1.0)
    assert gram_min_eigen(t2) == pytest.approx(1.0)
    assert gram_min_eigen(t3) == pytest.approx(2 - math.sqrt(3), rel=1e-12)


@pytest.mark.parametrize("n, msg", [
    (((1, 0), (2, 0)), "singular"),
    (((1, 0), (0, 1), (1, 1)), "exceeds"),
    (((0, 0), (0, 1)), "nonzero"),
    (((1, 0), (0, 1, 0)), "dimension"),
    ((), "at least one"),
])
def test_basis_rejects(n, msg):
    with pytest.raises(InvalidBasis, match=msg):
        Basis(n)


def test_int_det_matches_numpy():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = rng.integers(-4, 5, size=(4, 4))
        assert int_det(m.tolist()) == round(np.linalg.det(m))


def test_weighted_norm_examples():
    p = NormParams(0.1, 1.0, 1.0)
    assert weighted_norm(SpectralVector.zeros(2, 3), p) == 0.0
    u = SpectralVector.from_modes(2, 3, {(1, 0): 1.0})
    assert weighted_norm(u, p) == pytest.approx(math.exp(0.1))
    u = SpectralVector.from_modes(2, 3, {(1, 0): 1.0, (1, 1): 2.0})
    assert weighted_norm(u, NormParams(0.0, 1.0, 1.0)) == pytest.approx(3.0)


def test_norm_params_validation():
    with pytest.raises(ValueError):
        NormParams.default(2, sigma=0.0)
    with pytest.raises(ValueError):
        NormParams.default(2, s=1.0)
    p = NormParams.default(3)
    assert p.s == 2.5 and p.sigma == 0.5


def test_project(t2):
    R = enumerate_resonant(t2)
    u = SpectralVector.from_modes(2, 3, {(1, 0): 2.0})
    assert weighted_norm(project(u, R, "P"), NormParams.default(2)) == 0
    assert project(u, R, "Q").allclose(u)
    w = SpectralVector.from_modes(2, 3, {(2, 0): 1.0})
    assert not np.any(project(w, R, "Q").coeffs)
    with pytest.raises(ValueError):
        project(u, R, "X")


def test_spectral_vector_basics():
    u = SpectralVector.from_modes(2, 3, {(1, 0): 1.0, (-1, 2): 1j})
    assert not u.is_real
    assert u.support() == [(-1, 2), (1, 0)]
    c = u.reflect_conj()
    assert c.get((1, -2)) == -1j and c.get((-1, 0)) == 1.0
    assert u.resized(5).resized(3).allclose(u)
    # entries outside the Euclidean ball are never stored
    with pytest.raises(ValueError):
        SpectralVector.from_modes(2, 3, {(3, 3): 1.0})
    assert (u - u).support() == []


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_submultiplicative(b, seed):
    rng = np.random.default_rng(seed)
    r = 2 if b == 3 else 3
    p = NormParams.default(b)
    shape = (2 * r + 1,) * b
    u = SpectralVector(rng.normal(size=shape) * rng.random(shape) ** 3, r)
    v = SpectralVector(rng.normal(size=shape), r)
    uv = product([u, v], 2 * r)
    assert weighted_norm(uv, p) <= weighted_norm(u, p) * weighted_norm(v, p)
