import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from novikov.lattice import (DegenerateLatticeError, DirectLattice, Dispersion, Term, UnknownPresetError,
                             dispersion_from_dict, dispersion_to_dict, evaluate, fourier_series, preset,
                             reciprocal_basis)

TWO_PI = 2 * np.pi
vec = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3)


def test_unit_cube_reciprocal():
    R = reciprocal_basis(DirectLattice())
    assert np.allclose(R.matrix, TWO_PI * np.eye(3), atol=1e-14)


def test_sheared_reciprocal():
    R = reciprocal_basis(DirectLattice((1, 0, 0), (1, 1, 0), (0, 0, 1)))
    # hand-worked: a_i . l_j = 2 pi delta_ij
    assert np.allclose(R.a1, TWO_PI * np.array([1, -1, 0]))
    assert np.allclose(R.a2, TWO_PI * np.array([0, 1, 0]))
    assert np.allclose(R.a3, TWO_PI * np.array([0, 0, 1]))


@given(vec, vec, vec)
def test_duality_property(l1, l2, l3):
    L = np.array([l1, l2, l3])
    assume(abs(np.linalg.det(L)) > 1e-2)
    R = reciprocal_basis(DirectLattice(l1, l2, l3))
    assert np.allclose(R.matrix @ L.T, TWO_PI * np.eye(3), atol=1e-12 * max(1, np.abs(R.matrix).max()))


def test_degenerate_rejected():
    with pytest.raises(DegenerateLatticeError):
        DirectLattice((1, 0, 0), (2, 0, 0), (0, 0, 1))


def test_tight_binding_values(tb):
    e, g = evaluate(tb, np.zeros(3))
    assert e == pytest.approx(3.0)
    assert np.allclose(g, 0)
    e, g = evaluate(tb, [np.pi / 2, 0, 0])
    assert e == pytest.approx(2.0)
    assert np.allclose(g, [-1, 0, 0])


def test_gradient_finite_difference(tb, rng):
    d = preset("tsarev_like")
    for disp in (tb, d, preset("corrugated_cylinder")):
        for p in rng.uniform(-4, 4, (20, 3)):
            g = evaluate(disp, p)[1]
            h = 1e-6
            fd = np.array([(disp(p + h * e) - disp(p - h * e)) / (2 * h) for e in np.eye(3)])
            assert np.allclose(g, fd, rtol=1e-6, atol=1e-7)


@given(vec, st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3))
def test_periodicity_property(p, m1, m2, m3):
    d = preset("corrugated_cylinder", delta=0.3)
    shift = reciprocal_basis(d.lattice).vector((m1, m2, m3))
    assert evaluate(d, np.add(p, shift))[0] == pytest.approx(evaluate(d, p)[0], abs=1e-12)


def test_presets(tb):
    assert len(tb.terms) == 3
    assert tb.eps_min == pytest.approx(-3.0, abs=1e-9)
    assert tb.eps_max == pytest.approx(3.0, abs=1e-9)
    c = preset("corrugated_cylinder", delta=0.1)
    p = np.array([0.3, -1.2, 2.0])
    assert c(p) == pytest.approx(np.cos(0.3) + 0.1 * (np.cos(-1.2) + np.cos(2.0)))
    fe = preset("free_electron")
    assert not fe.periodic and fe(np.array([1.0, 2.0, 0.0])) == pytest.approx(2.5)
    with pytest.raises(UnknownPresetError):
        preset("nope")


@given(vec)
def test_bounds_property(p):
    d = preset("tsarev_like")
    assert d.eps_min - 1e-9 <= d(np.asarray(p)) <= d.eps_max + 1e-9


def test_fourier_series_roundtrip():
    d = fourier_series(lambda a, b, c: np.cos(a) + 0.5 * np.cos(b - 0.3) + 0.2 * np.cos(a + c), shape=(8, 8, 8))
    p = np.array([0.4, 1.1, -0.7])
    assert d(p) == pytest.approx(np.cos(0.4) + 0.5 * np.cos(1.1 - 0.3) + 0.2 * np.cos(0.4 - 0.7), abs=1e-12)


def test_dict_roundtrip():
    d = Dispersion((Term((1, 0, 0), 1.0, 0.2), ((0, 1, 1), 0.3, 0.0)), DirectLattice((1, 0, 0), (0.5, 1, 0), (0, 0, 2)))
    e = dispersion_from_dict(dispersion_to_dict(d))
    assert e == d and Dispersion.from_json(d.to_json()) == d
