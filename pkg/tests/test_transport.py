import numpy as np
import pytest
from hypothesis import given, strategies as st

from novikov import transport as tp
from novikov.lattice import preset

LADDER = [8, 16, 32, 64, 128, 256]


@pytest.fixture(scope="module")
def drude():
    d = preset("free_electron")
    return tp.chambers_ladder(d, 0.5, [0, 0, 1], [0.5, 2.0, 8.0], n_lines=12,
                              box=2.4 * np.eye(3), origin=-1.2 * np.ones(3))


def test_drude_closed_form(drude):
    for T in drude:
        w = T.omega_tau
        s = T.sigma
        assert s[0, 0] == pytest.approx(1 / (1 + w * w), rel=1e-2)
        assert s[1, 1] == pytest.approx(1 / (1 + w * w), rel=1e-2)
        assert s[0, 1] == pytest.approx(w / (1 + w * w), rel=1e-2)
        assert s[1, 0] == pytest.approx(-w / (1 + w * w), rel=1e-2)
        assert s[2, 2] == pytest.approx(1.0, rel=1e-2)


def test_symmetric_part_psd(drude):
    for T in drude:
        assert np.linalg.eigvalsh(T.symmetric).min() > -1e-9


def test_onsager_parity(tb):
    b = np.array([0.3, 0.2, 1.0])
    kw = dict(n_lines=6, axes=tp.default_axes(b / np.linalg.norm(b)))
    sp = tp.chambers_sigma(tb, -1.5, b, 4.0, **kw)
    sm = tp.chambers_sigma(tb, -1.5, -b, 4.0, **kw)
    # same lab axes: the antisymmetric part flips, the symmetric part stays
    scale = np.abs(sp.sigma).max()
    assert np.allclose(sp.symmetric[:2, :2], sm.symmetric[:2, :2], atol=2e-2 * scale)
    assert np.allclose(sp.antisymmetric[:2, :2], -sm.antisymmetric[:2, :2], atol=2e-2 * scale)


def test_invalid_tau(tb):
    with pytest.raises(ValueError):
        tp.chambers_ladder(tb, 0.5, [0, 0, 1], [0.0])


def test_empty_surface(tb):
    with pytest.raises(ValueError):
        tp.chambers_ladder(tb, 3.5, [0, 0, 1], [1.0])


def test_exact_power_law_fit():
    w = np.array(LADDER, float)
    fit = tp.scaling_exponents(w, w ** -2.0)
    assert fit.slope[0, 0] == pytest.approx(-2.0, abs=1e-6)
    assert fit.envelope[0, 0] == pytest.approx(-2.0, abs=1e-6)


def test_oscillatory_envelope():
    w = np.geomspace(8, 8 * 2 ** 12, 60)
    s = (2 + np.sin(np.log(w))) / w
    assert tp.scaling_exponents(w, s).envelope[0, 0] == pytest.approx(-1.0, abs=0.05)


def test_fit_needs_four_points():
    with pytest.raises(ValueError):
        tp.scaling_exponents([1, 2, 3], [1, 1, 1])


@given(st.floats(-3, 1), st.floats(0.1, 10))
def test_fit_scale_invariance(p, c):
    w = np.array(LADDER, float)
    a = tp.scaling_exponents(w, w ** p).slope[0, 0]
    b = tp.scaling_exponents(w, c * w ** p).slope[0, 0]
    assert a == pytest.approx(p, abs=1e-9) and b == pytest.approx(p, abs=1e-9)


@pytest.fixture(scope="module")
def tb_volumes():
    return tp.fermi_volumes(preset("tight_binding"), 0.0, n_strata=16, seed=5)


def test_volume_partition(tb_volumes):
    v = tb_volumes
    se = np.hypot(v.se_minus, v.se_plus)
    assert abs(v.v_minus + v.v_plus - v.cell) < 3 * se
    assert v.cell == pytest.approx((2 * np.pi) ** 3)


def test_half_filling_symmetry(tb_volumes):
    v = tb_volumes
    assert abs(v.v_minus - v.v_plus) < 3 * np.hypot(v.se_minus, v.se_plus)


def test_hall_sign_by_carrier(tb):
    v = tp.fermi_volumes(tb, -2.0, n_strata=8)
    e = tp.hall_volume_sigma(tb, -2.0, 1.0, "Electron", v)[0]
    h = tp.hall_volume_sigma(tb, -2.0, 1.0, "Hole", v)[0]
    assert e > 0 > h


def test_strong_field_hall_pocket(tb):
    # electron pocket at eps = -2: every orbit closed, weight = V_-
    h = tp.strong_field_hall(tb, -2.0, [0, 0, 1], n_lines=12)
    v = tp.fermi_volumes(tb, -2.0, n_strata=16)
    assert h.closed_only
    assert h.v_eff == pytest.approx(v.v_minus, rel=0.05)
    assert h.carrier(v.cell) == "Electron"


def test_corrugated_saturation():
    d = preset("corrugated_cylinder")
    b = np.array([np.sin(0.3), 0.0, np.cos(0.3)])
    T = tp.chambers_ladder(d, 0.0, b, LADDER, n_lines=6)
    fit = tp.scaling_exponents(LADDER, [t.sigma for t in T])
    assert fit.slope[1, 1] == pytest.approx(0.0, abs=0.1)
    sxx = np.array([t.sigma[0, 0] for t in T])
    # x along the open direction: the first row dies off
    assert sxx[-1] / T[-1].sigma[1, 1] < 0.05
    assert np.all(np.diff(sxx) <= 1e-12)


def test_ladder_csv_rows(drude):
    assert tp.ladder_csv(drude).count("\n") == len(drude) + 1
