import numpy as np
import pytest
from hypothesis import given, strategies as st

from novikov import quantum as qm
from novikov.flow import TraceLimits, trace
from novikov.lattice import preset


def test_circle_area(free):
    for r in (0.5, 1.0, 2.0):
        tr = trace(free, r * r / 2, [0, 0, 1], np.array([r, 0, 0]), TraceLimits(max_len=20.0), origin=np.zeros(3))
        area, _ = qm.orbit_area(tr)
        assert area == pytest.approx(np.pi * r * r, rel=1e-4)


def test_pocket_area_pixel_count(tb):
    tr = qm.orbit_around(tb, 2.5, [0, 0, 1], np.zeros(3))
    area, kind = qm.orbit_area(tr)
    n = 2000
    xs = (np.arange(n) + 0.5) / n * 2 * np.pi - np.pi
    U, V = np.meshgrid(xs, xs)
    pix = np.count_nonzero(np.cos(U) + np.cos(V) > 1.5) * (2 * np.pi / n) ** 2
    assert area == pytest.approx(pix, rel=1e-2)
    assert kind.value == "HoleLike"


def test_degenerate_polyline():
    with pytest.raises(ValueError):
        qm.polyline_area(np.array([[0.0, 0.0], [1.0, 1.0]]))


def test_linear_toy_inversion():
    eps = np.linspace(0.1, 10, 50)
    B = 0.05
    ls = qm.quantize(eps, np.pi * eps, B, (1, 60))
    assert np.allclose(ls.eps, qm.flux_quantum(B) * (ls.n + 0.5) / np.pi, atol=1e-12)


def test_quantize_range_error():
    eps = np.linspace(0.1, 1, 10)
    with pytest.raises(qm.QuantumRangeError):
        qm.quantize(eps, np.pi * eps, 1.0, (0, 50))


def test_spacing_matches_derivative(tb):
    eps = np.linspace(-2.95, -2.0, 40)
    tab = qm.tabulate_areas(tb, [0, 0, 1], eps, [0.0], center=np.full(3, np.pi))
    S, T = tab.area[:, 0], tab.period[:, 0]
    # period is dS/deps in reduced units: check against finite differences
    fd = np.gradient(S, eps)
    assert np.allclose(fd[2:-2], T[2:-2], rtol=2e-2)
    B = 0.01
    ls = qm.quantize(eps, S, B, (5, 40))
    d_eps = np.diff(ls.eps)
    mid = 0.5 * (ls.eps[1:] + ls.eps[:-1])
    assert np.allclose(d_eps, qm.level_spacing(np.interp(mid, eps, T), B), rtol=2e-2)
    # re-deriving the areas from the levels reproduces the flux rule
    assert np.allclose(np.interp(ls.eps, eps, S), qm.flux_quantum(B) * (ls.n + 0.5), rtol=1e-3)


def test_area_monotone_along_family(tb):
    eps = np.linspace(-2.9, -1.1, 12)
    S = qm.tabulate_areas(tb, [0, 0, 1], eps, [0.0], center=np.full(3, np.pi)).area[:, 0]
    assert np.all(np.isfinite(S)) and np.all(np.diff(S) > 0)


def test_extremal_sphere(free):
    pz = np.linspace(-0.8, 0.8, 9)
    tab = qm.tabulate_areas(free, [0, 0, 1], [0.5], pz)
    ext = qm.find_extremal_orbits(pz, tab.area[0])
    assert len(ext) == 1 and ext[0] == pytest.approx(0.0, abs=1e-9)


def test_extremal_corrugated_symmetry_planes(corrugated):
    # electron-side pockets exist only near p3 = 0, hole-side only near p3 = pi
    pz = np.linspace(-0.9, 0.9, 19)
    for level, center in ((1.05, np.zeros(3)), (-1.05, np.full(3, np.pi))):
        tab = qm.tabulate_areas(corrugated, [0, 0, 1], [level], pz, center=center)
        ext = qm.find_extremal_orbits(pz, tab.area[0])
        assert len(ext) == 1 and ext[0] == pytest.approx(0.0, abs=1e-6)


def test_extremal_monotone_empty():
    assert qm.find_extremal_orbits(np.linspace(0, 1, 7), np.linspace(1, 2, 7)) == []


def test_tau_eff_values():
    assert qm.tau_eff(10, 10) == pytest.approx(5)
    assert qm.tau_eff(2, 3) == pytest.approx(1.2)
    assert qm.tau_eff(7.0, 1e12) == pytest.approx(7.0, rel=1e-10)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_tau_eff_bounds(t, t1):
    te = qm.tau_eff(t, t1)
    assert te <= min(t, t1) * (1 + 1e-12)
    assert qm.tau_eff(t, 2 * t1) >= te


def test_gaps_far_from_saddle(tb):
    assert qm.breakdown_gaps(tb, 2.5, [0, 0, 1], np.zeros(3)) == []


def test_gap_sqrt_scaling(tb):
    g = []
    for off in (0.04, 0.01, 0.0025):
        gaps = qm.breakdown_gaps(tb, 1.0 + off, [0, 0, 1], np.zeros(3))
        assert gaps
        g.append(min(x.gap for x in gaps))
    g = np.array(g) / g[1]
    assert np.allclose(g, [2.0, 1.0, 0.5], rtol=0.1)


def test_symmetric_saddle_halves(tb):
    for gap in qm.breakdown_gaps(tb, 1.01, [0, 0, 1], np.zeros(3)):
        assert gap.halves[0] == pytest.approx(gap.halves[1], abs=1e-6)


def test_breakdown_limits(tb):
    gap = qm.breakdown_gaps(tb, 1.01, [0, 0, 1], np.zeros(3))[0]
    m = qm.BreakdownModel.from_gap(10.0, 2.0, gap)
    assert m.probability(1e-6) < 1e-12 and m.probability(1e9) == pytest.approx(0.5, rel=1e-6)
    assert m.tau_eff(1e-6) == pytest.approx(10.0)
    assert m.tau_eff(1.0) <= 10.0
