import numpy as np
import pytest
from hypothesis import given, strategies as st
from skimage import measure

from novikov import quasi2d as q2
from novikov.classify import classify
from novikov.flow import TraceLimits, detect_closure, trace
from novikov.quantum import polygon_area

GOLD = (1 + 5 ** 0.5) / 2


def n3_potential():
    return q2.build_superposition(q2.directions_at([0, 120, 240]), [1.0, 2 ** 0.5, GOLD], phases=[0.3, 0.7, 1.1])


def planted_n4():
    u = q2.directions_at([0, 45, 90, 135])
    K = 2 * np.pi / np.array([1.0, GOLD, 3 ** 0.5, 2 ** 0.5])[:, None] * u
    m = np.vstack([[1, -1, 0, 0], np.eye(4, dtype=int)])
    amps = [1.0] + [0.15] * 4
    phases = [0.0, 0.3, 0.7, 1.1, 1.9]
    waves = tuple(q2.Wave(tuple(mm @ K), a, p) for mm, a, p in zip(m, amps, phases))
    return q2.QuasiPotential(waves, K, m)


def test_build_counts():
    assert n3_potential().N == 3
    V4 = q2.build_superposition(q2.directions_at([0, 45, 90, 135]), [1, GOLD, 3 ** 0.5, 2 ** 0.5])
    assert V4.N == 4
    with pytest.raises(ValueError):
        q2.build_superposition(q2.directions_at([0, 60, 180]), 1.0)
    with pytest.raises(ValueError):
        q2.build_superposition(q2.directions_at([0, 60, 120]), 1.0, n_required=4)


def test_dict_roundtrip():
    V = planted_n4()
    W = q2.QuasiPotential.from_dict(V.to_dict())
    assert W.N == 4 and np.allclose(W.k, V.k) and np.array_equal(W.m, V.m)


def test_average_identity_at_zero():
    V = n3_potential()
    assert np.array_equal(q2.cyclotron_average(V, 0.0).amps, V.amps)
    with pytest.raises(ValueError):
        q2.cyclotron_average(V, -0.1)


def test_bessel_zero_annihilates():
    V = n3_potential()
    k0 = np.linalg.norm(V.k[0])
    W = q2.cyclotron_average(V, 2.404825557695773 / k0)
    assert abs(W.amps[0]) < 1e-10
    assert np.all(np.abs(W.amps[1:]) > 1e-3)


def test_average_matches_quadrature():
    V = planted_n4()
    r = np.random.default_rng(3).uniform(-5, 5, (100, 2))
    for rb in (0.05, 0.3):
        direct = q2.circle_average(V, r, rb, n=4096)
        assert np.max(np.abs(direct - q2.cyclotron_average(V, rb)(r))) < 1e-6


@given(st.floats(0.0, 20.0))
def test_average_contracts(rb):
    V = n3_potential()
    assert np.all(np.abs(q2.cyclotron_average(V, rb).amps) <= np.abs(V.amps) + 1e-15)


def test_single_wave_straight_lines():
    V = q2.QuasiPotential(((((2.0, 1.0)), 1.0, 0.4),))
    r0 = q2.project_to_level(V, 0.3, [0.2, 0.1])
    tr = q2.trace_level_line(V, 0.3, r0, TraceLimits(max_len=50.0))
    k = np.array([2.0, 1.0]) / 5 ** 0.5
    assert np.max(np.abs((tr.uv - tr.uv[0]) @ k)) < 1e-9
    assert np.ptp(tr.uv @ np.array([-k[1], k[0]])) > 40


def test_hexagonal_closed_loops():
    V = q2.build_superposition(q2.directions_at([0, 120, 240]), 1.0)
    level = 2.7
    r0 = q2.project_to_level(V, level, [0.05, 0.0])
    tr = q2.trace_level_line(V, level, r0, TraceLimits(max_len=20.0))
    c = q2.classify_level_line(tr, V)
    assert c.kind == "Closed"
    assert np.max(np.abs(V(tr.uv) - level)) < 1e-9
    # grid oracle: the marching-squares contour around the origin
    n = 801
    xs = np.linspace(-0.3, 0.3, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    cont = max(measure.find_contours(V(np.stack([X, Y], -1)), level), key=len)
    cont = xs[0] + cont * (xs[1] - xs[0])
    assert abs(abs(polygon_area(tr.uv)) - abs(polygon_area(cont))) < 1e-2 * abs(polygon_area(cont))


def test_n3_equivalence_with_lift():
    V = n3_potential()
    lift = q2.lift3(V)
    assert np.allclose(lift.dispersion(lift.to_space(np.array([[0.3, -1.2]]))), V(np.array([[0.3, -1.2]])), atol=1e-12)
    for s in np.random.default_rng(1).random((2, 2)):
        r0 = q2.project_to_level(V, 0.0, s)
        tr = q2.trace_level_line(V, 0.0, r0, TraceLimits(max_len=1600.0, max_steps=50_000_000))
        c2 = classify(tr, detect_closure(tr))
        l3 = np.linalg.norm(np.diff(lift.to_space(tr.uv), axis=0), axis=1).sum()
        tr3 = trace(lift.dispersion, 0.0, lift.b, lift.to_space(r0), TraceLimits(max_len=l3, max_steps=50_000_000))
        c3 = classify(tr3, detect_closure(tr3))
        assert c2.kind == c3.kind
        d2 = q2._plane_frame_dir(tr, c2.mean_dir)
        d3 = lift.to_plane_dir(c3.mean_dir3)
        assert np.arccos(min(1.0, abs(d2 @ d3))) < 1e-3


def test_planted_n4_plane_stable_under_averaging():
    V = planted_n4()
    assert V.N == 4
    starts = np.random.default_rng(0).random((3, 2))
    for rb in (0.0, 0.05, 0.1):
        W = q2.cyclotron_average(V, rb)
        for s in starts:
            r0 = q2.project_to_level(W, 0.0, s)
            tr = q2.trace_level_line(W, 0.0, r0, TraceLimits(max_len=340.0))
            c = q2.classify_level_line(tr, W)
            assert c.kind == "RegularOpen"
            assert c.plane == (1, -1, 0, 0)
            assert c.residual < 1e-3


def test_hyperplane_none_found():
    V = planted_n4()
    # a direction not orthogonal to any small integer combination
    d = np.array([np.cos(0.123456), np.sin(0.123456)])
    with pytest.raises(Exception):
        q2.integral_hyperplane(V, d, m_max=1, theta_tol=1e-6)
