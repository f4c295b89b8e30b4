import numpy as np
import pytest
from hypothesis import given, strategies as st

from novikov.classify import (Kind, NoIntegralPlaneError, classify, integral_plane, irreducible_vectors,
                              normalize_triple, recover_quantum_numbers, strip_fit)
from novikov.flow import TraceLimits, detect_closure, seed_section, trace
from novikov.lattice import DirectLattice, preset, tsarev_field

B_ZONE = np.array([0.1 * np.sqrt(2), 0.1 * np.sqrt(3), 1.0])
B_ZONE = B_ZONE / np.linalg.norm(B_ZONE)


def _open_traces(d, b, n=3, cells=100):
    cell = d.reciprocal.cell_diameter
    seeds = seed_section(d, 0.0, b, np.array([0.2, 0.1, 0.3]), n)
    return [trace(d, 0.0, b, s, TraceLimits(max_len=cells * cell, max_steps=10_000_000)) for s in seeds]


@pytest.fixture(scope="module")
def zone_traces(corrugated):
    return _open_traces(corrugated, B_ZONE)


def test_closed_passthrough(tb):
    tr = trace(tb, 0.5, [0, 0, 1], np.array([np.pi / 3, np.pi, 0.0]), TraceLimits(max_len=40.0), origin=np.zeros(3))
    assert classify(tr, detect_closure(tr)).kind == Kind.Closed


def test_regular_open_strip(zone_traces, corrugated):
    cell = corrugated.reciprocal.cell_diameter
    for tr in zone_traces:
        tc = classify(tr, detect_closure(tr))
        assert tc.kind == Kind.RegularOpen
        assert tc.strip_width < cell
        # measured directly on the polyline
        perp = np.array([-tc.mean_dir[1], tc.mean_dir[0]])
        assert np.ptp(tr.uv @ perp) == pytest.approx(tc.strip_width, rel=0.05)


def test_topological_resonance(zone_traces):
    dirs = [classify(tr, detect_closure(tr)).mean_dir3 for tr in zone_traces]
    for d in dirs[1:]:
        assert np.arccos(min(1.0, abs(d @ dirs[0]))) < 1e-3


def test_width_stable_under_doubling(corrugated):
    b = B_ZONE
    s = seed_section(corrugated, 0.0, b, np.zeros(3), 1)[0]
    cell = corrugated.reciprocal.cell_diameter
    w = [strip_fit(trace(corrugated, 0.0, b, s, TraceLimits(max_len=L * cell)).uv)[1] for L in (100, 200)]
    assert w[1] <= 1.05 * w[0]


def test_tsarev_directed():
    d = preset("tsarev_like")
    b = tsarev_field()
    cell = d.reciprocal.cell_diameter
    seeds = seed_section(d, 0.0, b, np.array([0.1, 0.2, 0.3]), 2)
    for s in seeds:
        tr = trace(d, 0.0, b, s, TraceLimits(max_len=400 * cell, max_steps=50_000_000))
        assert classify(tr, detect_closure(tr)).kind == Kind.ChaoticDirected


def test_strip_fit_line_and_sinusoid():
    t = np.linspace(0, 10, 100)
    d, w = strip_fit(np.column_stack([t, t]) / np.sqrt(2))
    assert np.allclose(d, [1 / np.sqrt(2)] * 2) and w == pytest.approx(0, abs=1e-12)
    u = np.linspace(0, 100, 20001)
    d, w = strip_fit(np.column_stack([u, np.sin(u)]))
    assert np.allclose(d, [1, 0], atol=1e-6) and w == pytest.approx(2.0, abs=1e-6)


def test_periodic_direction_parallel_to_q(corrugated):
    tr = trace(corrugated, 0.0, [0, 0, 1], seed_section(corrugated, 0.0, [0, 0, 1], np.array([0, 0, 0.4]), 1)[0],
               TraceLimits(max_len=60.0))
    tc = classify(tr, detect_closure(tr))
    assert tc.kind == Kind.PeriodicOpen
    q = np.asarray(tc.q) / np.linalg.norm(tc.q)
    assert np.linalg.norm(np.cross(tc.mean_dir3, q)) < 1e-6


def _records_for(n, bs):
    n = np.asarray(n, float)
    return [(b, np.cross(b, n)) for b in bs]


BS = [np.array(v) / np.linalg.norm(v) for v in ([0.3, 0.1, 1.0], [0.1, -0.4, 1.0], [0.7, 0.2, 0.5])]


def test_planted_inverse_exact():
    qn, plane = recover_quantum_numbers(_records_for([0, 1, 1], BS), DirectLattice(), 8)
    assert qn.M == (0, 1, 1) and qn.residual < 1e-10
    n = np.asarray(plane.normal)
    for v in plane.span:
        assert abs(n @ np.asarray(v)) < 1e-10


def test_single_record_rejected():
    with pytest.raises(ValueError):
        recover_quantum_numbers(_records_for([0, 1, 1], BS[:1]))


def test_no_plane_raises():
    recs = [(BS[0], np.cross(BS[0], [0, 1, 1])), (BS[1], np.cross(BS[1], [1, 0, 0]))]
    with pytest.raises(NoIntegralPlaneError):
        recover_quantum_numbers(recs, m_max=3, theta_tol=1e-4)


def test_zone_pair_stable_across_mmax(corrugated):
    b2 = np.array([0.15, 0.1 * np.sqrt(2), 1.0])
    b2 = b2 / np.linalg.norm(b2)
    recs = []
    for b in (B_ZONE, b2):
        tr = _open_traces(corrugated, b, 1)[0]
        recs.append((b, classify(tr, detect_closure(tr)).mean_dir3))
    Ms = {recover_quantum_numbers(recs, m_max=m)[0].M for m in (4, 8)}
    assert Ms == {(1, 0, 0)}


triples = st.tuples(*[st.integers(-9, 9)] * 3).filter(lambda m: any(m))


@given(triples)
def test_normalize_triple_property(m):
    n = normalize_triple(m)
    g = np.gcd.reduce(np.abs(n))
    assert g == 1
    assert next(x for x in n if x != 0) > 0
    # same line as the input
    assert np.linalg.norm(np.cross(n, m)) == pytest.approx(0, abs=1e-9)


@given(st.permutations(range(3)), st.sampled_from([(0, 1, 1), (1, 0, 0), (1, -2, 1), (2, 1, 3)]))
def test_recovery_invariant_under_relabeling(perm, M):
    recs = _records_for(M, BS)
    qn = recover_quantum_numbers([recs[i] for i in perm])[0]
    assert qn.M == normalize_triple(M)


def test_irreducible_vectors_unique():
    V = irreducible_vectors(3)
    assert len({tuple(v) for v in V}) == len(V)
    assert all(normalize_triple(v) == tuple(v) for v in V)


@given(triples)
def test_integral_plane_property(M):
    pl = integral_plane(normalize_triple(M), DirectLattice((1, 0, 0), (0.5, 1, 0), (0, 0.3, 1)))
    n = np.asarray(pl.normal)
    assert abs(np.linalg.norm(n) - 1) < 1e-12
    for v in pl.span:
        assert abs(n @ np.asarray(v)) < 1e-10 * max(1, np.linalg.norm(v))
