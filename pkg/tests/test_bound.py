import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nestcpfsk.bound import (
    BoundDivergence, bound_curve, bound_pbd, build_product_graph, default_caps, distance_weights,
    enumerate_error_events, enumeration_tail_bound, eval_transfer_function, min_nsed, overall_pb, q_function,
    truncated_transfer_function, uplink_pb,
)
from nestcpfsk.cpfsk import CpfskParams, modulate
from nestcpfsk.supertrellis import build_super_trellis, code_symbols


@pytest.fixture(scope="module")
def g1_graph(g1, msk):
    return build_product_graph(build_super_trellis(g1, msk))


def brute_force_dmin(st, steps):
    """Smallest distance between distinct terminated inputs that end in the same phase."""
    p = st.params
    seqs = np.array(list(itertools.product((0, 1), repeat=steps * st.k)), np.uint8)
    syms = np.stack([code_symbols(st, s) for s in seqs])
    wave = modulate(p, syms)
    end = syms.sum(axis=1) % p.P
    best = math.inf
    for i in range(len(seqs) - 1):
        d = p.dt * np.sum(np.abs(wave[i + 1:] - wave[i]) ** 2, axis=1) / (4 * p.Es)
        same = end[i + 1:] == end[i]
        if same.any():
            best = min(best, d[same].min())
    return best


def test_q_function():
    assert q_function(0.0) == 0.5
    for x in (0.3, 1.7, 4.0):
        assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-15)
    exact, _ = quad(lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi), 1.0, np.inf, epsabs=1e-14)
    assert abs(q_function(1.0) - exact) < 1e-9
    assert q_function(1.0) == pytest.approx(0.158655253931457, abs=1e-12)
    for x in np.linspace(0.5, 8, 6):
        ref, _ = quad(lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi), x, np.inf, epsabs=0, epsrel=1e-13)
        assert q_function(x) == pytest.approx(ref, rel=1e-12)


def test_uncoded_msk_distance():
    p = CpfskParams(ns=64)
    assert min_nsed(build_super_trellis(None, p)) == pytest.approx(2.0, abs=1e-6)


def test_graph_shape(g1_graph, stack_graph):
    assert g1_graph.num_states == 32
    assert len(g1_graph.initial_states) == 4
    assert stack_graph.num_states == 512
    assert len(stack_graph.initial_states) == 16
    assert np.all(stack_graph.dd2 >= 0)
    same = ~stack_graph.diverging
    # identical hypotheses from the same product state add nothing
    zero_diff = same & (stack_graph.dtau == 0)
    assert np.all(stack_graph.dtau[same] == 0)
    assert np.any(stack_graph.dd2[zero_diff] == 0)


def test_min_nsed_matches_brute_force(g1_graph, stack_graph, stack_trellis, g1, msk):
    assert min_nsed(g1_graph) == pytest.approx(brute_force_dmin(build_super_trellis(g1, msk), 5))
    assert min_nsed(stack_graph) == pytest.approx(brute_force_dmin(stack_trellis, 4))
    uncoded = min_nsed(build_super_trellis(None, msk))
    assert min_nsed(stack_graph) >= uncoded and min_nsed(g1_graph) >= uncoded


def test_min_nsed_matches_enumeration(stack_graph):
    terms = enumerate_error_events(stack_graph, min_nsed(stack_graph) + 4, 20)
    assert min(t.d2 for t in terms) == pytest.approx(min_nsed(stack_graph))
    assert all(t.count >= 1 and t.tau >= 1 for t in terms)


def test_transfer_function_at_zero(stack_graph):
    assert eval_transfer_function(stack_graph, 0.25, 1.0, 0.0) == (0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.3), st.floats(0.0, 0.3))
def test_transfer_function_monotone_in_zeta(z1, z2):
    from nestcpfsk.convcode import parse_generator

    graph = _graph_cache(parse_generator("6,5,1", m=2))
    lo, hi = sorted((z1, z2))
    assert eval_transfer_function(graph, 0.5, 1.0, lo)[0] <= eval_transfer_function(graph, 0.5, 1.0, hi)[0]


_GRAPHS = {}


def _graph_cache(G):
    if G not in _GRAPHS:
        _GRAPHS[G] = build_product_graph(build_super_trellis(G))
    return _GRAPHS[G]


def test_transfer_function_matches_enumeration(g1_graph):
    eta, zeta = 0.5, math.exp(-1)
    d2_cap, length_cap = default_caps(g1_graph)
    F, dF = eval_transfer_function(g1_graph, eta, 1.0, zeta)
    Ft, dFt = truncated_transfer_function(g1_graph, enumerate_error_events(g1_graph, d2_cap, length_cap),
                                          eta, 1.0, zeta)
    tail, dtail = enumeration_tail_bound(g1_graph, eta, zeta, d2_cap, length_cap)
    assert 0 <= F - Ft <= 1e-6 * F + tail
    assert 0 <= dF - dFt <= 1e-6 * dF + dtail


def test_divergence_reported(stack_graph):
    with pytest.raises(BoundDivergence) as err:
        eval_transfer_function(stack_graph, 0.5, 1.0, math.exp(-1))
    assert err.value.radius >= 1
    curve = bound_curve(stack_graph, [2.0, 6.0])
    assert not curve[0].converged and curve[0].pbd_eq18 is None
    assert curve[1].converged


def test_dominant_weight_extraction(stack_graph):
    dmin = min_nsed(stack_graph)
    W = distance_weights(stack_graph, enumerate_error_events(stack_graph, *default_caps(stack_graph)))
    z = math.exp(-12)
    _, dF = eval_transfer_function(stack_graph, 2.0 ** -stack_graph.k, 1.0, z)
    assert dF / z ** dmin == pytest.approx(W[min(W)], rel=1e-6)
    # log-slope of dF recovers dmin
    _, dF2 = eval_transfer_function(stack_graph, 2.0 ** -stack_graph.k, 1.0, z * math.exp(-0.01))
    assert (math.log(dF) - math.log(dF2)) / 0.01 == pytest.approx(dmin, rel=1e-4)


def test_bound_modes(stack_graph):
    r = stack_graph.trellis.rate
    ebn0 = [10 ** (db / 10) for db in (4, 6, 8, 10)]
    for mode in ("closed-form", "spectrum"):
        vals = [bound_pbd(x, r, stack_graph, mode) for x in ebn0]
        assert all(a > b for a, b in zip(vals, vals[1:]))
    six = 10 ** 0.6
    cf = bound_pbd(six, r, stack_graph, "closed-form")
    sp = bound_pbd(six, r, stack_graph, "spectrum")
    assert abs(cf - sp) / sp < 0.2
    dmin = min_nsed(stack_graph)
    W = distance_weights(stack_graph, enumerate_error_events(stack_graph, *default_caps(stack_graph)))
    x = 10 ** 1.0 * r
    leading = W[min(W)] * q_function(math.sqrt(dmin * x)) / stack_graph.k
    assert leading <= bound_pbd(10 ** 1.0, r, stack_graph, "closed-form")
    with pytest.raises(ValueError):
        bound_pbd(six, r, stack_graph, "nonsense")


def test_uplink_and_overall():
    assert uplink_pb([3.0], [1.0]) == pytest.approx(float(q_function(math.sqrt(3.0))))
    p = float(q_function(math.sqrt(0.5 * 2.0)))
    assert uplink_pb([2.0, 2.0], [0.5, 0.5]) == pytest.approx(1 - (1 - p) ** 2)
    assert uplink_pb([1e6], [1.0]) == 0.0
    assert overall_pb(0.0, 0.3) == 0.3
    assert overall_pb(1.0, 1.0) == 1.0
    assert overall_pb(0.1, 0.2) == pytest.approx(0.28)
    with pytest.raises(ValueError):
        overall_pb(1.2, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(3.0, 12.0), st.floats(0.1, 2.0), st.floats(-2.0, 12.0), st.floats(0.1, 2.0))
def test_overall_chain_nonincreasing(db_d, step_d, db_u, step_u):
    from nestcpfsk.convcode import parse_generator

    graph = _graph_cache(parse_generator("6,5,1", m=2))
    r = graph.trellis.rate

    def chain(d, u):
        return overall_pb(uplink_pb([10 ** (u / 10)], [r]), bound_pbd(10 ** (d / 10), r, graph, "spectrum"))

    base = chain(db_d, db_u)
    assert chain(db_d + step_d, db_u) <= base + 1e-15
    assert chain(db_d, db_u + step_u) <= base + 1e-15
