import time

import pytest

from nestcpfsk.codesearch import (
    CatastrophicCodeError, _dfree_dijkstra, _dfree_viterbi, free_distance, search_codes, weight_spectrum,
)
from nestcpfsk.convcode import is_catastrophic, parse_generator, rows_linearly_independent

from test_convcode import REFERENCE_CODES

G1_RATIOS = ["1/1", "0/0", "0/0", "4/2", "3/1", "4/1", "14/4"]
G2_RATIOS = ["1/1", "0/0", "4/2", "0/0", "12/4", "0/0", "32/8"]
STACK_RATIOS = ["5/3", "45/11", "218/39", "949/135", "4518/519", "19355/1902", "81065/6875"]


@pytest.mark.parametrize("text, d", list(zip(REFERENCE_CODES, [5, 8, 6, 8])))
def test_reference_free_distances(text, d):
    G = parse_generator(text, m=2)
    assert free_distance(G) == d
    assert _dfree_dijkstra(G.trellis) == _dfree_viterbi(G.trellis)


@pytest.mark.parametrize("text, ratios, d", [("6,5,1", G1_RATIOS, 5), ("7,2,5", G2_RATIOS, 6),
                                             ("6,5,1;7,2,5", STACK_RATIOS, 5)])
def test_reference_spectra(text, ratios, d):
    spec = weight_spectrum(parse_generator(text, m=2), 6)
    assert spec.d_free == d
    assert spec.ratios() == ratios


def test_spectrum_invariants():
    spec = weight_spectrum(parse_generator("6,5,1;7,2,5", m=2), 6)
    assert spec.a[0] >= 1
    for a, c in zip(spec.a, spec.c):
        assert (a == 0) == (c == 0)
        assert c >= a


def test_dfree_consistent_with_spectrum():
    for text in ["7,5", "6,5,1", "7,2,5", "5,7,3"]:
        G = parse_generator(text, m=2)
        spec = weight_spectrum(G, 0)
        assert spec.a[0] > 0 and spec.d_free == free_distance(G)


def test_catastrophic_rejected():
    with pytest.raises(CatastrophicCodeError):
        free_distance(parse_generator("6,5", m=2))


def test_reference_rows_non_catastrophic():
    for text in REFERENCE_CODES:
        G = parse_generator(text, m=2)
        assert not is_catastrophic(G)
        for r in G.rows:
            assert not is_catastrophic(parse_generator(
                [format(int("".join(map(str, p)), 2), "o") for p in r], m=2))


def test_search_rate_half_memory_one():
    found = search_codes(1, 2, 1, top_count=3)
    assert free_distance(found[0]) == 3
    assert all(not is_catastrophic(G) for G in found)


@pytest.mark.slow
def test_search_rate_two_thirds():
    t0 = time.time()
    found = search_codes(2, 3, 2, top_count=5)
    assert free_distance(found[0]) == 5
    for G in found:
        assert not is_catastrophic(G) and rows_linearly_independent(list(G.rows))
    assert len({G for G in found}) == len(found)
    assert time.time() - t0 < 120
