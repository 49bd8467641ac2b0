"""Free distance, weight spectra and a small exhaustive search for good codes."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from functools import partial

import numpy as np

from .convcode import (
    GeneratorError,
    GeneratorMatrix,
    Trellis,
    is_catastrophic,
    rows_linearly_independent,
)


class CatastrophicCodeError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSpectrum:
    """Error-event spectrum: ``a[i]`` events of output weight ``d_free + i``
    carrying ``c[i]`` information-bit errors in total."""

    d_free: int
    a: tuple[int, ...]
    c: tuple[int, ...]

    def ratios(self) -> list[str]:
        return [f"{c}/{a}" for c, a in zip(self.c, self.a)]


def _check(G: GeneratorMatrix) -> Trellis:
    if is_catastrophic(G):
        raise CatastrophicCodeError(f"{G!r} is catastrophic")
    return G.trellis


def _dfree_dijkstra(tr: Trellis) -> int:
    w = tr.output_weight
    dist = np.full(tr.num_states, np.iinfo(np.int64).max)
    heap = []
    best = np.iinfo(np.int64).max
    for u in range(1, tr.num_inputs):
        s, d = int(tr.next_state[0, u]), int(w[0, u])
        if s == 0:
            best = min(best, d)
        elif d < dist[s]:
            dist[s] = d
            heapq.heappush(heap, (d, s))
    while heap:
        d, s = heapq.heappop(heap)
        if d > dist[s] or d >= best:
            continue
        for u in range(tr.num_inputs):
            ns, nd = int(tr.next_state[s, u]), d + int(w[s, u])
            if ns == 0:
                best = min(best, nd)
            elif nd < dist[ns]:
                dist[ns] = nd
                heapq.heappush(heap, (nd, ns))
    return int(best)


def _dfree_viterbi(tr: Trellis) -> int:
    """Step-by-step minimum-weight relaxation over unmerged paths.

    Stops once every open path is at least as heavy as the best merged one;
    without zero-weight cycles that happens after finitely many steps.
    """
    inf = np.iinfo(np.int64).max // 4
    w = tr.output_weight
    open_ = np.full(tr.num_states, inf)
    best = inf
    for u in range(1, tr.num_inputs):
        s = tr.next_state[0, u]
        if s == 0:
            best = min(best, int(w[0, u]))
        else:
            open_[s] = min(open_[s], w[0, u])
    src = np.repeat(np.arange(tr.num_states), tr.num_inputs)
    dst = tr.next_state.reshape(-1)
    wt = w.reshape(-1)
    while open_.min() < best:
        cand = open_[src] + wt
        merged = cand[dst == 0]
        if merged.size:
            best = min(best, int(merged.min()))
        nxt = np.full(tr.num_states, inf)
        np.minimum.at(nxt, dst, cand)
        nxt[0] = inf
        open_ = np.minimum(nxt, inf)
    return int(best)


def free_distance(G: GeneratorMatrix) -> int:
    """Minimum output weight over error events that leave and re-enter state 0.

    Computed by Dijkstra branch-and-bound and cross-checked against a bounded
    Viterbi relaxation.
    """
    tr = _check(G)
    d = _dfree_dijkstra(tr)
    d2 = _dfree_viterbi(tr)
    if d != d2:
        raise RuntimeError(f"free distance methods disagree: {d} vs {d2}")
    return d


def weight_spectrum(G: GeneratorMatrix, i_max: int) -> WeightSpectrum:
    """Exact ``(a_phi, c_phi)`` for ``phi = d_free .. d_free + i_max``.

    Dynamic programming over (state, accumulated weight); paths are retired on
    reaching state 0 or exceeding the weight cap.  The absence of zero-weight
    cycles guarantees termination.
    """
    if i_max < 0:
        raise ValueError("i_max must be nonnegative")
    tr = _check(G)
    dfree = free_distance(G)
    cap = dfree + i_max
    S, U = tr.num_states, tr.num_inputs
    w = tr.output_weight
    iw = tr.input_weight
    a = np.zeros(cap + 1, dtype=object)
    c = np.zeros(cap + 1, dtype=object)
    count = np.zeros((S, cap + 1), dtype=object)
    insum = np.zeros((S, cap + 1), dtype=object)

    def emit(s, u, n_paths, n_bits, base):
        ns, dw, di = int(tr.next_state[s, u]), int(w[s, u]), int(iw[s, u])
        nw = base + dw
        if nw > cap:
            return None
        if ns == 0:
            a[nw] += n_paths
            c[nw] += n_bits + di * n_paths
            return None
        return ns, nw, n_paths, n_bits + di * n_paths

    nxt_count = np.zeros_like(count)
    nxt_insum = np.zeros_like(insum)
    for u in range(1, U):
        r = emit(0, u, 1, 0, 0)
        if r:
            ns, nw, p, b = r
            nxt_count[ns, nw] += p
            nxt_insum[ns, nw] += b
    count, insum = nxt_count, nxt_insum
    while np.any(count != 0):
        nxt_count = np.zeros_like(count)
        nxt_insum = np.zeros_like(insum)
        for s, wt in zip(*np.nonzero(count != 0)):
            p, b = count[s, wt], insum[s, wt]
            for u in range(U):
                r = emit(s, u, p, b, int(wt))
                if r:
                    ns, nw, pp, bb = r
                    nxt_count[ns, nw] += pp
                    nxt_insum[ns, nw] += bb
        count, insum = nxt_count, nxt_insum
    return WeightSpectrum(
        dfree,
        tuple(int(x) for x in a[dfree:]),
        tuple(int(x) for x in c[dfree:]),
    )


def _canonical_columns(entries: tuple[tuple[int, ...], ...]) -> tuple[tuple[int, ...], ...]:
    """Smallest row-sorted form over all column permutations."""
    n = len(entries[0])
    return min(
        tuple(sorted(tuple(row[p] for p in perm) for row in entries))
        for perm in itertools.permutations(range(n))
    )


def _matrix_from_ints(entries, m: int) -> GeneratorMatrix:
    rows = [[[(v >> (m - d)) & 1 for d in range(m + 1)] for v in row] for row in entries]
    return GeneratorMatrix(np.array(rows, dtype=np.uint8))


def _rank_key(G: GeneratorMatrix):
    spec = weight_spectrum(G, 0)
    return (-spec.d_free, spec.c[0] / spec.a[0], spec.a[0], G.octal_display)


def _row_candidates(n: int, m: int) -> list[tuple[int, ...]]:
    const = 1 << m
    out = []
    for row in itertools.product(range(1 << (m + 1)), repeat=n):
        if any(v & 1 for v in row) and any(v & const for v in row):
            out.append(row)
    return out


def _first_row_block(first, others, k, m):
    found = []
    for rest in others:
        entries = (first,) + rest
        try:
            G = _matrix_from_ints(entries, m)
        except GeneratorError:
            continue
        if not rows_linearly_independent(G) or is_catastrophic(G):
            continue
        found.append((_dfree_dijkstra(G.trellis), G))
    return found


def search_codes(k: int, n: int, m: int, top_count: int = 10,
                 workers: int = 1) -> list[GeneratorMatrix]:
    """Exhaustive search over k x n generators whose rows all have degree ``m``.

    Candidates are deduplicated up to row and column permutation, filtered by
    linear independence of the rows, rate below one and non-catastrophicity,
    then ranked by (d_free desc, c/a at d_free asc, a at d_free asc).
    """
    if not 0 < k < n:
        raise ValueError(f"rate {k}/{n} must be below one")
    if not 0 < m <= 6:
        raise ValueError("memory must be in 1..6")
    # every row reaches degree m and has a constant term (no delayed copies)
    row_cands = _row_candidates(n, m)
    seen = set()
    per_first: dict[tuple, list] = {}
    for combo in itertools.combinations_with_replacement(range(len(row_cands)), k):
        entries = tuple(row_cands[i] for i in combo)
        key = _canonical_columns(entries)
        if key in seen:
            continue
        seen.add(key)
        per_first.setdefault(key[0], []).append(key[1:])
    jobs = sorted(per_first.items())
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = pool.map(partial(_unpack_block, k=k, m=m), jobs)
            found = [x for block in results for x in block]
    else:
        found = [x for job in jobs for x in _unpack_block(job, k, m)]
    if not found:
        raise ValueError(f"no admissible rate {k}/{n} memory {m} codes")
    best = max(d for d, _ in found)
    ranked = []
    for d in sorted({d for d, _ in found}, reverse=True):
        group = sorted((G for dd, G in found if dd == d), key=_rank_key)
        ranked.extend(group)
        if len(ranked) >= top_count:
            break
    assert _dfree_dijkstra(ranked[0].trellis) == best
    return ranked[:top_count]


def _unpack_block(job, k, m):
    first, others = job
    return _first_row_block(first, others, k, m)
