"""Union bounds on the bit error probability of the coded CPFSK downlink.

The error-event generating function is computed on the reduced product-state
graph with states ``(sigma, sigma_hat, omega)``, where ``omega`` is the phase
difference of the two CPFSK accumulators.  Transition labels are kept as term
lists ``(count, dtau, dd2)`` and evaluated numerically at the requested point
``eta**steps * eps**dtau * zeta**dd2``; the epsilon derivative travels
alongside the value through the linear solve.
"""
from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import erfc

from .cpfsk import interval_nsed_table
from .supertrellis import SuperTrellis

D2_DECIMALS = 9


class BoundDivergence(ArithmeticError):
    """The transfer-state matrix has spectral radius >= 1 at this point."""

    def __init__(self, point, radius):
        super().__init__(f"transfer function diverges at (eta, eps, zeta)={point}: rho(C)={radius:.6g}")
        self.point = point
        self.radius = radius


def q_function(x):
    """Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass(frozen=True)
class SpectrumTerm:
    d2: float
    tau: int
    length: int
    count: int


@dataclass(eq=False)
class ProductStateGraph:
    """Reduced product states and their labelled transitions.

    State index is ``(sigma * S + sigma_hat) * P + omega`` with ``S`` code
    states.  Each transition record is one (true input, hypothesis input)
    pair; parallel records between the same states are kept separate.
    """

    trellis: SuperTrellis
    num_code_states: int
    P: int
    src: np.ndarray
    dst: np.ndarray
    dtau: np.ndarray
    dd2: np.ndarray
    diverging: np.ndarray  # bool, true and hypothesis inputs differ
    cache: dict = field(default_factory=dict)

    @property
    def num_states(self) -> int:
        return self.num_code_states ** 2 * self.P

    @property
    def k(self) -> int:
        return self.trellis.k

    @property
    def code_memory(self) -> int:
        return self.trellis.code_memory

    def decompose(self, s):
        s = np.asarray(s)
        omega = s % self.P
        pair = s // self.P
        return pair // self.num_code_states, pair % self.num_code_states, omega

    def is_endpoint(self, s) -> np.ndarray:
        sig, sig_hat, omega = self.decompose(s)
        return (sig == sig_hat) & (omega == 0)

    @property
    def initial_states(self) -> np.ndarray:
        return np.flatnonzero(self.is_endpoint(np.arange(self.num_states)))

    @property
    def transfer_states(self) -> np.ndarray:
        return np.flatnonzero(~self.is_endpoint(np.arange(self.num_states)))

    @property
    def initial_weight(self) -> float:
        return 1.0 / len(self.initial_states)

    def _split(self):
        """Masks for the A/D (event start) and C/B (continuation) records."""
        if "split" not in self.cache:
            src_end = self.is_endpoint(self.src)
            dst_end = self.is_endpoint(self.dst)
            start = src_end & self.diverging
            cont = ~src_end
            self.cache["split"] = dict(
                A=start & ~dst_end, D=start & dst_end, C=cont & ~dst_end, B=cont & dst_end
            )
        return self.cache["split"]

    def _transfer_index(self) -> np.ndarray:
        if "tindex" not in self.cache:
            idx = np.full(self.num_states, -1)
            idx[self.transfer_states] = np.arange(len(self.transfer_states))
            self.cache["tindex"] = idx
        return self.cache["tindex"]


def build_product_graph(st: SuperTrellis) -> ProductStateGraph:
    table = interval_nsed_table(st.params)
    P = st.params.P
    ctr = st.code_trellis
    S, U, n = ctr.num_states, ctr.num_inputs, ctr.n
    sig, sig_hat, omega, u, u_hat = np.meshgrid(
        np.arange(S), np.arange(S), np.arange(P), np.arange(U), np.arange(U), indexing="ij"
    )
    sig, sig_hat, omega, u, u_hat = (a.reshape(-1) for a in (sig, sig_hat, omega, u, u_hat))
    c = ctr.outputs[sig, u].astype(np.int64)
    c_hat = ctr.outputs[sig_hat, u_hat].astype(np.int64)
    dd2 = np.zeros(len(sig))
    w = omega.copy()
    for j in range(n):
        dd2 += table[w, c[:, j], c_hat[:, j]]
        w = (w + c[:, j] - c_hat[:, j]) % P
    src = (sig * S + sig_hat) * P + omega
    dst = (ctr.next_state[sig, u] * S + ctr.next_state[sig_hat, u_hat]) * P + w
    popcount = np.array([bin(x).count("1") for x in range(U)])
    dtau = popcount[u ^ u_hat]
    return ProductStateGraph(st, S, P, src, dst, dtau, dd2, u != u_hat)


def _spectral_radius(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def eval_transfer_function(graph: ProductStateGraph, eta: float, eps: float, zeta: float,
                           check: bool = True) -> tuple[float, float]:
    """``(F, dF/deps)`` of the initial-state-averaged error-event generating function.

    Raises :class:`BoundDivergence` when the transfer-state matrix has
    spectral radius of at least one at this point.
    """
    parts = graph._split()
    tidx = graph._transfer_index()
    T = len(graph.transfer_states)
    base = eta * np.power(zeta, graph.dd2)
    val = base * np.power(eps, graph.dtau)
    der = np.where(graph.dtau > 0, base * graph.dtau * np.power(eps, np.maximum(graph.dtau - 1, 0)), 0.0)
    w0 = graph.initial_weight

    def vec(mask, target):
        v = np.zeros(T)
        dv = np.zeros(T)
        np.add.at(v, tidx[target[mask]], val[mask])
        np.add.at(dv, tidx[target[mask]], der[mask])
        return v, dv

    a, da = vec(parts["A"], graph.dst)
    a *= w0
    da *= w0
    b, db = vec(parts["B"], graph.src)
    d0 = w0 * val[parts["D"]].sum()
    dd0 = w0 * der[parts["D"]].sum()
    mC = parts["C"]
    rows, cols = tidx[graph.dst[mC]], tidx[graph.src[mC]]
    C = np.zeros((T, T))
    dC = np.zeros((T, T))
    np.add.at(C, (rows, cols), val[mC])
    np.add.at(dC, (rows, cols), der[mC])
    if check:
        rho = _spectral_radius(C)
        if rho >= 1.0:
            raise BoundDivergence((eta, eps, zeta), rho)
    IC = np.eye(T) - C
    try:
        x = np.linalg.solve(IC, a)
        dx = np.linalg.solve(IC, dC @ x + da)
    except np.linalg.LinAlgError as exc:
        raise BoundDivergence((eta, eps, zeta), float("nan")) from exc
    F = float(b @ x + d0)
    dF = float(db @ x + b @ dx + dd0)
    if check and (F < 0 or dF < 0 or not np.isfinite(F) or not np.isfinite(dF)):
        raise BoundDivergence((eta, eps, zeta), float("nan"))
    return F, dF


def min_nsed(st_or_graph) -> float:
    """Smallest accumulated distance of any error event (Dijkstra)."""
    graph = st_or_graph if isinstance(st_or_graph, ProductStateGraph) else build_product_graph(st_or_graph)
    if "dmin" in graph.cache:
        return graph.cache["dmin"]
    parts = graph._split()
    best = math.inf
    dist = defaultdict(lambda: math.inf)
    heap = []
    for i in np.flatnonzero(parts["D"]):
        best = min(best, graph.dd2[i])
    for i in np.flatnonzero(parts["A"]):
        d, s = float(graph.dd2[i]), int(graph.dst[i])
        if d < dist[s]:
            dist[s] = d
            heapq.heappush(heap, (d, s))
    adj = defaultdict(list)
    for i in np.flatnonzero(parts["C"] | parts["B"]):
        adj[int(graph.src[i])].append(i)
    while heap:
        d, s = heapq.heappop(heap)
        if d > dist[s] or d >= best:
            continue
        for i in adj[s]:
            nd, ns = d + float(graph.dd2[i]), int(graph.dst[i])
            if parts["B"][i]:
                best = min(best, nd)
            elif nd < dist[ns]:
                dist[ns] = nd
                heapq.heappush(heap, (nd, ns))
    if not math.isfinite(best):
        raise ValueError("no error event reaches an end state")
    graph.cache["dmin"] = best
    return best


def _key(d2: float) -> float:
    return round(float(d2), D2_DECIMALS)


def enumerate_error_events(graph: ProductStateGraph, d2_cap: float, length_cap: int) -> list[SpectrumTerm]:
    """All error events with ``d2 <= d2_cap`` and at most ``length_cap`` steps.

    Events are aggregated by ``(d2, tau, length)``; counts are summed over all
    initial states (not yet averaged).  Distances are merged after rounding to
    ``D2_DECIMALS`` places.
    """
    cache_key = ("events", round(d2_cap, 9), length_cap)
    if cache_key in graph.cache:
        return graph.cache[cache_key]
    parts = graph._split()
    tidx = graph._transfer_index()
    T = len(graph.transfer_states)
    limit = _key(d2_cap)

    def classes(mask):
        groups = defaultdict(list)
        for i in np.flatnonzero(mask):
            groups[(_key(graph.dd2[i]), int(graph.dtau[i]))].append(i)
        return groups

    events = defaultdict(int)
    for (d2, tau), idx in classes(parts["D"]).items():
        if d2 <= limit:
            events[(d2, tau, 1)] += len(idx)
    live: dict[tuple[float, int], np.ndarray] = defaultdict(lambda: np.zeros(T, dtype=np.int64))
    for (d2, tau), idx in classes(parts["A"]).items():
        if d2 <= limit:
            np.add.at(live[(d2, tau)], tidx[graph.dst[idx]], 1)
    c_mats = {}
    for cls, idx in classes(parts["C"]).items():
        idx = np.asarray(idx)
        c_mats[cls] = sparse.csr_matrix(
            (np.ones(len(idx), dtype=np.int64), (tidx[graph.dst[idx]], tidx[graph.src[idx]])), shape=(T, T)
        )
    b_vecs = {}
    for cls, idx in classes(parts["B"]).items():
        v = np.zeros(T, dtype=np.int64)
        np.add.at(v, tidx[graph.src[idx]], 1)
        b_vecs[cls] = v
    for length in range(2, length_cap + 1):
        if not live:
            break
        keys = sorted(live)
        V = np.stack([live[k] for k in keys], axis=1)
        for (dd, dt), bv in b_vecs.items():
            counts = bv @ V
            for (d2, tau), cnt in zip(keys, counts):
                nd = _key(d2 + dd)
                if cnt and nd <= limit:
                    events[(nd, tau + dt, length)] += int(cnt)
        if length == length_cap:
            break
        nxt = defaultdict(lambda: np.zeros(T, dtype=np.int64))
        for (dd, dt), cm in c_mats.items():
            prod = cm @ V
            for col, (d2, tau) in enumerate(keys):
                nd = _key(d2 + dd)
                if nd <= limit and prod[:, col].any():
                    nxt[(nd, tau + dt)] += prod[:, col]
        live = {k: v for k, v in nxt.items()}
        if any(v.min() < 0 for v in live.values()):
            raise OverflowError("event counts overflowed int64")
    if not events:
        raise ValueError("caps exclude every error event")
    terms = [SpectrumTerm(d2, tau, length, count) for (d2, tau, length), count in sorted(events.items())]
    graph.cache[cache_key] = terms
    return terms


def distance_weights(graph: ProductStateGraph, terms, eta: float | None = None) -> dict[float, float]:
    """Per-distance bit-error weights ``W_d``.

    ``W_d = w0 * sum(count * tau * eta**length)`` with ``w0`` the uniform
    initial-state weight and ``eta`` the probability of one step of the true
    path (``2**-k`` by default).
    """
    eta = 2.0 ** -graph.k if eta is None else eta
    w0 = graph.initial_weight
    out = defaultdict(float)
    for t in terms:
        out[t.d2] += w0 * t.count * t.tau * eta ** t.length
    return dict(sorted(out.items()))


def truncated_transfer_function(graph: ProductStateGraph, terms, eta: float, eps: float,
                                zeta: float) -> tuple[float, float]:
    w0 = graph.initial_weight
    F = dF = 0.0
    for t in terms:
        x = w0 * t.count * eta ** t.length * zeta ** t.d2
        F += x * eps ** t.tau
        dF += x * t.tau * eps ** (t.tau - 1) if t.tau else 0.0
    return F, dF


def enumeration_tail_bound(graph: ProductStateGraph, eta: float, zeta: float, d2_cap: float,
                           length_cap: int) -> tuple[float, float]:
    """Upper bound on what truncation at ``(d2_cap, length_cap)`` leaves out.

    Events with ``d2 > d2_cap`` satisfy ``zeta**d2 <= zeta2**d2 * (zeta/zeta2)**d2_cap``
    for any ``zeta2 > zeta``, so their sum is at most ``(zeta/zeta2)**d2_cap``
    times the generating function at ``zeta2``; overly long events are bounded
    the same way through ``eta``.  The best convergent choice from a small
    grid is returned for both ``F`` and ``dF/deps`` (at ``eps = 1``).
    """
    best_d = (math.inf, math.inf)
    for a in (0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3):
        z2 = zeta ** a
        try:
            F2, dF2 = eval_transfer_function(graph, eta, 1.0, z2)
        except BoundDivergence:
            continue
        f = (zeta / z2) ** d2_cap
        best_d = min(best_d, (F2 * f, dF2 * f))
    best_l = (math.inf, math.inf)
    for b in (1.05, 1.1, 1.25, 1.5, 2.0, 3.0):
        e2 = eta * b
        try:
            F2, dF2 = eval_transfer_function(graph, e2, 1.0, zeta)
        except BoundDivergence:
            continue
        f = b ** -(length_cap + 1)
        best_l = min(best_l, (F2 * f, dF2 * f))
    return best_d[0] + best_l[0], best_d[1] + best_l[1]


def default_caps(graph: ProductStateGraph) -> tuple[float, int]:
    return min_nsed(graph) + 8.0, 30


def bound_pbd(ebn0: float, r: float, graph: ProductStateGraph, mode: str = "closed-form",
              terms=None, eta: float | None = None) -> float:
    """Downlink bit-error bound at linear ``Eb/N0``.

    ``closed-form``: ``Q(sqrt(dmin x)) exp(dmin x / 2) dF/deps / k`` at
    ``zeta = exp(-x/2)``, ``x = r Eb/N0``.  ``spectrum``:
    ``sum_d W_d Q(sqrt(d x)) / k`` over the enumerated spectrum.  Both are
    clamped to 1 and raise :class:`BoundDivergence` outside the convergence
    region of the generating function.
    """
    if not ebn0 > 0:
        raise ValueError("Eb/N0 must be positive")
    eta = 2.0 ** -graph.k if eta is None else eta
    x = r * ebn0
    dmin = min_nsed(graph)
    F, dF = eval_transfer_function(graph, eta, 1.0, math.exp(-x / 2))
    if mode == "closed-form":
        val = float(q_function(math.sqrt(dmin * x))) * math.exp(dmin * x / 2) * dF
    elif mode == "spectrum":
        if terms is None:
            terms = enumerate_error_events(graph, *default_caps(graph))
        weights = distance_weights(graph, terms, eta)
        val = sum(w * float(q_function(math.sqrt(d * x))) for d, w in weights.items())
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return min(val / graph.k, 1.0)


def uplink_pb(ebn0s, rates) -> float:
    """Probability that at least one orthogonal BPSK uplink flips a bit."""
    ebn0s = np.atleast_1d(np.asarray(ebn0s, dtype=float))
    rates = np.broadcast_to(np.asarray(rates, dtype=float), ebn0s.shape)
    if np.any(ebn0s <= 0):
        raise ValueError("Eb/N0 must be positive")
    p = q_function(np.sqrt(rates * ebn0s))
    return float(1.0 - np.prod(1.0 - p))


def overall_pb(p_u: float, p_d: float) -> float:
    if not (0 <= p_u <= 1 and 0 <= p_d <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return p_u + p_d - p_u * p_d


@dataclass(frozen=True)
class BoundPoint:
    ebno_db: float
    pbd_eq14: float | None
    pbd_eq18: float | None
    pbu: float
    pb_overall: float | None
    dmin_sq: float
    converged: bool


def bound_curve(graph: ProductStateGraph, ebno_db, uplink_rates=None, uplink_ebno_db=None,
                caps=None) -> list[BoundPoint]:
    """Bounds over a grid of downlink Eb/N0 values (dB).

    ``uplink_rates`` (one per source) switches on the uplink term; the uplink
    Eb/N0 defaults to the downlink value.  Points where the generating
    function diverges come back with ``converged=False`` and ``None`` bounds.
    """
    r = graph.trellis.rate
    dmin = min_nsed(graph)
    terms = enumerate_error_events(graph, *(caps or default_caps(graph)))
    out = []
    for db in ebno_db:
        ebn0 = 10 ** (db / 10)
        if uplink_rates:
            up = [10 ** (u / 10) for u in uplink_ebno_db] if uplink_ebno_db else [ebn0] * len(uplink_rates)
            pbu = uplink_pb(up, uplink_rates)
        else:
            pbu = 0.0
        try:
            p14 = bound_pbd(ebn0, r, graph, "closed-form")
            p18 = bound_pbd(ebn0, r, graph, "spectrum", terms=terms)
        except BoundDivergence:
            out.append(BoundPoint(db, None, None, pbu, None, dmin, False))
            continue
        out.append(BoundPoint(db, p14, p18, pbu, overall_pb(pbu, p18), dmin, True))
    return out
