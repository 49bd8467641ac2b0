"""Joint trellis of the stacked source encoders and the CPFSK phase accumulator.

A super-state is ``sigma_cc * P + phase``.  One trellis step consumes the
``k`` joint input bits, emits ``n`` code bits and sends each code bit as one
binary CPFSK symbol (row-major: output index order of the stacked code).
Decoding is terminated: the code register is flushed with ``m`` zero steps,
and the final phase state is left free.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .convcode import (
    GeneratorMatrix,
    Trellis,
    encode,
    is_catastrophic,
    rows_linearly_independent,
    stack,
    unpack_inputs,
)
from .cpfsk import CpfskParams, branch_ids

_UNCODED = Trellis(
    k=1, n=1, m=0,
    next_state=np.zeros((1, 2), dtype=np.int64),
    outputs=np.array([[[0], [1]]], dtype=np.uint8),
)


@dataclass(frozen=True, eq=False)
class SuperTrellis:
    code: GeneratorMatrix | None
    params: CpfskParams
    next_state: np.ndarray  # (S, U)
    code_bits: np.ndarray  # (S, U, n)
    branch: np.ndarray  # (S, U, n) CPFSK branch ids
    prev_state: np.ndarray  # (S, U) predecessors, ascending state index
    prev_input: np.ndarray  # (S, U)

    @property
    def k(self) -> int:
        return self.code.k if self.code else 1

    @property
    def n(self) -> int:
        return self.code.n if self.code else 1

    @property
    def m(self) -> int:
        return self.code.m if self.code else 0

    @property
    def tail_steps(self) -> int:
        return self.m

    @property
    def code_memory(self) -> int:
        return self.code.memory if self.code else 0

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def num_inputs(self) -> int:
        return self.next_state.shape[1]

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def code_trellis(self) -> Trellis:
        return self.code.trellis if self.code else _UNCODED

    @cached_property
    def input_bit_table(self) -> np.ndarray:
        """``(U, k)`` bits of each joint input."""
        return unpack_inputs(np.arange(self.num_inputs)[:, None], self.k).reshape(self.num_inputs, self.k)

    def end_states(self) -> np.ndarray:
        return np.arange(self.params.P)  # sigma_cc = 0, any phase


def build_super_trellis(generators, params: CpfskParams | None = None) -> SuperTrellis:
    """Combine a generator stack with the CPFSK phase accumulator.

    ``generators`` is a :class:`GeneratorMatrix`, a list of them (stacked in
    order) or ``None`` for uncoded CPFSK.
    """
    params = params or CpfskParams()
    if params.M != 2 or params.L != 1:
        raise NotImplementedError("super-trellis supports binary full-response CPFSK only")
    if generators is None:
        code = None
        tr = _UNCODED
    else:
        gens = [generators] if isinstance(generators, GeneratorMatrix) else list(generators)
        if not rows_linearly_independent(gens):
            raise ValueError("generator rows are linearly dependent")
        code = gens[0] if len(gens) == 1 else stack(*gens)
        if is_catastrophic(code):
            raise ValueError("stacked code is catastrophic")
        tr = code.trellis
    P = params.P
    S = tr.num_states * P
    U = tr.num_inputs
    n = tr.n
    next_state = np.empty((S, U), dtype=np.int64)
    bits = np.empty((S, U, n), dtype=np.uint8)
    branch = np.empty((S, U, n), dtype=np.int64)
    for scc in range(tr.num_states):
        for phase in range(P):
            s = scc * P + phase
            for u in range(U):
                out = tr.outputs[scc, u]
                ph = phase
                for j, mu in enumerate(out):
                    branch[s, u, j] = ph * params.M + int(mu)
                    ph = (ph + int(mu)) % P
                bits[s, u] = out
                next_state[s, u] = tr.next_state[scc, u] * P + ph
    preds: list[list[tuple[int, int]]] = [[] for _ in range(S)]
    for s in range(S):
        for u in range(U):
            preds[next_state[s, u]].append((s, u))
    if len({len(p) for p in preds}) != 1:
        raise RuntimeError("super-trellis in-degree is not uniform")
    preds = [sorted(p) for p in preds]
    prev_state = np.array([[s for s, _ in p] for p in preds], dtype=np.int64)
    prev_input = np.array([[u for _, u in p] for p in preds], dtype=np.int64)
    return SuperTrellis(code, params, next_state, bits, branch, prev_state, prev_input)


def _split_steps(st: SuperTrellis, correlations) -> np.ndarray:
    corr = np.real(np.asarray(correlations))
    if corr.shape[-1] != st.params.num_branches:
        raise ValueError("correlation vectors have the wrong length")
    n_sym = corr.shape[-2]
    if n_sym % st.n or n_sym // st.n <= st.tail_steps:
        raise ValueError(f"{n_sym} symbols do not form a terminated block of {st.n}-symbol steps")
    return corr.reshape(*corr.shape[:-2], n_sym // st.n, st.n, corr.shape[-1])


def _step_metric(st: SuperTrellis, corr_t: np.ndarray) -> np.ndarray:
    """``corr_t``: (batch, n, B) -> (batch, S, U) summed correlation metrics."""
    out = np.zeros(corr_t.shape[:1] + st.next_state.shape)
    for j in range(st.n):
        out += corr_t[:, j, :][:, st.branch[:, :, j]]
    return out


def viterbi_decode(st: SuperTrellis, correlations) -> np.ndarray:
    """Maximum-metric terminated path through the super-trellis.

    ``correlations`` has shape ``(n_symbols, B)`` or ``(batch, n_symbols, B)``.
    Returns the joint info bits (``k`` per step, tail removed).  Ties go to
    the lowest-index predecessor state.
    """
    corr = _split_steps(st, correlations)
    single = corr.ndim == 3
    if single:
        corr = corr[None]
    inputs = _viterbi(st, corr, lambda t: _step_metric(st, corr[:, t]))
    bits = unpack_inputs(inputs, st.k)
    return bits[0] if single else bits


def _viterbi(st: SuperTrellis, corr: np.ndarray, step_metric) -> np.ndarray:
    batch, steps = corr.shape[:2]
    S, U = st.num_states, st.num_inputs
    info_steps = steps - st.tail_steps
    pm = np.full((batch, S), -np.inf)
    pm[:, 0] = 0.0
    choice = np.empty((steps, batch, S), dtype=np.int16)
    rows = np.arange(batch)[:, None, None]
    for t in range(steps):
        bm = step_metric(t)
        if t >= info_steps:
            bm[:, :, 1:] = -np.inf
        cand = pm[:, st.prev_state] + bm[rows, st.prev_state[None], st.prev_input[None]]
        idx = np.argmax(cand, axis=2)
        choice[t] = idx
        pm = np.take_along_axis(cand, idx[..., None], axis=2)[..., 0]
    ends = st.end_states()
    state = ends[np.argmax(pm[:, ends], axis=1)]
    inputs = np.empty((batch, steps), dtype=np.int64)
    b = np.arange(batch)
    for t in range(steps - 1, -1, -1):
        i = choice[t, b, state]
        inputs[:, t] = st.prev_input[state, i]
        state = st.prev_state[state, i]
    return inputs[:, :info_steps]


def map_decode(st: SuperTrellis, correlations, N0: float) -> np.ndarray:
    """Log-domain forward-backward over the super-trellis.

    Returns one LLR ``log P(bit=0) / P(bit=1)`` per joint info bit, with the
    branch log-likelihood ``Re r / N0``.
    """
    if not N0 > 0:
        raise ValueError("N0 must be positive")
    corr = _split_steps(st, correlations)
    single = corr.ndim == 3
    if single:
        corr = corr[None]
    batch, steps = corr.shape[:2]
    S, U = st.num_states, st.num_inputs
    info_steps = steps - st.tail_steps
    rows = np.arange(batch)[:, None, None]

    def gamma(t):
        g = _step_metric(st, corr[:, t]) / N0
        if t >= info_steps:
            g[:, :, 1:] = -np.inf
        return g

    alpha = np.full((steps + 1, batch, S), -np.inf)
    alpha[0, :, 0] = 0.0
    for t in range(steps):
        g = gamma(t)
        cand = alpha[t][:, st.prev_state] + g[rows, st.prev_state[None], st.prev_input[None]]
        alpha[t + 1] = logsumexp(cand, axis=2)
        alpha[t + 1] -= np.max(alpha[t + 1], axis=1, keepdims=True)
    beta = np.full((batch, S), -np.inf)
    beta[:, st.end_states()] = 0.0
    bit_table = st.input_bit_table
    llr = np.empty((batch, info_steps, st.k))
    for t in range(steps - 1, -1, -1):
        g = gamma(t)
        joint = alpha[t][:, :, None] + g + beta[:, st.next_state]  # (batch, S, U)
        if t < info_steps:
            for r in range(st.k):
                zero = joint[:, :, bit_table[:, r] == 0]
                one = joint[:, :, bit_table[:, r] == 1]
                llr[:, t, r] = (logsumexp(zero.reshape(batch, -1), axis=1)
                                - logsumexp(one.reshape(batch, -1), axis=1))
        beta = logsumexp(g + beta[:, st.next_state], axis=2)
        beta -= np.max(beta, axis=1, keepdims=True)
    llr = llr.reshape(batch, -1)
    return llr[0] if single else llr


def code_symbols(st: SuperTrellis, info_bits) -> np.ndarray:
    """Channel symbols (code bits) for a joint info sequence, terminated."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if st.code is None:
        return info_bits.copy()
    return encode(st.code, info_bits, terminate=True)


def exhaustive_mlsd_oracle(st: SuperTrellis, correlations, max_bits: int = 16) -> np.ndarray:
    """Brute-force maximum-metric search over every terminated input sequence.

    Candidates are scanned in lexicographic order and only a strictly larger
    metric replaces the incumbent, so the lexicographically smallest maximizer
    wins.
    """
    corr = np.real(np.asarray(correlations))
    n_sym = corr.shape[0]
    if n_sym % st.n:
        raise ValueError("symbol count is not a whole number of steps")
    n_bits = (n_sym // st.n - st.tail_steps) * st.k
    if n_bits < 1:
        raise ValueError("block too short")
    if n_bits > max_bits:
        raise ValueError(f"{n_bits} info bits exceeds the oracle limit of {max_bits}")
    best, best_metric = None, -np.inf
    for cand in itertools.product((0, 1), repeat=n_bits):
        syms = code_symbols(st, cand)
        ids = branch_ids(st.params, syms)
        metric = corr[np.arange(n_sym), ids].sum()
        if metric > best_metric:
            best, best_metric = cand, metric
    return np.array(best, dtype=np.uint8)


def decode_code_llr(G: GeneratorMatrix, llr) -> np.ndarray:
    """Soft Viterbi for a plain terminated convolutional code.

    ``llr`` holds one value per code bit, positive meaning 0 is more likely;
    the branch metric is the correlation ``sum (1 - 2 c) * llr``.
    """
    llr = np.asarray(llr, dtype=float)
    single = llr.ndim == 1
    if single:
        llr = llr[None]
    tr = G.trellis
    if llr.shape[-1] % G.n or llr.shape[-1] // G.n <= G.m:
        raise ValueError("LLR length is not a terminated block")
    steps = llr.shape[-1] // G.n
    llr = llr.reshape(llr.shape[0], steps, G.n)
    signs = 1.0 - 2.0 * tr.outputs  # (S, U, n)
    preds: list[list[tuple[int, int]]] = [[] for _ in range(tr.num_states)]
    for s in range(tr.num_states):
        for u in range(tr.num_inputs):
            preds[tr.next_state[s, u]].append((s, u))
    preds = [sorted(p) for p in preds]
    shim = _PlainTrellis(
        prev_state=np.array([[s for s, _ in p] for p in preds]),
        prev_input=np.array([[u for _, u in p] for p in preds]),
        num_states=tr.num_states,
        num_inputs=tr.num_inputs,
        tail_steps=G.m,
    )
    inputs = _viterbi(shim, llr, lambda t: np.einsum("suj,bj->bsu", signs, llr[:, t]))
    bits = unpack_inputs(inputs, G.k)
    return bits[0] if single else bits


@dataclass(frozen=True)
class _PlainTrellis:
    prev_state: np.ndarray
    prev_input: np.ndarray
    num_states: int
    num_inputs: int
    tail_steps: int

    def end_states(self):
        return np.array([0])
