"""Binary feedforward convolutional encoders given by octal generator matrices.

Polynomials are stored as coefficient bit-vectors, constant term first.  The
octal form puts the constant term in the most significant bit of an
``m + 1`` bit word, so ``"6"`` with ``m = 2`` is ``110`` = ``1 + D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


class GeneratorError(ValueError):
    """Raised for malformed or degenerate generator matrices."""


@dataclass(frozen=True)
class GeneratorMatrix:
    """k x n binary polynomial generator matrix with memory ``m``.

    ``rows`` has shape ``(k, n, m + 1)``; ``rows[i, j, d]`` is the coefficient
    of ``D**d`` in the polynomial connecting input ``i`` to output ``j``.
    Every input row owns an ``m``-bit shift register, so the trellis has
    ``2**(k*m)`` states.
    """

    rows: np.ndarray
    k: int = field(init=False)
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.uint8)
        if rows.ndim != 3:
            raise GeneratorError("rows must have shape (k, n, m+1)")
        if np.any(rows > 1):
            raise GeneratorError("coefficients must be 0 or 1")
        k, n, width = rows.shape
        if k < 1 or n < 1 or width < 1:
            raise GeneratorError("empty generator matrix")
        if k >= n:
            raise GeneratorError(f"rate {k}/{n} is not below one")
        m = width - 1
        if not rows[:, :, m].any():
            raise GeneratorError(f"no entry reaches degree {m}")
        for i in range(k):
            if not rows[i].any():
                raise GeneratorError(f"row {i} is all zero")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)

    def __eq__(self, other):
        if not isinstance(other, GeneratorMatrix):
            return NotImplemented
        return self.rows.shape == other.rows.shape and bool(np.all(self.rows == other.rows))

    def __hash__(self):
        return hash((self.rows.shape, self.rows.tobytes()))

    def __repr__(self):
        return f"GeneratorMatrix({render_generator(self)!r}, k={self.k}, n={self.n}, m={self.m})"

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def memory(self) -> int:
        """Total number of register bits, ``k * m``."""
        return self.k * self.m

    @property
    def octal_display(self) -> list[list[str]]:
        return [[_poly_to_octal(self.rows[i, j]) for j in range(self.n)] for i in range(self.k)]

    @cached_property
    def trellis(self) -> "Trellis":
        return build_trellis(self)


def _octal_width(m: int) -> int:
    return -(-(m + 1) // 3)


def _poly_to_octal(coeffs: np.ndarray) -> str:
    value = 0
    for c in coeffs:
        value = (value << 1) | int(c)
    return format(value, "o").zfill(_octal_width(len(coeffs) - 1))


def _octal_to_poly(text: str, m: int) -> np.ndarray:
    text = text.strip()
    if not text or any(ch not in "01234567" for ch in text):
        raise GeneratorError(f"malformed octal entry {text!r}")
    value = int(text, 8)
    if value >> (m + 1):
        raise GeneratorError(f"entry {text!r} exceeds degree {m}")
    return np.array([(value >> (m - d)) & 1 for d in range(m + 1)], dtype=np.uint8)


def parse_generator(octal_rows, k: int | None = None, n: int | None = None,
                    m: int | None = None) -> GeneratorMatrix:
    """Build a generator matrix from octal entries.

    ``octal_rows`` is either a list of rows (each a list of octal strings), a
    flat list of strings for a single row, or a string such as
    ``"6,5,1;7,2,5"``.  ``m`` defaults to the smallest memory that fits every
    entry.
    """
    if isinstance(octal_rows, str):
        table = [[e for e in row.split(",")] for row in octal_rows.split(";") if row.strip()]
    else:
        octal_rows = list(octal_rows)
        if octal_rows and isinstance(octal_rows[0], str):
            table = [list(octal_rows)]
        else:
            table = [list(r) for r in octal_rows]
    if not table:
        raise GeneratorError("no generator rows")
    widths = {len(r) for r in table}
    if len(widths) != 1:
        raise GeneratorError("rows have different lengths")
    if k is not None and k != len(table):
        raise GeneratorError(f"expected {k} rows, got {len(table)}")
    if n is not None and n != len(table[0]):
        raise GeneratorError(f"expected {n} columns, got {len(table[0])}")
    if m is None:
        for e in (e for r in table for e in r):
            _octal_to_poly(e, 64)
        m = max(max(int(e.strip(), 8).bit_length() for r in table for e in r) - 1, 0)
    rows = np.array([[_octal_to_poly(e, m) for e in r] for r in table], dtype=np.uint8)
    return GeneratorMatrix(rows)


def render_generator(G: GeneratorMatrix) -> str:
    """Inverse of :func:`parse_generator` for the string form."""
    return ";".join(",".join(row) for row in G.octal_display)


def stack(*gens: GeneratorMatrix) -> GeneratorMatrix:
    """Stack the rows of several generators sharing ``n`` and ``m``."""
    if not gens:
        raise GeneratorError("nothing to stack")
    if len({(g.n, g.m) for g in gens}) != 1:
        raise GeneratorError("stacked generators must share n and m")
    return GeneratorMatrix(np.concatenate([g.rows for g in gens], axis=0))


@dataclass(frozen=True)
class Trellis:
    """State machine of a generator matrix.

    States pack the registers of rows ``0..k-1`` most significant first; in
    each register the most recent input is the high bit.  Inputs are integers
    whose bit ``k-1-i`` is the input of row ``i``.
    """

    k: int
    n: int
    m: int
    next_state: np.ndarray  # (S, 2**k)
    outputs: np.ndarray  # (S, 2**k, n) uint8

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def num_inputs(self) -> int:
        return self.next_state.shape[1]

    @cached_property
    def output_weight(self) -> np.ndarray:
        return self.outputs.sum(axis=2).astype(np.int64)

    @cached_property
    def input_weight(self) -> np.ndarray:
        u = np.arange(self.num_inputs)
        w = np.array([bin(x).count("1") for x in u], dtype=np.int64)
        return np.broadcast_to(w, self.next_state.shape)


def input_bits(u: int, k: int) -> list[int]:
    return [(u >> (k - 1 - i)) & 1 for i in range(k)]


def build_trellis(G: GeneratorMatrix) -> Trellis:
    k, n, m = G.k, G.n, G.m
    num_states = 1 << (k * m)
    mask = (1 << m) - 1
    next_state = np.zeros((num_states, 1 << k), dtype=np.int64)
    outputs = np.zeros((num_states, 1 << k, n), dtype=np.uint8)
    for s in range(num_states):
        regs = [(s >> ((k - 1 - i) * m)) & mask for i in range(k)]
        for u in range(1 << k):
            bits = input_bits(u, k)
            out = np.zeros(n, dtype=np.uint8)
            ns = 0
            for i in range(k):
                # contents[d] = input of row i delayed by d steps
                contents = [bits[i]] + [(regs[i] >> (m - 1 - d)) & 1 for d in range(m)]
                out ^= (G.rows[i] @ np.array(contents, dtype=np.uint8) % 2).astype(np.uint8)
                ns = (ns << m) | (((bits[i] << m) | regs[i]) >> 1) if m else 0
            next_state[s, u] = ns
            outputs[s, u] = out
    return Trellis(k, n, m, next_state, outputs)


def pack_inputs(info_bits: np.ndarray, k: int) -> np.ndarray:
    """Group a bit sequence into per-step input integers."""
    bits = np.asarray(info_bits, dtype=np.int64).reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits @ weights


def unpack_inputs(inputs: np.ndarray, k: int) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1)
    return ((inputs[..., None] >> shifts) & 1).astype(np.uint8).reshape(*inputs.shape[:-1], -1)


def encode(G: GeneratorMatrix, info_bits: Sequence[int], terminate: bool = True) -> np.ndarray:
    """Encode ``info_bits`` (k bits per step, row order) starting from state 0.

    With ``terminate`` the encoder is flushed with ``m`` all-zero input steps.
    """
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.ndim != 1:
        raise ValueError("info_bits must be one-dimensional")
    if len(info_bits) % G.k:
        raise ValueError(f"{len(info_bits)} info bits is not a multiple of k={G.k}")
    inputs = pack_inputs(info_bits, G.k)
    if terminate:
        inputs = np.concatenate([inputs, np.zeros(G.m, dtype=np.int64)])
    tr = G.trellis
    out = np.empty((len(inputs), G.n), dtype=np.uint8)
    s = 0
    for t, u in enumerate(inputs):
        out[t] = tr.outputs[s, u]
        s = tr.next_state[s, u]
    return out.reshape(-1)


def is_catastrophic(G: GeneratorMatrix) -> bool:
    """True iff some cycle other than the zero-input zero-state loop has zero output weight."""
    tr = G.trellis
    S = tr.num_states
    adj = [[] for _ in range(S)]
    for s in range(S):
        for u in range(tr.num_inputs):
            if tr.output_weight[s, u] == 0 and not (s == 0 and u == 0):
                adj[s].append(int(tr.next_state[s, u]))
    # iterative three-colour DFS for a cycle in the zero-output subgraph
    colour = [0] * S
    for root in range(S):
        if colour[root]:
            continue
        stack_ = [(root, iter(adj[root]))]
        colour[root] = 1
        while stack_:
            node, it = stack_[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = 2
                stack_.pop()
            elif colour[nxt] == 1:
                return True
            elif colour[nxt] == 0:
                colour[nxt] = 1
                stack_.append((nxt, iter(adj[nxt])))
    return False


def _gf2_rank(rows: list[int]) -> int:
    rank = 0
    rows = [r for r in rows if r]
    while rows:
        pivot = max(rows)
        top = pivot.bit_length() - 1
        rows = [r ^ pivot if (r >> top) & 1 else r for r in rows if r != pivot]
        rows = [r for r in rows if r]
        rank += 1
    return rank


def rows_linearly_independent(rows) -> bool:
    """Linear independence of generator rows over GF(2)[D].

    ``rows`` is a single matrix, a list of :class:`GeneratorMatrix` (each
    contributing all of its rows), or a list of ``(n, m+1)`` coefficient
    arrays.  A polynomial dependency among ``k``
    rows of memory ``m`` has coefficients of degree at most ``(k-1)*m``, so
    it shows up as a rank deficit of the GF(2) sliding block matrix with
    ``(k-1)*m + 1`` shifts.
    """
    if isinstance(rows, GeneratorMatrix):
        rows = [rows]
    blocks = [g.rows if isinstance(g, GeneratorMatrix) else np.asarray(g, dtype=np.uint8)[None] for g in rows]
    if not blocks or len({b.shape[1:] for b in blocks}) != 1:
        raise GeneratorError("rows must share n and m")
    coeffs = np.concatenate(blocks, axis=0)
    k, n, width = coeffs.shape
    m = width - 1
    shifts = (k - 1) * m + 1
    flat = []
    for i in range(k):
        # coefficient block for row i: time index d, output j -> bit d*n + j
        word = 0
        for d in range(width):
            for j in range(n):
                if coeffs[i, j, d]:
                    word |= 1 << (d * n + j)
        flat.append(word)
    sliding = [word << (t * n) for t in range(shifts) for word in flat]
    return _gf2_rank(sliding) == len(sliding)
