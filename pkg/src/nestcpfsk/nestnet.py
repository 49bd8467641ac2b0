"""XOR nesting at the relay and side-information cancellation at destinations.

LLRs follow ``log P(bit=0) / P(bit=1)``: positive means 0 is more likely.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .convcode import GeneratorMatrix, encode, stack
from .supertrellis import decode_code_llr


@dataclass(frozen=True)
class NestedCodeword:
    bits: np.ndarray
    contributors: tuple[tuple[int, GeneratorMatrix], ...]

    def __post_init__(self):
        n = {g.n for _, g in self.contributors}
        if len(n) > 1:
            raise ValueError("contributors must share n")
        ids = [i for i, _ in self.contributors]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate source id")
        if self.contributors and sum(g.k for _, g in self.contributors) >= n.pop():
            raise ValueError("stacked rate is not below one")

    @property
    def generators(self) -> dict[int, GeneratorMatrix]:
        return dict(self.contributors)


@dataclass(frozen=True)
class SideInformation:
    known: Mapping[int, np.ndarray] = field(default_factory=dict)


def nest(codewords: Sequence) -> np.ndarray:
    """Elementwise XOR of equal-length codewords."""
    if not len(codewords):
        raise ValueError("need at least one codeword")
    arrays = [np.asarray(c, dtype=np.uint8) for c in codewords]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("codeword lengths differ")
    return np.bitwise_xor.reduce(np.stack(arrays), axis=0)


def relay_combine(sources: Sequence[tuple[int, GeneratorMatrix, np.ndarray]]) -> NestedCodeword:
    """Encode every ``(id, G, info)`` source (terminated) and XOR the results."""
    words = [encode(G, info, terminate=True) for _, G, info in sources]
    return NestedCodeword(nest(words), tuple((i, G) for i, G, _ in sources))


def _check_side(side: SideInformation, contributors) -> dict[int, GeneratorMatrix]:
    gens = dict(contributors)
    unknown = set(side.known) - set(gens)
    if unknown:
        raise KeyError(f"side information for unknown sources {sorted(unknown)}")
    return gens


def known_codeword(side: SideInformation, contributors, length: int) -> np.ndarray:
    gens = _check_side(side, contributors)
    out = np.zeros(length, dtype=np.uint8)
    for i, info in side.known.items():
        out ^= encode(gens[i], info, terminate=True)
    return out


def cancel_known_hard(received, side: SideInformation, contributors) -> np.ndarray:
    """Strip the codewords of known sources from a hard-decision nested word."""
    received = np.asarray(received, dtype=np.uint8)
    return received ^ known_codeword(side, contributors, len(received))


def cancel_known_llr(llr, known_code_bits) -> np.ndarray:
    """Flip the sign of every LLR whose known code bit is 1."""
    llr = np.asarray(llr, dtype=float)
    known = np.asarray(known_code_bits)
    if llr.shape != known.shape:
        raise ValueError("length mismatch")
    return np.where(known.astype(bool), -llr, llr)


def unknown_contributors(side: SideInformation, contributors) -> list[tuple[int, GeneratorMatrix]]:
    _check_side(side, contributors)
    return [(i, g) for i, g in contributors if i not in side.known]


def effective_rate(side: SideInformation, contributors) -> float:
    rest = unknown_contributors(side, contributors)
    n = contributors[0][1].n
    return sum(g.k for _, g in rest) / n


def interleave(infos: Sequence[np.ndarray], ks: Sequence[int]) -> np.ndarray:
    """Joint info sequence: per step, the ``k_i`` bits of each source in order."""
    blocks = [np.asarray(x, dtype=np.uint8).reshape(*np.shape(x)[:-1], -1, k) for x, k in zip(infos, ks)]
    return np.concatenate(blocks, axis=-1).reshape(*blocks[0].shape[:-2], -1)


def deinterleave(joint: np.ndarray, ks: Sequence[int]) -> list[np.ndarray]:
    joint = np.asarray(joint)
    steps = joint.reshape(*joint.shape[:-1], -1, sum(ks))
    out, start = [], 0
    for k in ks:
        out.append(steps[..., start:start + k].reshape(*joint.shape[:-1], -1))
        start += k
    return out


def decode_unknown_llr(llr, side: SideInformation, contributors) -> dict[int, np.ndarray]:
    """Cancel known sources in the LLR domain and decode the rest jointly."""
    llr = np.asarray(llr, dtype=float)
    cancelled = cancel_known_llr(llr, known_codeword(side, contributors, llr.shape[-1]))
    rest = unknown_contributors(side, contributors)
    if not rest:
        return {}
    G = stack(*(g for _, g in rest))
    joint = decode_code_llr(G, cancelled)
    parts = deinterleave(joint, [g.k for _, g in rest])
    return {i: bits for (i, _), bits in zip(rest, parts)}


def decode_unknown_hard(received, side: SideInformation, contributors) -> dict[int, np.ndarray]:
    """Hard-domain counterpart: cancel, then decode with +/-1 reliabilities."""
    word = cancel_known_hard(received, side, contributors)
    rest = unknown_contributors(side, contributors)
    if not rest:
        return {}
    G = stack(*(g for _, g in rest))
    joint = decode_code_llr(G, 1.0 - 2.0 * word)
    parts = deinterleave(joint, [g.k for _, g in rest])
    return {i: bits for (i, _), bits in zip(rest, parts)}
