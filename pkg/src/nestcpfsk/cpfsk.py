"""Continuous-phase FSK in the tilted-phase (Rimoldi) representation.

The modulator is split into a phase accumulator (``CpeState``) and a
memoryless map from (phase state, symbol window) to one of ``P * M**L``
branch waveforms.  Time is normalized so that ``T = 1`` by default; each
symbol interval is sampled at its ``ns`` midpoints ``(k + 1/2) T / ns``.

Complex baseband amplitude is ``sqrt(2 Es / T)`` and the complex noise has
double-sided density ``2 N0``, i.e. passband density ``N0 / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class CpfskParams:
    M: int = 2
    h: Fraction = Fraction(1, 2)
    L: int = 1
    pulse: str = "REC"
    T: float = 1.0
    Es: float = 1.0
    ns: int = 8

    def __post_init__(self):
        h = Fraction(self.h)
        object.__setattr__(self, "h", h)
        if self.M < 2 or self.M & (self.M - 1):
            raise ValueError(f"M={self.M} is not a power of two")
        if h <= 0:
            raise ValueError("modulation index must be positive")
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.ns < 4:
            raise ValueError("need at least 4 samples per symbol")
        if self.pulse != "REC":
            raise ValueError(f"unsupported pulse {self.pulse!r}")
        if self.T <= 0 or self.Es <= 0:
            raise ValueError("T and Es must be positive")

    @property
    def P(self) -> int:
        return self.h.denominator

    @property
    def num_branches(self) -> int:
        return self.P * self.M ** self.L

    @property
    def amplitude(self) -> float:
        return math.sqrt(2 * self.Es / self.T)

    @property
    def dt(self) -> float:
        return self.T / self.ns

    @cached_property
    def tau(self) -> np.ndarray:
        return (np.arange(self.ns) + 0.5) * self.dt

    @cached_property
    def branch_waveforms(self) -> np.ndarray:
        """``(P * M**L, ns)`` table of branch waveforms indexed by branch id."""
        table = np.empty((self.num_branches, self.ns), dtype=complex)
        for b in range(self.num_branches):
            phase_state, window, symbol = split_branch_id(self, b)
            phases = [tilted_phase(self, phase_state, window, symbol, t) for t in self.tau]
            table[b] = self.amplitude * np.exp(1j * np.array(phases))
        return table

    @classmethod
    def from_strings(cls, M="2", h="1/2", L="1", ns="8") -> "CpfskParams":
        return cls(M=int(M), h=Fraction(str(h).strip()), L=int(L), ns=int(ns))


def phase_pulse(params: CpfskParams, t):
    """LREC phase response ``q(t)``: ramps to 1/2 over ``L T``."""
    return np.clip(np.asarray(t, dtype=float) / (2 * params.L * params.T), 0.0, 0.5)


def data_independent_phase(params: CpfskParams, tau):
    h, M, L, T = float(params.h), params.M, params.L, params.T
    q = sum(phase_pulse(params, tau + i * T) for i in range(L))
    return math.pi * h * (M - 1) * tau / T - 2 * math.pi * h * (M - 1) * q + math.pi * h * (M - 1) * (L - 1)


def tilted_phase(params: CpfskParams, phase_state: int, window_symbols, current_symbol: int,
                 tau: float) -> float:
    """Tilted phase in ``[0, 2 pi)`` at offset ``tau`` into the current interval.

    ``window_symbols`` lists the previous ``L - 1`` symbols, most recent first.
    """
    if not 0 <= tau < params.T:
        raise ValueError(f"tau={tau} outside [0, T)")
    window = list(window_symbols)
    if len(window) != params.L - 1:
        raise ValueError(f"window must hold {params.L - 1} symbols")
    symbols = [current_symbol] + window
    if any(not 0 <= s < params.M for s in symbols):
        raise ValueError("symbol out of range")
    h = float(params.h)
    phase = 2 * math.pi * h * (phase_state % params.P)
    for i, mu in enumerate(symbols):
        phase += 4 * math.pi * h * mu * float(phase_pulse(params, tau + i * params.T))
    phase += float(data_independent_phase(params, tau))
    return phase % (2 * math.pi)


@dataclass(frozen=True)
class CpeState:
    phase_state: int = 0
    window: tuple[int, ...] = ()


def branch_id(params: CpfskParams, phase_state: int, window, symbol: int) -> int:
    idx = phase_state
    for s in window:
        idx = idx * params.M + s
    return idx * params.M + symbol


def split_branch_id(params: CpfskParams, b: int) -> tuple[int, tuple[int, ...], int]:
    if not 0 <= b < params.num_branches:
        raise ValueError(f"branch id {b} out of range")
    symbol = b % params.M
    b //= params.M
    window = []
    for _ in range(params.L - 1):
        window.append(b % params.M)
        b //= params.M
    return b, tuple(reversed(window)), symbol


def cpe_step(params: CpfskParams, state: CpeState, symbol: int) -> tuple[CpeState, int]:
    """Advance the phase accumulator by one symbol; return the new state and branch id."""
    if not 0 <= symbol < params.M:
        raise ValueError("symbol out of range")
    if len(state.window) != params.L - 1:
        raise ValueError("window length does not match L")
    b = branch_id(params, state.phase_state, state.window, symbol)
    full = (symbol,) + state.window
    leaving = full[-1]
    nxt = CpeState((state.phase_state + leaving) % params.P, full[:-1])
    return nxt, b


def branch_ids(params: CpfskParams, symbols, start: CpeState | None = None) -> np.ndarray:
    state = start or CpeState(0, (0,) * (params.L - 1))
    out = np.empty(len(symbols), dtype=np.int64)
    for i, s in enumerate(symbols):
        state, out[i] = cpe_step(params, state, int(s))
    return out


def _binary_branch_ids(params: CpfskParams, symbols: np.ndarray) -> np.ndarray:
    """Vectorized branch ids for ``L = 1`` over the last axis."""
    symbols = np.asarray(symbols, dtype=np.int64)
    csum = np.cumsum(symbols, axis=-1) - symbols
    return (csum % params.P) * params.M + symbols


def modulate(params: CpfskParams, symbols) -> np.ndarray:
    """Baseband samples, shape ``(..., len(symbols) * ns)``, starting in phase state 0."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= params.M):
        raise ValueError("symbol out of range")
    if params.L == 1:
        ids = _binary_branch_ids(params, symbols)
    else:
        ids = np.apply_along_axis(lambda s: branch_ids(params, s), -1, symbols)
    wave = params.branch_waveforms[ids]
    return wave.reshape(*symbols.shape[:-1], -1)


def add_awgn(params: CpfskParams, wave: np.ndarray, N0: float, rng: np.random.Generator) -> np.ndarray:
    """Add complex white noise of double-sided density ``2 N0``.

    Each real component has variance ``N0 * ns / T`` per sample, so sample
    correlations scaled by ``T / ns`` match the continuous-time statistics.
    """
    if N0 < 0:
        raise ValueError("N0 must be nonnegative")
    if N0 == 0:
        return np.array(wave, dtype=complex)
    sigma = math.sqrt(N0 * params.ns / params.T)
    noise = rng.standard_normal((2,) + np.shape(wave))
    return wave + sigma * (noise[0] + 1j * noise[1])


def matched_filter_outputs(params: CpfskParams, received: np.ndarray) -> np.ndarray:
    """Correlate each ``ns``-sample interval against every branch waveform.

    ``received`` may hold any number of whole intervals (last axis); the
    result has shape ``(..., n_symbols, P * M**L)``.
    """
    received = np.asarray(received)
    if received.shape[-1] % params.ns:
        raise ValueError("received length is not a whole number of symbol intervals")
    windows = received.reshape(*received.shape[:-1], -1, params.ns)
    return params.dt * (windows @ params.branch_waveforms.conj().T)


def branch_metric(correlations: np.ndarray, b: int) -> float:
    """Correlation metric ``Re r_b``.

    For equal-energy constant-envelope hypotheses the quadratic terms of the
    Gaussian likelihood do not depend on the hypothesis, so maximizing this is
    maximum likelihood.
    """
    if not 0 <= b < np.shape(correlations)[-1]:
        raise ValueError(f"branch id {b} out of range")
    return float(np.real(correlations[..., b]))


def gaussian_metric(params: CpfskParams, correlations: np.ndarray, b: int, N0: float = 1.0) -> float:
    """Full quadratic-form log-likelihood of the matched-filter vector.

    The covariance is proportional to the Gram matrix of the branch waveforms,
    which is singular whenever branches are linearly dependent; the
    pseudo-inverse restricts the form to the signal space.
    """
    basis = params.branch_waveforms
    gram = params.dt * (basis.conj() @ basis.T)  # gram[i, j] = <s_j, s_i>
    cov = 2 * N0 * gram
    mean = gram[:, b]
    diff = np.asarray(correlations) - mean
    return float(-np.real(diff.conj() @ np.linalg.pinv(cov, hermitian=True) @ diff))


def pairwise_nsed(params: CpfskParams, symbols_a, symbols_b) -> float:
    """Normalized squared Euclidean distance of two symbol sequences.

    ``(1 / (4 Es)) * integral |s_a - s_b|**2`` over the complex envelope,
    i.e. passband distance over ``2 Es``.  Both sequences start in phase
    state 0.
    """
    a = np.asarray(symbols_a)
    b = np.asarray(symbols_b)
    if a.shape != b.shape:
        raise ValueError("sequences differ in length")
    diff = modulate(params, a) - modulate(params, b)
    return float(params.dt * np.sum(np.abs(diff) ** 2) / (4 * params.Es))


def interval_nsed_table(params: CpfskParams) -> np.ndarray:
    """``table[w, a, b]``: one-interval NSED between symbol ``a`` from phase
    state ``w`` and symbol ``b`` from phase state 0 (``L = 1`` only)."""
    if params.L != 1:
        raise NotImplementedError("reduced phase-difference states need L = 1")
    P, M = params.P, params.M
    wf = params.branch_waveforms.reshape(P, M, params.ns)
    diff = wf[:, :, None, :] - wf[0][None, None, :, :]
    return params.dt * np.sum(np.abs(diff) ** 2, axis=-1) / (4 * params.Es)
