"""Monte Carlo BER sweeps for the two-hop network-coded CPFSK system.

Every block draws from its own generator seeded by ``(seed, point, block)``,
so results do not depend on how blocks are split across workers.

An end-to-end bit counts as wrong when either hop corrupted it: the relay's
estimate differs from the source bit, or the destination's decision differs
from what the relay forwarded.  This is the event whose probability is
``1 - (1 - Pu)(1 - Pd)``.
"""
from __future__ import annotations

import csv
import logging
import math
import platform
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import __version__
from .bound import BoundPoint, bound_curve, build_product_graph
from .convcode import GeneratorMatrix, encode, parse_generator, render_generator, stack
from .cpfsk import CpfskParams, add_awgn, matched_filter_outputs, modulate
from .nestnet import SideInformation, cancel_known_llr, deinterleave, interleave, known_codeword, unknown_contributors
from .supertrellis import build_super_trellis, decode_code_llr, map_decode, viterbi_decode

log = logging.getLogger(__name__)

UPLINKS = ("perfect", "bpsk-awgn", "bsc")
DOWNLINKS = ("cpfsk-awgn", "bsc")


@dataclass(frozen=True)
class SimConfig:
    sources: tuple[GeneratorMatrix, ...] = ()
    params: CpfskParams = field(default_factory=CpfskParams)
    ebno_db: tuple[float, ...] = (0.0,)
    blocks: int = 1000
    bits_per_block: int = 1000
    seed: int = 0
    uplink: str = "perfect"
    uplink_ebno_db: tuple[float, ...] | None = None  # None: same as downlink point
    uplink_p: float = 0.0
    downlink: str = "cpfsk-awgn"
    downlink_p: float = 0.0
    side_info: tuple[int, ...] = ()
    early_stop: int = 0
    chunk: int = 50
    workers: int = 1

    def __post_init__(self):
        if not self.sources:
            object.__setattr__(self, "sources", default_sources())
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "ebno_db", tuple(float(x) for x in self.ebno_db))
        if self.blocks < 1:
            raise ValueError("blocks must be at least 1")
        if not self.ebno_db:
            raise ValueError("empty Eb/N0 grid")
        if self.bits_per_block < 1 or self.bits_per_block % self.k_joint:
            raise ValueError(f"bits_per_block must be a positive multiple of {self.k_joint}")
        if self.uplink not in UPLINKS:
            raise ValueError(f"uplink must be one of {UPLINKS}")
        if self.downlink not in DOWNLINKS:
            raise ValueError(f"downlink must be one of {DOWNLINKS}")
        if self.uplink_ebno_db is not None and len(self.uplink_ebno_db) != len(self.sources):
            raise ValueError("need one uplink Eb/N0 per source")
        if any(not 0 <= i < len(self.sources) for i in self.side_info):
            raise ValueError("side_info refers to a missing source")
        if len(set(self.side_info)) == len(self.sources):
            raise ValueError("side information covers every source")
        stack(*self.sources)

    @property
    def k_joint(self) -> int:
        return sum(g.k for g in self.sources)

    @property
    def n(self) -> int:
        return self.sources[0].n

    @property
    def rate(self) -> float:
        return self.k_joint / self.n

    @property
    def steps(self) -> int:
        return self.bits_per_block // self.k_joint


def default_sources() -> tuple[GeneratorMatrix, ...]:
    return parse_generator("6,5,1", m=2), parse_generator("7,2,5", m=2)


@dataclass(frozen=True)
class BerPoint:
    ebno_db: float
    bits: int
    errors: int
    ci_low: float
    ci_high: float
    bound_converged: bool | None = None

    @property
    def ber(self) -> float:
        return self.errors / self.bits


def wilson_interval(errors: int, bits: int) -> tuple[float, float]:
    lo, hi = proportion_confint(errors, bits, alpha=0.05, method="wilson")
    return float(lo), float(hi)


class _Pipeline:
    """Per-sweep state shared by every chunk (built once per process)."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.ks = [g.k for g in cfg.sources]
        self.contributors = list(enumerate(cfg.sources))
        self.st = build_super_trellis(list(cfg.sources), cfg.params)
        self.cpe_only = build_super_trellis(None, cfg.params) if cfg.side_info else None

    def run_chunk(self, point: int, first: int, count: int) -> tuple[int, int]:
        cfg = self.cfg
        db = cfg.ebno_db[point]
        rngs = [np.random.default_rng([cfg.seed, point, b]) for b in range(first, first + count)]
        infos = [[rng.integers(0, 2, cfg.steps * k, dtype=np.uint8) for k in self.ks] for rng in rngs]
        relay = self._uplink(infos, rngs, db)
        target = [i for i in range(len(cfg.sources)) if i not in cfg.side_info]
        dest = self._downlink(infos, relay, rngs, db)
        errors = 0
        for b in range(count):
            for i in target:
                wrong = (relay[b][i] != infos[b][i]) | (dest[b][i] != relay[b][i])
                errors += int(wrong.sum())
        bits = count * sum(cfg.steps * self.ks[i] for i in target)
        return errors, bits

    def _uplink(self, infos, rngs, db):
        cfg = self.cfg
        if cfg.uplink == "perfect":
            return [list(x) for x in infos]
        if cfg.uplink == "bsc":
            return [[x ^ (rng.random(x.shape) < cfg.uplink_p).astype(np.uint8) for x in blk]
                    for blk, rng in zip(infos, rngs)]
        out = [[None] * len(self.ks) for _ in infos]
        for i, G in enumerate(cfg.sources):
            up_db = cfg.uplink_ebno_db[i] if cfg.uplink_ebno_db else db
            n0 = 1.0 / (G.rate * 10 ** (up_db / 10))
            rx = []
            for blk, rng in zip(infos, rngs):
                tx = 1.0 - 2.0 * encode(G, blk[i])
                rx.append(tx + math.sqrt(n0 / 2) * rng.standard_normal(tx.shape))
            decoded = decode_code_llr(G, np.stack(rx))
            for b in range(len(infos)):
                out[b][i] = decoded[b]
        return out

    def _downlink(self, infos, relay, rngs, db):
        cfg = self.cfg
        if cfg.downlink == "bsc":
            return [[x ^ (rng.random(x.shape) < cfg.downlink_p).astype(np.uint8) for x in blk]
                    for blk, rng in zip(relay, rngs)]
        joint = np.stack([interleave(blk, self.ks) for blk in relay])
        symbols = np.stack([encode(self.st.code, j) for j in joint])
        n0 = 1.0 / (cfg.rate * 10 ** (db / 10)) * cfg.params.Es
        wave = modulate(cfg.params, symbols)
        rx = np.stack([add_awgn(cfg.params, w, n0, rng) for w, rng in zip(wave, rngs)])
        corr = matched_filter_outputs(cfg.params, rx)
        if not np.all(np.isfinite(corr)):
            raise FloatingPointError(f"non-finite matched-filter output at {db} dB")
        if not cfg.side_info:
            decided = viterbi_decode(self.st, corr)
            parts = deinterleave(decided, self.ks)
            return [[p[b] for p in parts] for b in range(len(relay))]
        llr = map_decode(self.cpe_only, corr, n0)
        out = []
        for b, blk in enumerate(infos):
            side = SideInformation({i: blk[i] for i in cfg.side_info})
            cancelled = cancel_known_llr(llr[b], known_codeword(side, self.contributors, llr.shape[-1]))
            rest = unknown_contributors(side, self.contributors)
            G = stack(*(g for _, g in rest))
            parts = deinterleave(decode_code_llr(G, cancelled), [g.k for _, g in rest])
            row = [None] * len(self.ks)
            for (i, _), bits in zip(rest, parts):
                row[i] = bits
            for i in cfg.side_info:
                row[i] = relay[b][i]
            out.append(row)
        return out


_WORKER_PIPE: _Pipeline | None = None


def _init_worker(cfg: SimConfig):
    global _WORKER_PIPE
    _WORKER_PIPE = _Pipeline(cfg)


def _worker_chunk(job):
    return _WORKER_PIPE.run_chunk(*job)


def _chunks(cfg: SimConfig):
    return [(p, b, min(cfg.chunk, cfg.blocks - b)) for p in range(len(cfg.ebno_db))
            for b in range(0, cfg.blocks, cfg.chunk)]


def run_sweep(cfg: SimConfig, bounds: Sequence[BoundPoint] | None = None) -> list[BerPoint]:
    """Simulate every grid point; deterministic in ``cfg`` (including ``seed``)."""
    jobs = _chunks(cfg)
    results: dict[tuple[int, int], tuple[int, int]] = {}
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cfg,)) as pool:
            for job, res in zip(jobs, pool.map(_worker_chunk, jobs)):
                results[job[:2]] = res
    else:
        pipe = _Pipeline(cfg)
        stopped = set()
        for job in jobs:
            if job[0] in stopped:
                continue
            results[job[:2]] = pipe.run_chunk(*job)
            if cfg.early_stop:
                errs = sum(e for (p, _), (e, _) in results.items() if p == job[0])
                if errs >= cfg.early_stop:
                    stopped.add(job[0])
    points = []
    for p, db in enumerate(cfg.ebno_db):
        errors = bits = 0
        for b in range(0, cfg.blocks, cfg.chunk):
            if (p, b) not in results:
                break
            e, n = results[(p, b)]
            errors += e
            bits += n
            if cfg.early_stop and errors >= cfg.early_stop:
                break
        lo, hi = wilson_interval(errors, bits)
        conv = bounds[p].converged if bounds is not None else None
        points.append(BerPoint(db, bits, errors, lo, hi, conv))
        log.info("%.2f dB: %d errors / %d bits", db, errors, bits)
    return points


def forced_error_ber(p_u: float, p_d: float, bits: int = 10**6, seed: int = 0, **kw) -> BerPoint:
    """End-to-end BER with both hops replaced by binary symmetric channels."""
    block = 1000
    cfg = SimConfig(uplink="bsc", uplink_p=p_u, downlink="bsc", downlink_p=p_d,
                    blocks=-(-bits // block), bits_per_block=block, seed=seed, **kw)
    return run_sweep(cfg)[0]


def compute_bounds(cfg: SimConfig, caps=None) -> list[BoundPoint]:
    graph = build_product_graph(build_super_trellis(list(cfg.sources), cfg.params))
    rates = [g.rate for g in cfg.sources] if cfg.uplink == "bpsk-awgn" else None
    return bound_curve(graph, cfg.ebno_db, rates, cfg.uplink_ebno_db, caps)


CSV_HEADER = ["ebno_db", "ber_sim", "err_bits", "total_bits", "ci_low", "ci_high",
              "pbd_eq14", "pbd_eq18", "pbu", "pb_overall"]
BOUND_HEADER = ["ebno_db", "pbd_eq14", "pbd_eq18", "pbu", "pb_overall", "dmin_sq", "converged"]


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def emit_report(points: Sequence[BerPoint], bounds: Sequence[BoundPoint] | None, out_dir,
                cfg: SimConfig | None = None) -> tuple[Path, Path]:
    """Write ``ber.csv`` and ``manifest.txt`` into ``out_dir``."""
    if not points:
        raise ValueError("no points to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "ber.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, p in enumerate(points):
            bp = bounds[i] if bounds is not None else None
            w.writerow([_fmt(v) for v in (
                p.ebno_db, p.ber, p.errors, p.bits, p.ci_low, p.ci_high,
                bp.pbd_eq14 if bp else None, bp.pbd_eq18 if bp else None,
                bp.pbu if bp else None, bp.pb_overall if bp else None,
            )])
    manifest = out / "manifest.txt"
    entries = config_items(cfg) if cfg is not None else {}
    entries.update({
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "points": str(len(points)),
    })
    manifest.write_text("".join(f"{k} = {v}\n" for k, v in entries.items()))
    return csv_path, manifest


def emit_bounds(bounds: Sequence[BoundPoint], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bound.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUND_HEADER)
        for b in bounds:
            w.writerow([_fmt(v) for v in (b.ebno_db, b.pbd_eq14, b.pbd_eq18, b.pbu, b.pb_overall,
                                          b.dmin_sq, b.converged)])
    return path


def read_report(path) -> list[dict[str, float | None]]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({k: (None if v == "NA" else float(v)) for k, v in row.items()})
    return rows


# -- config files ------------------------------------------------------------

def parse_grid(text: str) -> tuple[float, ...]:
    """``"0:1:10"`` (start:step:stop, inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        start, step, stop = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(count))
    return tuple(float(x) for x in text.split(",") if x.strip())


def load_config(path, **overrides) -> SimConfig:
    items = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key] = value
    return config_from_items(items, **overrides)


def config_from_items(items: dict[str, str], **overrides) -> SimConfig:
    known = {"stack", "memory", "M", "h", "L", "samples_per_symbol", "ebno_db", "blocks",
             "bits_per_block", "seed", "uplink", "uplink_ebno_db", "uplink_p", "downlink",
             "downlink_p", "side_info", "early_stop", "chunk", "workers"}
    extra = set(items) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    kw = {}
    if "stack" in items:
        m = int(items["memory"]) if "memory" in items else None
        kw["sources"] = tuple(parse_generator(row, m=m) for row in items["stack"].split(";") if row.strip())
    kw["params"] = CpfskParams(
        M=int(items.get("M", 2)), h=Fraction(items.get("h", "1/2")),
        L=int(items.get("L", 1)), ns=int(items.get("samples_per_symbol", 8)),
    )
    if "ebno_db" in items:
        kw["ebno_db"] = parse_grid(items["ebno_db"])
    for key in ("blocks", "bits_per_block", "seed", "early_stop", "chunk", "workers"):
        if key in items:
            kw[key] = int(items[key])
    for key in ("uplink_p", "downlink_p"):
        if key in items:
            kw[key] = float(items[key])
    for key in ("uplink", "downlink"):
        if key in items:
            kw[key] = items[key]
    if "uplink_ebno_db" in items:
        kw["uplink_ebno_db"] = tuple(float(x) for x in items["uplink_ebno_db"].split(","))
    if "side_info" in items:
        kw["side_info"] = tuple(int(x) for x in items["side_info"].split(",") if x.strip())
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**kw)


def config_items(cfg: SimConfig) -> dict[str, str]:
    p = cfg.params
    return {
        "stack": ";".join(render_generator(g) for g in cfg.sources),
        "M": str(p.M),
        "h": f"{p.h.numerator}/{p.h.denominator}",
        "L": str(p.L),
        "samples_per_symbol": str(p.ns),
        "ebno_db": ",".join(_fmt(x) for x in cfg.ebno_db),
        "blocks": str(cfg.blocks),
        "bits_per_block": str(cfg.bits_per_block),
        "seed": str(cfg.seed),
        "uplink": cfg.uplink,
        "uplink_ebno_db": ",".join(_fmt(x) for x in cfg.uplink_ebno_db) if cfg.uplink_ebno_db else "tied",
        "uplink_p": _fmt(cfg.uplink_p),
        "downlink": cfg.downlink,
        "downlink_p": _fmt(cfg.downlink_p),
        "side_info": ",".join(str(i) for i in cfg.side_info) or "none",
        "early_stop": str(cfg.early_stop),
    }
