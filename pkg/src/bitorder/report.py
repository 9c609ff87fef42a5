"""Statistics behind the experiments: bit-position profiles, reduction rates,
link power and CSV export."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .bitcore import WORD_WIDTHS, WidthMismatchError, popcount_array
from .ordering import Layout, OrderingScheme, order_array

CSV_SCHEMA_VERSION = 1
BIT_POSITION_FIELDS = ["bit_position", "p_one_baseline", "p_one_ordered", "p_tr_baseline", "p_tr_ordered"]
SUMMARY_FIELDS = ["precision", "weights", "layout", "scheme", "seed", "flits", "pairs",
                  "mean_bt_baseline", "mean_bt_ordered", "bt_reduction_rate"]


class UndefinedRateError(ZeroDivisionError):
    """Reduction rate requested against a zero baseline."""


# --------------------------------------------------------------------------
# bit-position histograms


@dataclass
class BitPositionHistogram:
    """Per-position '1' and transition counts over a word stream.

    Position 0 is the most significant bit, so for float32 it is the sign.
    ``last`` remembers the final word so a stream fed in chunks still counts
    the transition across each chunk boundary.
    """

    width: int
    ones_count: np.ndarray = None
    transitions_count: np.ndarray = None
    samples: int = 0
    pairs: int = 0
    last: int | None = None

    def __post_init__(self):
        if self.width not in WORD_WIDTHS:
            raise WidthMismatchError(f"unsupported word width {self.width}")
        if self.ones_count is None:
            self.ones_count = np.zeros(self.width, dtype=np.int64)
        if self.transitions_count is None:
            self.transitions_count = np.zeros(self.width, dtype=np.int64)

    def bit_matrix(self, words: np.ndarray) -> np.ndarray:
        shifts = np.arange(self.width - 1, -1, -1, dtype=np.uint32)
        return ((np.asarray(words, dtype=np.uint32)[:, None] >> shifts) & 1).astype(np.int64)

    @property
    def p_one(self) -> np.ndarray:
        return self.ones_count / self.samples if self.samples else np.zeros(self.width)

    @property
    def p_transition(self) -> np.ndarray:
        return self.transitions_count / self.pairs if self.pairs else np.zeros(self.width)

    def merge(self, other: "BitPositionHistogram") -> "BitPositionHistogram":
        """Combine histograms of independent streams (e.g. sweep shards).

        Counts add, so merging is associative and commutative. The result is
        not a continuation point for further chunks.
        """
        if other.width != self.width:
            raise WidthMismatchError(f"cannot merge {self.width}-bit and {other.width}-bit histograms")
        return BitPositionHistogram(self.width, self.ones_count + other.ones_count,
                                    self.transitions_count + other.transitions_count,
                                    self.samples + other.samples, self.pairs + other.pairs)

    def __eq__(self, other):
        if not isinstance(other, BitPositionHistogram):
            return NotImplemented
        return (self.width == other.width and self.samples == other.samples
                and self.pairs == other.pairs
                and np.array_equal(self.ones_count, other.ones_count)
                and np.array_equal(self.transitions_count, other.transitions_count))


def accumulate_bits(hist: BitPositionHistogram, words: Iterable[int] | np.ndarray) -> BitPositionHistogram:
    """Append ``words`` (raw patterns of ``hist.width`` bits) to ``hist`` in place."""
    arr = np.asarray(words if isinstance(words, np.ndarray) else list(words)).reshape(-1)
    if arr.size == 0:
        return hist
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"expected raw integer words, got {arr.dtype}")
    if arr.min() < 0 or int(arr.max()) >= 1 << hist.width:
        raise WidthMismatchError(f"word does not fit in {hist.width} bits")
    arr = arr.astype(np.uint32)
    if hist.last is not None:
        arr_t = np.concatenate([np.array([hist.last], dtype=np.uint32), arr])
    else:
        arr_t = arr
    hist.ones_count = hist.ones_count + hist.bit_matrix(arr).sum(axis=0)
    if len(arr_t) > 1:
        hist.transitions_count = hist.transitions_count + hist.bit_matrix(arr_t[1:] ^ arr_t[:-1]).sum(axis=0)
    hist.samples += len(arr)
    hist.pairs += len(arr_t) - 1
    hist.last = int(arr[-1])
    return hist


def slot_streams(flits: np.ndarray) -> np.ndarray:
    """(flits, slots) words -> one word stream per slot, i.e. per link wire group."""
    return np.ascontiguousarray(np.asarray(flits).T)


def flit_histogram(flits: np.ndarray, width: int) -> BitPositionHistogram:
    """Profile of every slot's word stream over consecutive flits, merged across slots.

    Transitions are only counted between consecutive flits of the same slot,
    never across slots.
    """
    hist = BitPositionHistogram(width)
    for stream in slot_streams(flits):
        hist = hist.merge(accumulate_bits(BitPositionHistogram(width), stream))
    return hist


# --------------------------------------------------------------------------
# rates and power


def bt_reduction_rate(baseline, ordered) -> float:
    """Percent reduction of ``ordered`` relative to ``baseline``."""
    if baseline == 0:
        raise UndefinedRateError("reduction rate is undefined for a zero baseline")
    if isinstance(baseline, int) and isinstance(ordered, int):
        return float(Fraction(100 * (baseline - ordered), baseline))
    b = Decimal(str(baseline))
    return float(Decimal(100) * (b - Decimal(str(ordered))) / b)


@dataclass(frozen=True)
class PowerParams:
    energy_per_toggle: float = 0.173e-12
    link_width: int = 128
    link_count: int = 112
    frequency: float = 125e6
    activity: float = 0.5

    def __post_init__(self):
        for name in ("energy_per_toggle", "link_width", "link_count", "frequency"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.activity <= 1:
            raise ValueError(f"activity must lie in (0, 1], got {self.activity}")


def link_power(params: PowerParams, reduction_pct: float = 0.0) -> Decimal:
    """Watts switched on all links, optionally after a percentage BT reduction.

    Decimal arithmetic on the decimal literals keeps results like 155.008 mW exact.
    """
    d = lambda v: Decimal(str(v))
    watts = (d(params.energy_per_toggle) * d(params.link_width) * d(params.activity)
             * d(params.link_count) * d(params.frequency))
    return watts * (1 - d(reduction_pct) / 100)


def milliwatts(watts: Decimal) -> Decimal:
    return (watts * 1000).normalize()


# --------------------------------------------------------------------------
# no-NoC summaries


@dataclass
class NoNocSummary:
    scheme: str
    seed: int
    flits: int
    pairs: int
    total_bt_baseline: int
    total_bt_ordered: int
    meta: dict = field(default_factory=dict)

    @property
    def mean_bt_baseline(self) -> float:
        return self.total_bt_baseline / self.pairs

    @property
    def mean_bt_ordered(self) -> float:
        return self.total_bt_ordered / self.pairs

    @property
    def reduction(self) -> float:
        return bt_reduction_rate(self.total_bt_baseline, self.total_bt_ordered)

    def row(self) -> dict:
        return {
            "precision": self.meta.get("precision", ""), "weights": self.meta.get("weights", ""),
            "layout": self.meta.get("layout", ""), "scheme": self.scheme, "seed": self.seed,
            "flits": self.flits, "pairs": self.pairs,
            "mean_bt_baseline": f"{self.mean_bt_baseline:.2f}",
            "mean_bt_ordered": f"{self.mean_bt_ordered:.2f}",
            "bt_reduction_rate": f"{self.reduction:.2f}",
        }


def stream_bt(flits: np.ndarray) -> int:
    """Sum of bit transitions between consecutive rows of a (flits, slots) array."""
    f = np.asarray(flits, dtype=np.uint32)
    if len(f) < 2:
        return 0
    return int(popcount_array(f[1:] ^ f[:-1]).sum())


def summarize_no_noc(flits, scheme, seed: int = 0, layout=Layout.WEIGHTS_ONLY,
                     meta: dict | None = None) -> NoNocSummary:
    """Shuffle with ``seed``, pair consecutive flits, compare O0 with ``scheme``.

    Each flit is ordered on its own before streaming. Raises ``ValueError``
    for fewer than two flits and :class:`UndefinedRateError` when the
    baseline stream has no transitions at all.
    """
    f = np.asarray(flits, dtype=np.uint32)
    if f.ndim != 2 or len(f) < 2:
        raise ValueError("need at least two flits to compare")
    scheme = OrderingScheme.parse(scheme)
    rng = np.random.default_rng(seed)
    f = f[rng.permutation(len(f))]
    ordered, _ = order_array(f, scheme, layout)
    base = stream_bt(f)
    if base == 0:
        raise UndefinedRateError("baseline stream has no bit transitions")
    return NoNocSummary(scheme.value, seed, len(f), len(f) - 1, base, stream_bt(ordered), dict(meta or {}))


# --------------------------------------------------------------------------
# export


def echo_header(config: dict, seed: int | None = None) -> str:
    """Comment line heading every CSV: schema version, toolkit version, seed, config."""
    payload = {"schema": CSV_SCHEMA_VERSION, "version": __version__, "seed": seed, "config": config}
    return "# " + json.dumps(payload, sort_keys=True) + "\n"


def write_csv(rows: Sequence[dict], fields: Sequence[str], config: dict, seed: int | None = None) -> str:
    buf = io.StringIO()
    buf.write(echo_header(config, seed))
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def read_csv(text: str) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`: (echo, rows)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("missing echo header")
    echo = json.loads(lines[0][2:])
    return echo, list(csv.DictReader(lines[1:]))


def bit_position_rows(baseline: BitPositionHistogram, ordered: BitPositionHistogram) -> list[dict]:
    if baseline.width != ordered.width:
        raise WidthMismatchError("baseline and ordered histograms differ in width")
    p1b, p1o, ptb, pto = baseline.p_one, ordered.p_one, baseline.p_transition, ordered.p_transition
    return [{"bit_position": i, "p_one_baseline": f"{p1b[i]:.6f}", "p_one_ordered": f"{p1o[i]:.6f}",
             "p_tr_baseline": f"{ptb[i]:.6f}", "p_tr_ordered": f"{pto[i]:.6f}"}
            for i in range(baseline.width)]


def data_section(text: str) -> str:
    """Everything below the echo line; the part that must be reproducible byte for byte."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))
