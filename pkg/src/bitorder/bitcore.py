"""Fixed-width words, flits, popcount and bit-transition counting.

Scalar paths work on Python ints; the ``*_array`` helpers are the vectorised
numpy equivalents used by the batch experiments.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

WORD_WIDTHS = (8, 32)


class WidthMismatchError(ValueError):
    """Two bit patterns of different widths were compared."""


def _check_width(width: int) -> None:
    if width not in WORD_WIDTHS:
        raise ValueError(f"word width must be one of {WORD_WIDTHS}, got {width}")


@dataclass(frozen=True)
class BitWord:
    width: int
    raw: int

    def __post_init__(self):
        _check_width(self.width)
        if not 0 <= self.raw < (1 << self.width):
            raise ValueError(f"raw pattern {self.raw:#x} does not fit in {self.width} bits")

    def popcount(self) -> int:
        return popcount(self)


# --------------------------------------------------------------------------
# popcount

_MASK_CACHE: dict[int, list[tuple[int, int]]] = {}


def _swar_masks(width: int) -> list[tuple[int, int]]:
    # (shift, mask) per reduction level: 0x55.., 0x33.., 0x0f0f.., 0x00ff.., ...
    masks = _MASK_CACHE.get(width)
    if masks is None:
        masks = []
        lane = 1
        while lane < width:
            block = (1 << lane) - 1
            pattern = 0
            for start in range(0, width, 2 * lane):
                pattern |= block << start
            masks.append((lane, pattern))
            lane *= 2
        _MASK_CACHE[width] = masks
    return masks


def swar_popcount(value: int, width: int) -> int:
    """Count set bits of ``value`` by pairwise lane folding.

    Each level adds neighbouring lanes of ``lane`` bits into lanes of twice
    the size, so a ``width``-bit word needs ``ceil(log2(width))`` levels.
    """
    if value < 0 or value >> width:
        raise ValueError(f"value does not fit in {width} bits")
    x = value
    for shift, mask in _swar_masks(width):
        x = (x & mask) + ((x >> shift) & mask)
    return x


def popcount_naive(value: int, width: int) -> int:
    count = 0
    for i in range(width):
        count += (value >> i) & 1
    return count


def popcount(word: BitWord) -> int:
    return swar_popcount(word.raw, word.width)


_M1 = 0x55555555
_M2 = 0x33333333
_M4 = 0x0F0F0F0F


def popcount_array(values) -> np.ndarray:
    """Elementwise popcount of an unsigned integer array (<= 32 bits per element)."""
    x = np.asarray(values)
    if x.dtype.kind not in "ui":
        raise TypeError(f"expected an integer array, got {x.dtype}")
    x = x.astype(np.uint32, copy=True)
    x -= (x >> 1) & _M1
    x = (x & _M2) + ((x >> 2) & _M2)
    x = (x + (x >> 4)) & _M4
    x = (x * np.uint32(0x01010101)) >> 24
    return x.astype(np.int64)


# --------------------------------------------------------------------------
# flits


class FlitKind(enum.Enum):
    HEAD = "head"
    BODY = "body"
    TAIL = "tail"
    HEAD_TAIL = "headtail"

    @property
    def is_head(self) -> bool:
        return self in (FlitKind.HEAD, FlitKind.HEAD_TAIL)

    @property
    def is_tail(self) -> bool:
        return self in (FlitKind.TAIL, FlitKind.HEAD_TAIL)


@dataclass(frozen=True, eq=True)
class Flit:
    """Homogeneous-width words laid out slot 0 at the least significant bits."""

    words: tuple[int, ...]
    word_width: int
    kind: FlitKind = FlitKind.BODY
    pad_mask: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        _check_width(self.word_width)
        words = tuple(int(w) for w in self.words)
        object.__setattr__(self, "words", words)
        if not self.pad_mask:
            object.__setattr__(self, "pad_mask", (False,) * len(words))
        else:
            object.__setattr__(self, "pad_mask", tuple(bool(p) for p in self.pad_mask))
        if len(self.pad_mask) != len(words):
            raise ValueError("pad_mask length must match the number of words")
        limit = 1 << self.word_width
        for w, pad in zip(words, self.pad_mask):
            if not 0 <= w < limit:
                raise ValueError(f"word {w:#x} does not fit in {self.word_width} bits")
            if pad and w != 0:
                raise ValueError("padded slots must hold zero")

    @classmethod
    def from_words(cls, words: Sequence[BitWord], kind: FlitKind = FlitKind.BODY,
                   pad_mask: Sequence[bool] = ()) -> "Flit":
        if not words:
            raise ValueError("a flit needs at least one word")
        widths = {w.width for w in words}
        if len(widths) != 1:
            raise ValueError(f"mixed word widths in one flit: {sorted(widths)}")
        return cls(tuple(w.raw for w in words), widths.pop(), kind, tuple(pad_mask))

    @classmethod
    def _trusted(cls, words: tuple[int, ...], word_width: int, kind: FlitKind,
                 pad_mask: tuple[bool, ...], bits: int) -> "Flit":
        # array-built flits are range-checked in bulk by the caller
        f = object.__new__(cls)
        object.__setattr__(f, "words", words)
        object.__setattr__(f, "word_width", word_width)
        object.__setattr__(f, "kind", kind)
        object.__setattr__(f, "pad_mask", pad_mask)
        f.__dict__["bits"] = bits
        return f

    @property
    def width(self) -> int:
        return len(self.words) * self.word_width

    @property
    def slots(self) -> int:
        return len(self.words)

    @cached_property
    def bits(self) -> int:
        out = 0
        w = self.word_width
        for i, word in enumerate(self.words):
            out |= word << (i * w)
        return out

    def bitwords(self) -> list[BitWord]:
        return [BitWord(self.word_width, w) for w in self.words]

    def popcounts(self) -> list[int]:
        return [swar_popcount(w, self.word_width) for w in self.words]

    def with_kind(self, kind: FlitKind) -> "Flit":
        return Flit(self.words, self.word_width, kind, self.pad_mask)

    @classmethod
    def from_bits(cls, bits: int, word_width: int, slots: int,
                  kind: FlitKind = FlitKind.BODY) -> "Flit":
        mask = (1 << word_width) - 1
        return cls(tuple((bits >> (i * word_width)) & mask for i in range(slots)), word_width, kind)


def hamming(a: int, b: int, width: int) -> int:
    return swar_popcount(a ^ b, width)


def bit_transitions(prev: Flit, nxt: Flit) -> int:
    """Number of wires that change value when ``nxt`` follows ``prev``."""
    if prev.width != nxt.width:
        raise WidthMismatchError(f"flit widths differ: {prev.width} vs {nxt.width}")
    return swar_popcount(prev.bits ^ nxt.bits, prev.width)


# --------------------------------------------------------------------------
# value encodings


def encode_float32(value: float) -> BitWord:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot encode non-finite value {value!r}")
    return BitWord(32, struct.unpack("<I", struct.pack("<f", value))[0])


def decode_float32(word: BitWord | int) -> float:
    raw = word.raw if isinstance(word, BitWord) else int(word)
    return struct.unpack("<f", struct.pack("<I", raw))[0]


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def quantize_fixed8(value: float, scale: float) -> BitWord:
    """Symmetric signed 8-bit quantisation, saturating to [-128, 127]."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    q = _round_half_away(float(value) / scale)
    q = max(-128, min(127, q))
    return BitWord(8, q & 0xFF)


def dequantize_fixed8(word: BitWord | int, scale: float) -> float:
    raw = word.raw if isinstance(word, BitWord) else int(word)
    signed = raw - 256 if raw & 0x80 else raw
    return signed * scale


def fixed8_scale(values) -> float:
    """Per-tensor symmetric scale ``max|v| / 127``.

    An all-zero tensor, or one so small the scale underflows, maps to 1.0.
    """
    peak = float(np.max(np.abs(np.asarray(values, dtype=np.float64)))) if np.size(values) else 0.0
    scale = peak / 127.0
    return scale if scale > 0 else 1.0


def quantize_fixed8_array(values, scale: float) -> np.ndarray:
    """Signed int8 codes (as ``np.int8``) of an array of reals."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    x = np.asarray(values, dtype=np.float64) / scale
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -128, 127).astype(np.int8)


def fixed8_raw(codes) -> np.ndarray:
    return np.asarray(codes, dtype=np.int8).view(np.uint8).astype(np.uint32)


def float32_raw(values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot encode non-finite values")
    return x.view(np.uint32).copy()


# --------------------------------------------------------------------------
# link accounting


@dataclass
class LinkStatsCounter:
    """Toggle accumulator for one directed link; the wire holds its last value.

    ``payload_toggles`` counts the link's non-head flits as their own stream,
    each compared with the previous non-head flit, so head metadata never
    leaks into payload-only figures.
    """

    width: int
    toggles: int = 0
    flits_seen: int = 0
    prev_bits: int = 0
    payload_toggles: int = 0
    payload_flits: int = 0
    prev_payload_bits: int = 0

    def record(self, flit: Flit) -> int:
        if flit.width != self.width:
            raise WidthMismatchError(f"flit width {flit.width} != link width {self.width}")
        bits = flit.bits
        t = (bits ^ self.prev_bits).bit_count()
        self.toggles += t
        self.flits_seen += 1
        if not flit.kind.is_head:
            self.payload_toggles += (bits ^ self.prev_payload_bits).bit_count()
            self.payload_flits += 1
            self.prev_payload_bits = bits
        self.prev_bits = bits
        return t
