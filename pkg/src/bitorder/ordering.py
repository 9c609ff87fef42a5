"""Popcount-based flit ordering: affiliated (O1) and separated (O2) schemes.

Packed operand flits hold ``h`` inputs in slots ``0..h-1`` and the matching
weights in slots ``h..2h-1``; slot ``i`` pairs with slot ``h + i``. All sorts
are descending by '1'-bit count and stable, so ties keep their original order.
A permutation maps sorted position -> original position.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bitcore import BitWord, Flit, FlitKind, popcount_array, swar_popcount


class OrderingScheme(enum.Enum):
    O0 = "O0"
    O1 = "O1"
    O2 = "O2"

    @classmethod
    def parse(cls, value) -> "OrderingScheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        aliases = {"BASELINE": "O0", "AFFILIATED": "O1", "SEPARATED": "O2"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown ordering scheme {value!r}; use O0, O1 or O2") from None


class Layout(enum.Enum):
    HALF_HALF = "half-half"
    WEIGHTS_ONLY = "weights-only"

    @classmethod
    def parse(cls, value) -> "Layout":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown flit layout {value!r}") from None


@dataclass(frozen=True)
class PermutationIndex:
    perm: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        object.__setattr__(self, "perm", perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"not a permutation of 0..{len(perm) - 1}: {perm}")

    @property
    def slots(self) -> int:
        return len(self.perm)

    @property
    def bits_per_index(self) -> int:
        return math.ceil(math.log2(self.slots)) if self.slots > 1 else 0

    @property
    def is_identity(self) -> bool:
        return all(i == p for i, p in enumerate(self.perm))

    @classmethod
    def identity(cls, n: int) -> "PermutationIndex":
        return cls(tuple(range(n)))


@dataclass(frozen=True)
class PairBlock:
    """Operands of one neuron's multiply-accumulate, kept as raw patterns."""

    inputs: tuple[int, ...]
    weights: tuple[int, ...]
    width: int
    neuron_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(v) for v in self.inputs))
        object.__setattr__(self, "weights", tuple(int(v) for v in self.weights))
        if len(self.inputs) != len(self.weights):
            raise ValueError("every input needs a weight")
        limit = 1 << self.width
        for v in self.inputs + self.weights:
            if not 0 <= v < limit:
                raise ValueError(f"value {v:#x} does not fit in {self.width} bits")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[BitWord, BitWord]], neuron_id: int = 0) -> "PairBlock":
        if not pairs:
            raise ValueError("use PairBlock((), (), width) for an empty block")
        widths = {w.width for p in pairs for w in p}
        if len(widths) != 1:
            raise ValueError(f"inputs and weights must share one width, got {sorted(widths)}")
        return cls(tuple(p[0].raw for p in pairs), tuple(p[1].raw for p in pairs),
                   widths.pop(), neuron_id)

    @property
    def pairs(self) -> list[tuple[BitWord, BitWord]]:
        return [(BitWord(self.width, a), BitWord(self.width, b))
                for a, b in zip(self.inputs, self.weights)]

    def __len__(self):
        return len(self.inputs)


# --------------------------------------------------------------------------
# vectorised kernels over (n_flits, slots) arrays of raw words


def descending_perm(counts: np.ndarray) -> np.ndarray:
    """Row-wise stable argsort of ``counts`` in descending order."""
    return np.argsort(-np.asarray(counts, dtype=np.int64), axis=-1, kind="stable")


def order_array(words, scheme, layout=Layout.HALF_HALF) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``scheme`` to every row; returns (ordered words, full-slot permutation).

    With the weights-only layout every row is a flit of weights and both O1
    and O2 reduce to a plain descending sort.
    """
    scheme = OrderingScheme.parse(scheme)
    layout = Layout.parse(layout)
    x = np.asarray(words)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D (flits, slots) array, got shape {x.shape}")
    n, slots = x.shape
    if scheme is OrderingScheme.O0:
        return x.copy(), np.broadcast_to(np.arange(slots), (n, slots)).copy()
    if layout is Layout.WEIGHTS_ONLY:
        perm = descending_perm(popcount_array(x))
        return np.take_along_axis(x, perm, axis=1), perm
    if slots % 2:
        raise ValueError(f"half-half flits need an even slot count, got {slots}")
    h = slots // 2
    w_perm = descending_perm(popcount_array(x[:, h:]))
    if scheme is OrderingScheme.O1:
        in_perm = w_perm
    else:
        in_perm = descending_perm(popcount_array(x[:, :h]))
    perm = np.concatenate([in_perm, w_perm + h], axis=1)
    return np.take_along_axis(x, perm, axis=1), perm


def deorder_array(words, perm) -> np.ndarray:
    x = np.asarray(words)
    out = np.empty_like(x)
    np.put_along_axis(out, np.asarray(perm), x, axis=1)
    return out


def interleave_pair_array(first, second) -> tuple[np.ndarray, np.ndarray]:
    """Two-flit interleaved descending arrangement, row by row.

    The ``2N`` words of each flit pair are ranked by popcount and dealt
    alternately, giving ``x1 >= y1 >= x2 >= ... >= yN`` across the two flits.
    """
    a = np.asarray(first)
    b = np.asarray(second)
    if a.shape != b.shape:
        raise ValueError(f"flit arrays differ in shape: {a.shape} vs {b.shape}")
    both = np.concatenate([a, b], axis=1)
    ranked = np.take_along_axis(both, descending_perm(popcount_array(both)), axis=1)
    return ranked[:, 0::2], ranked[:, 1::2]


# --------------------------------------------------------------------------
# single-flit operations


def _permute(flit: Flit, perm: Sequence[int]) -> Flit:
    return Flit(tuple(flit.words[p] for p in perm), flit.word_width, flit.kind,
                tuple(flit.pad_mask[p] for p in perm))


def _stable_desc(counts: Sequence[int]) -> list[int]:
    return sorted(range(len(counts)), key=lambda i: -counts[i])


def sort_flit_descending(flit: Flit) -> tuple[Flit, PermutationIndex]:
    perm = _stable_desc(flit.popcounts())
    return _permute(flit, perm), PermutationIndex(perm)


def _split_half(flit: Flit) -> int:
    if flit.slots % 2:
        raise ValueError(f"flit with {flit.slots} slots cannot be split into input/weight halves")
    return flit.slots // 2


def pack_pairs_into_flits(block: PairBlock, values_per_flit: int) -> list[Flit]:
    """Inputs fill the first half of each flit, their weights the second half.

    The last flit is zero-padded; padded slots are flagged in ``pad_mask``.
    """
    if values_per_flit <= 0 or values_per_flit % 2:
        raise ValueError(f"values_per_flit must be a positive even number, got {values_per_flit}")
    h = values_per_flit // 2
    flits = []
    n = len(block)
    for start in range(0, n, h):
        ins = list(block.inputs[start:start + h])
        ws = list(block.weights[start:start + h])
        fill = h - len(ins)
        pad = [False] * len(ins) + [True] * fill
        ins += [0] * fill
        ws += [0] * fill
        flits.append(Flit(tuple(ins + ws), block.width, FlitKind.BODY, tuple(pad + pad)))
    return flits


def affiliated_order_flit(flit: Flit) -> tuple[Flit, PermutationIndex]:
    h = _split_half(flit)
    w_counts = [swar_popcount(w, flit.word_width) for w in flit.words[h:]]
    order = _stable_desc(w_counts)
    perm = order + [h + i for i in order]
    return _permute(flit, perm), PermutationIndex(perm)


def affiliated_order(flits: Sequence[Flit]) -> list[Flit]:
    return [affiliated_order_flit(f)[0] for f in flits]


def separated_order_flit(flit: Flit) -> tuple[Flit, PermutationIndex, PermutationIndex]:
    h = _split_half(flit)
    counts = flit.popcounts()
    in_order = _stable_desc(counts[:h])
    w_order = _stable_desc(counts[h:])
    perm = in_order + [h + i for i in w_order]
    return _permute(flit, perm), PermutationIndex(in_order), PermutationIndex(w_order)


def separated_order(flits: Sequence[Flit]) -> tuple[list[Flit], list[PermutationIndex], list[PermutationIndex]]:
    out, in_perms, w_perms = [], [], []
    for f in flits:
        g, pi, pw = separated_order_flit(f)
        out.append(g)
        in_perms.append(pi)
        w_perms.append(pw)
    return out, in_perms, w_perms


def combine_halves(input_perm: PermutationIndex, weight_perm: PermutationIndex) -> PermutationIndex:
    h = input_perm.slots
    if weight_perm.slots != h:
        raise ValueError("input and weight halves differ in size")
    return PermutationIndex(input_perm.perm + tuple(h + p for p in weight_perm.perm))


def deorder(flit: Flit, perm: PermutationIndex | Sequence[int]) -> Flit:
    """Undo an ordering: the word at sorted position ``j`` returns to ``perm[j]``."""
    if not isinstance(perm, PermutationIndex):
        perm = PermutationIndex(tuple(perm))
    if perm.slots != flit.slots:
        raise ValueError(f"permutation covers {perm.slots} slots, flit has {flit.slots}")
    words = [0] * flit.slots
    pads = [False] * flit.slots
    for j, p in enumerate(perm.perm):
        words[p] = flit.words[j]
        pads[p] = flit.pad_mask[j]
    return Flit(tuple(words), flit.word_width, flit.kind, tuple(pads))


def order_flits(flits: Sequence[Flit], scheme) -> list[Flit]:
    scheme = OrderingScheme.parse(scheme)
    if scheme is OrderingScheme.O0:
        return list(flits)
    if scheme is OrderingScheme.O1:
        return affiliated_order(flits)
    return separated_order(flits)[0]


def index_overhead_bits(scheme, values_per_flit: int) -> int:
    """Recovery-index bits per flit; only one half needs an index to re-pair."""
    scheme = OrderingScheme.parse(scheme)
    if scheme is not OrderingScheme.O2:
        return 0
    half = values_per_flit // 2
    if half <= 1:
        return 0
    return half * math.ceil(math.log2(half))
