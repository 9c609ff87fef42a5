from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bitorder.bitcore import BitWord, Flit, popcount_array
from bitorder.ordering import (Layout, OrderingScheme, PairBlock, PermutationIndex,
                               affiliated_order, affiliated_order_flit, combine_halves, deorder,
                               deorder_array, index_overhead_bits, interleave_pair_array,
                               order_array, order_flits, pack_pairs_into_flits,
                               separated_order_flit, sort_flit_descending)
from bitorder.report import stream_bt

# words with popcounts 0..8 for building flits by count
BY_COUNT = {c: (1 << c) - 1 for c in range(9)}


def flit_from_counts(ins, wts):
    return Flit(tuple(BY_COUNT[c] for c in ins) + tuple(BY_COUNT[c] for c in wts), 8)


half_half = st.integers(1, 6).flatmap(
    lambda h: st.lists(st.integers(0, 255), min_size=2 * h, max_size=2 * h)).map(lambda ws: Flit(tuple(ws), 8))


class TestParsing:
    def test_scheme_aliases(self):
        assert OrderingScheme.parse("affiliated") is OrderingScheme.O1
        assert OrderingScheme.parse("o2") is OrderingScheme.O2
        with pytest.raises(ValueError):
            OrderingScheme.parse("O3")

    def test_layout(self):
        assert Layout.parse("Weights-Only") is Layout.WEIGHTS_ONLY
        with pytest.raises(ValueError):
            Layout.parse("diagonal")

    def test_permutation_index(self):
        assert PermutationIndex((2, 0, 1)).bits_per_index == 2
        assert PermutationIndex.identity(4).is_identity
        with pytest.raises(ValueError):
            PermutationIndex((0, 0, 1))


class TestPacking:
    def test_split_and_pad(self):
        block = PairBlock((1, 2, 3), (4, 5, 6), 8)
        flits = pack_pairs_into_flits(block, 4)
        assert [f.words for f in flits] == [(1, 2, 4, 5), (3, 0, 6, 0)]
        assert flits[1].pad_mask == (False, True, False, True)

    def test_bad_vpf(self):
        with pytest.raises(ValueError):
            pack_pairs_into_flits(PairBlock((1,), (1,), 8), 3)

    def test_from_pairs_width(self):
        with pytest.raises(ValueError):
            PairBlock.from_pairs([(BitWord(8, 1), BitWord(32, 1))])
        b = PairBlock.from_pairs([(BitWord(8, 1), BitWord(8, 2))], neuron_id=3)
        assert b.pairs == [(BitWord(8, 1), BitWord(8, 2))] and b.neuron_id == 3


class TestSort:
    def test_descending(self):
        f = Flit((BY_COUNT[1], BY_COUNT[3], BY_COUNT[2]), 8)
        out, perm = sort_flit_descending(f)
        assert out.popcounts() == [3, 2, 1]
        assert perm.perm == (1, 2, 0)
        assert deorder(out, perm) == f

    def test_stable_ties(self):
        f = Flit((0x01, 0x02, 0x04), 8)
        out, perm = sort_flit_descending(f)
        assert out == f and perm.is_identity


class TestAffiliated:
    def test_example(self):
        # weights counts [1,5,3] -> pairs follow their weights
        f = flit_from_counts([2, 7, 4], [1, 5, 3])
        out, _ = affiliated_order_flit(f)
        assert out.popcounts() == [7, 4, 2, 5, 3, 1]

    def test_sorted_is_identity(self):
        f = flit_from_counts([1, 2, 3], [6, 4, 1])
        out, perm = affiliated_order_flit(f)
        assert out == f and perm.is_identity

    def test_odd_slots_rejected(self):
        with pytest.raises(ValueError):
            affiliated_order_flit(Flit((1, 2, 3), 8))

    @given(half_half)
    def test_pairs_preserved(self, f):
        h = f.slots // 2
        out, perm = affiliated_order_flit(f)
        pairs = lambda g: Counter(zip(g.words[:h], g.words[h:]))
        assert pairs(out) == pairs(f)
        counts = out.popcounts()[h:]
        assert counts == sorted(counts, reverse=True)
        assert deorder(out, perm) == f


class TestSeparated:
    def test_example(self):
        f = flit_from_counts([4, 1], [2, 7])
        out, pin, pw = separated_order_flit(f)
        assert out.popcounts() == [4, 1, 7, 2]
        assert pin.perm == (0, 1) and pw.perm == (1, 0)

    def test_sorted_identity(self):
        f = flit_from_counts([5, 3], [8, 0])
        _, pin, pw = separated_order_flit(f)
        assert pin.is_identity and pw.is_identity

    @given(half_half)
    def test_round_trip_and_descending(self, f):
        h = f.slots // 2
        out, pin, pw = separated_order_flit(f)
        assert Counter(out.words) == Counter(f.words)
        c = out.popcounts()
        assert c[:h] == sorted(c[:h], reverse=True) and c[h:] == sorted(c[h:], reverse=True)
        assert deorder(out, combine_halves(pin, pw)) == f


class TestDeorder:
    def test_identity(self):
        f = Flit((3, 1, 2), 8)
        assert deorder(f, PermutationIndex.identity(3)) == f

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            deorder(Flit((3, 1, 2), 8), (0, 1))

    @given(st.permutations(range(6)), st.lists(st.integers(0, 255), min_size=6, max_size=6))
    def test_random_perm_round_trip(self, perm, words):
        f = Flit(tuple(words), 8)
        moved = Flit(tuple(f.words[p] for p in perm), 8)
        assert deorder(moved, perm) == f


class TestOverhead:
    @pytest.mark.parametrize("scheme,vpf,bits", [("O1", 16, 0), ("O0", 16, 0), ("O2", 16, 24),
                                                 ("O2", 2, 0), ("O2", 8, 8)])
    def test_bits(self, scheme, vpf, bits):
        assert index_overhead_bits(scheme, vpf) == bits


class TestArrayKernels:
    @given(st.integers(0, 2**16), st.sampled_from(["O0", "O1", "O2"]),
           st.sampled_from(["half-half", "weights-only"]))
    def test_matches_flit_ops(self, seed, scheme, layout):
        rng = np.random.default_rng(seed)
        words = rng.integers(0, 256, size=(5, 8)).astype(np.uint32)
        ordered, perm = order_array(words, scheme, layout)
        assert np.array_equal(deorder_array(ordered, perm), words)
        for row, got in zip(words.tolist(), ordered.tolist()):
            f = Flit(tuple(row), 8)
            if layout == "weights-only" and scheme != "O0":
                want = sort_flit_descending(f)[0]
            else:
                want = order_flits([f], scheme)[0]
            assert tuple(got) == want.words

    def test_interleave_pair_array(self):
        a = np.array([[BY_COUNT[7], BY_COUNT[1]]], dtype=np.uint32)
        b = np.array([[BY_COUNT[4], BY_COUNT[2]]], dtype=np.uint32)
        x, y = interleave_pair_array(a, b)
        assert popcount_array(x).tolist() == [[7, 2]] and popcount_array(y).tolist() == [[4, 1]]

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            order_array(np.zeros(4, dtype=np.uint32), "O1")
        with pytest.raises(ValueError):
            order_array(np.zeros((2, 3), dtype=np.uint32), "O1")


class TestStatisticalReduction:
    @pytest.mark.parametrize("width", [8, 32])
    def test_mean_bt_ordering(self, width):
        rng = np.random.default_rng(99)
        n, slots = 2000, 8
        if width == 32:
            vals = rng.uniform(-0.2, 0.2, size=(n, slots)).astype(np.float32)
            words = vals.view(np.uint32)
        else:
            words = rng.integers(-40, 40, size=(n, slots)).astype(np.int8).view(np.uint8).astype(np.uint32)
        bt = {s: stream_bt(order_array(words, s, "half-half")[0]) for s in ("O0", "O1", "O2")}
        assert bt["O2"] <= bt["O1"] < bt["O0"]


class TestOrderInvariance:
    @given(st.lists(st.tuples(st.integers(-128, 127), st.integers(-128, 127)), min_size=1, max_size=24))
    def test_fixed8_dot_product_exact(self, pairs):
        raw = lambda v: v & 0xFF
        signed = lambda r: r - 256 if r & 0x80 else r
        block = PairBlock(tuple(raw(a) for a, _ in pairs), tuple(raw(b) for _, b in pairs), 8)
        dot = lambda ins, ws: sum(signed(a) * signed(b) for a, b in zip(ins, ws))
        before = dot(block.inputs, block.weights)
        after = 0
        for f in affiliated_order(pack_pairs_into_flits(block, 8)):
            after += dot(f.words[:4], f.words[4:])
        assert after == before

    @given(st.lists(st.tuples(st.floats(-4, 4, width=32), st.floats(-4, 4, width=32)), min_size=1, max_size=24))
    def test_float32_dot_product_close(self, pairs):
        a = np.array([p[0] for p in pairs], dtype=np.float32)
        w = np.array([p[1] for p in pairs], dtype=np.float32)
        block = PairBlock(tuple(a.view(np.uint32).tolist()), tuple(w.view(np.uint32).tolist()), 32)
        before = np.float32(0)
        for x, y in zip(a, w):
            before = np.float32(before + x * y)
        after = np.float32(0)
        for f in affiliated_order(pack_pairs_into_flits(block, 8)):
            xs = np.array(f.words[:4], dtype=np.uint32).view(np.float32)
            ys = np.array(f.words[4:], dtype=np.uint32).view(np.float32)
            for x, y in zip(xs, ys):
                after = np.float32(after + x * y)
        scale = float(np.sum(np.abs(a.astype(np.float64) * w)))
        assert abs(float(after) - float(before)) <= 1e-6 * scale + 1e-30
