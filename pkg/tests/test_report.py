from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bitorder.bitcore import Flit, WidthMismatchError, bit_transitions, float32_raw
from bitorder.ordering import order_array
from bitorder.report import (BIT_POSITION_FIELDS, BitPositionHistogram, PowerParams,
                             UndefinedRateError, accumulate_bits, bit_position_rows,
                             bt_reduction_rate, data_section, flit_histogram, link_power,
                             milliwatts, read_csv, stream_bt, summarize_no_noc, write_csv)

words8 = st.lists(st.integers(0, 255), max_size=40)


class TestHistogram:
    def test_all_zero(self):
        h = accumulate_bits(BitPositionHistogram(8), [0] * 20)
        assert np.all(h.p_one == 0) and np.all(h.p_transition == 0)

    def test_alternating(self):
        h = accumulate_bits(BitPositionHistogram(8), [0x00, 0xFF] * 10)
        assert np.all(h.p_transition == 1.0)
        assert np.all(h.p_one == 0.5)

    def test_float_exponent_prefix(self):
        vals = np.random.default_rng(0).uniform(1, 2, 5000).astype(np.float32)
        vals = vals[vals < 2]
        h = accumulate_bits(BitPositionHistogram(32), float32_raw(vals))
        # 0x3F8..: sign 0, exponent 0b01111111 fixed for [1, 2)
        assert h.p_one[0] == 0 and h.p_one[1] == 0
        assert np.all(h.p_one[2:9] == 1)
        assert np.all(h.p_transition[:9] == 0)

    def test_width_checks(self):
        with pytest.raises(WidthMismatchError):
            BitPositionHistogram(16)
        with pytest.raises(WidthMismatchError):
            accumulate_bits(BitPositionHistogram(8), [256])
        with pytest.raises(WidthMismatchError):
            BitPositionHistogram(8).merge(BitPositionHistogram(32))

    @given(words8, words8)
    def test_chunked_equals_whole(self, a, b):
        whole = accumulate_bits(BitPositionHistogram(8), a + b)
        chunked = accumulate_bits(accumulate_bits(BitPositionHistogram(8), a), b)
        assert whole == chunked

    @given(words8)
    def test_transitions_sum_to_bt(self, ws):
        h = accumulate_bits(BitPositionHistogram(8), ws)
        flits = [Flit((w,), 8) for w in ws]
        assert h.transitions_count.sum() == sum(bit_transitions(x, y) for x, y in zip(flits, flits[1:]))
        assert np.all(h.ones_count <= h.samples) and np.all(h.transitions_count <= h.pairs)
        assert np.all((0 <= h.p_one) & (h.p_one <= 1))

    @given(words8, words8, words8)
    def test_merge_associative_commutative(self, a, b, c):
        ha, hb, hc = (accumulate_bits(BitPositionHistogram(8), x) for x in (a, b, c))
        assert ha.merge(hb) == hb.merge(ha)
        assert ha.merge(hb).merge(hc) == ha.merge(hb.merge(hc))

    def test_flit_histogram_per_slot(self):
        flits = np.array([[0x00, 0xFF], [0xFF, 0xFF], [0x00, 0xFF]], dtype=np.uint32)
        h = flit_histogram(flits, 8)
        assert h.samples == 6 and h.pairs == 4
        assert h.transitions_count.sum() == stream_bt(flits) == 16

    def test_ordered_below_baseline(self):
        rng = np.random.default_rng(2)
        flits = rng.integers(-30, 30, size=(3000, 8)).astype(np.int8).view(np.uint8).astype(np.uint32)
        base = flit_histogram(flits, 8)
        ordered = flit_histogram(order_array(flits, "O1", "weights-only")[0], 8)
        assert ordered.p_transition.mean() <= base.p_transition.mean()


class TestRates:
    def test_table_float_row(self):
        assert round(bt_reduction_rate(113.27, 90.18), 2) == 20.38

    def test_table_fixed_trained_row(self):
        # the computed value, not the printed 55.71
        assert round(bt_reduction_rate(30.55, 13.73), 2) == 55.06

    def test_equal_and_zero(self):
        assert bt_reduction_rate(50, 50) == 0
        with pytest.raises(UndefinedRateError):
            bt_reduction_rate(0, 5)

    @given(st.integers(1, 10**9), st.integers(0, 10**9))
    def test_sign(self, b, o):
        r = bt_reduction_rate(b, o)
        assert (r > 0) == (o < b)
        if o > 0:
            assert (bt_reduction_rate(o, b) < 0) == (r > 0)


class TestPower:
    def test_reference_figures(self):
        assert milliwatts(link_power(PowerParams())) == Decimal("155.008")
        assert milliwatts(link_power(PowerParams(energy_per_toggle=0.532e-12))) == Decimal("476.672")

    def test_reduced(self):
        mw = milliwatts(link_power(PowerParams(), reduction_pct=40.85))
        assert mw == Decimal("91.687232")
        assert round(mw, 2) == Decimal("91.69")

    @pytest.mark.parametrize("field", ["energy_per_toggle", "link_width", "link_count", "frequency"])
    def test_linear(self, field):
        p = PowerParams()
        doubled = PowerParams(**{field: getattr(p, field) * 2})
        assert link_power(doubled) == 2 * link_power(p)

    def test_activity_linear_and_checked(self):
        assert link_power(PowerParams(activity=0.25)) * 2 == link_power(PowerParams())
        with pytest.raises(ValueError):
            PowerParams(activity=0)
        with pytest.raises(ValueError):
            PowerParams(link_count=0)


class TestNoNoc:
    def test_identical_flits(self):
        with pytest.raises(UndefinedRateError):
            summarize_no_noc(np.full((10, 8), 7, dtype=np.uint32), "O1")

    def test_too_few(self):
        with pytest.raises(ValueError):
            summarize_no_noc(np.zeros((1, 8), dtype=np.uint32), "O1")

    def test_two_flits(self):
        s = summarize_no_noc(np.array([[1, 3], [3, 0]], dtype=np.uint32), "O1", seed=0)
        assert s.pairs == 1 and s.total_bt_baseline > 0

    def test_seed_reproducible(self):
        rng = np.random.default_rng(0)
        f = rng.integers(0, 256, (500, 8)).astype(np.uint32)
        a, b = summarize_no_noc(f, "O2", 4), summarize_no_noc(f, "O2", 4)
        assert a.row() == b.row()
        assert a.mean_bt_ordered < a.mean_bt_baseline


class TestCsv:
    def test_round_trip(self):
        text = write_csv([{"a": 1, "b": 2}], ["a", "b"], {"x": 1}, seed=[3])
        echo, rows = read_csv(text)
        assert echo["seed"] == [3] and echo["config"] == {"x": 1} and echo["schema"] == 1
        assert rows == [{"a": "1", "b": "2"}]
        assert data_section(text) == "a,b\n1,2\n"

    def test_bit_position_schema(self):
        h = accumulate_bits(BitPositionHistogram(8), [1, 2, 3])
        rows = bit_position_rows(h, h)
        assert list(rows[0]) == BIT_POSITION_FIELDS == [
            "bit_position", "p_one_baseline", "p_one_ordered", "p_tr_baseline", "p_tr_ordered"]
        assert len(rows) == 8

    def test_missing_header(self):
        with pytest.raises(ValueError):
            read_csv("a,b\n1,2\n")
