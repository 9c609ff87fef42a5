"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py``.
"""
import json
import random
import time
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest

from bitorder.analytic import (expected_bt_pair, monte_carlo_expected_bt, monte_carlo_std_error,
                               p_transition_one_link)
from bitorder.cli import main
from bitorder.dnnload import WeightSource, init_weights, make_input, make_lenet, reference_forward
from bitorder.experiments import (NO_NOC_BANDS, NOC_O2_BANDS, SIGN_BIT_BAND, NoNocConfig,
                                  affiliated_pair_perms, check_sweep, normalize_sweep,
                                  run_bit_analysis, run_no_noc, run_sweep, sweep_cells,
                                  verify_optimality)
from bitorder.report import PowerParams, data_section, link_power, milliwatts

VERDICTS: dict[int, str] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    VERDICTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def lenet_sweep():
    cells = sweep_cells(["lenet"], ["fixed8", "float32"], ["MC2"], ["O1", "O2"], [0])
    results = run_sweep(cells)
    return results, normalize_sweep(results)


@pytest.fixture(scope="module")
def mc4_cell():
    return run_sweep(sweep_cells(["lenet"], ["fixed8"], ["MC4"], ["O2"], [0]))


def test_1_optimality_oracle():
    t = time.perf_counter()
    res = verify_optimality(3, 8)
    dt = time.perf_counter() - t
    verdict(1, res.passed and dt < 60,
            f"{res.checked_multisets} multisets, counterexample={res.counterexample}, {dt:.1f}s")


def test_2_analytic_model():
    t = time.perf_counter()
    rng = random.Random(0)
    mismatches = 0
    for _ in range(10_000):
        b = rng.randint(1, 64)
        x, y = rng.randint(0, b), rng.randint(0, b)
        if expected_bt_pair(x, y, b) != b * p_transition_one_link(x, y, b):
            mismatches += 1
    mean = monte_carlo_expected_bt(16, 16, 32, trials=100_000, seed=0)
    se = monte_carlo_std_error(16, 16, 32, 100_000)
    dt = time.perf_counter() - t
    ok = mismatches == 0 and abs(mean - 16) <= 3 * se and dt < 10
    verdict(2, ok, f"identity mismatches={mismatches}, MC mean={mean:.4f} (se {se:.4f}), {dt:.1f}s")


def test_3_no_noc_random_rows():
    parts, ok = [], True
    for precision in ("float32", "fixed8"):
        t = time.perf_counter()
        rows, pooled = run_no_noc(NoNocConfig(precision=precision, seeds=[0, 1, 2, 3, 4], flits=10_000))
        per_run = (time.perf_counter() - t) / len(rows)
        lo, hi = NO_NOC_BANDS[precision]
        inside = lo <= pooled.reduction <= hi
        ok &= inside and per_run < 30
        parts.append(f"{precision} {pooled.reduction:.2f}% in [{lo:.2f}, {hi:.2f}]={inside}, {per_run:.1f}s/run")
    verdict(3, ok, "; ".join(parts))


def test_4_order_invariance():
    t = time.perf_counter()
    parts, ok = [], True
    for precision in ("fixed8", "float32"):
        m = make_lenet(precision)
        w = init_weights(m, WeightSource(seed=0))
        x = make_input(m, 0)
        perms = affiliated_pair_perms(m, w, x, precision)
        a = reference_forward(m, w, x)
        b = reference_forward(m, w, x, pair_perms=perms)
        if precision == "fixed8":
            same = np.array_equal(a, b)
            parts.append(f"fixed8 bit-identical={same}")
        else:
            rel = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), np.finfo(np.float64).tiny)))
            same = rel <= 1e-6
            parts.append(f"float32 max rel diff={rel:.2e}")
        ok &= same
    dt = time.perf_counter() - t
    verdict(4, ok and dt < 60, ", ".join(parts) + f", {dt:.1f}s")


@pytest.mark.slow
def test_5_noc_trend(lenet_sweep):
    _, rows = lenet_sweep
    parts = []
    for precision in ("fixed8", "float32"):
        by = {r["scheme"]: r for r in rows if r["precision"] == precision}
        bt = {s: int(by[s]["total_bt"]) for s in ("O0", "O1", "O2")}
        lo, hi = NOC_O2_BANDS[precision]
        parts.append(f"{precision} O0={bt['O0']} O1={bt['O1']} O2={bt['O2']} "
                     f"O2 reduction {by['O2']['reduction_pct']}% vs [{lo:.2f}, {hi:.2f}]")
    misses = check_sweep(rows)
    verdict(5, not misses, "; ".join(parts) + (f"; misses: {misses}" if misses else ""))


@pytest.mark.slow
def test_6_hop_effect(lenet_sweep, mc4_cell):
    results, _ = lenet_sweep
    mc2 = next(r for r in results if r["cell"]["precision"] == "fixed8" and r["cell"]["scheme"] == "O2")
    mc4 = next(r for r in mc4_cell if r["cell"]["scheme"] == "O2")
    a, b = mc2["report"]["total_bt"], mc4["report"]["total_bt"]
    verdict(6, b > a, f"lenet fixed8 O2 seed 0: 8x8/MC4 {b} vs 4x4/MC2 {a}")


@pytest.mark.slow
def test_7_replay_oracle(lenet_sweep, mc4_cell):
    results = lenet_sweep[0] + mc4_cell
    bad = [r["cell"] for r in results if r["replay_ok"] is not True]
    verdict(7, not bad, f"{len(results) - len(bad)}/{len(results)} cells replay exactly")


def test_8_power_arithmetic():
    ours, banerjee = PowerParams(), PowerParams(energy_per_toggle=0.532e-12)
    got = [milliwatts(link_power(ours)), milliwatts(link_power(banerjee)),
           milliwatts(link_power(ours, 40.85))]
    want = [Decimal("155.008"), Decimal("476.672"), Decimal("91.688")]
    verdict(8, got == want, ", ".join(f"{g} mW (want {w})" for g, w in zip(got, want)))


def payload(path):
    """Data part of an output file, without the echo of config and version."""
    if path.suffix == ".json":
        body = json.loads(path.read_text())
        body.pop("echo", None)
        return body
    return data_section(path.read_text())


def test_9_determinism(tmp_path):
    commands = [
        ["no-noc", "--precision", "fixed8", "--flits", "2000", "--seed", "3"],
        ["bit-analysis", "--flits", "2000", "--seed", "3"],
        ["noc-sweep", "--precision", "fixed8", "--scheme", "O2", "--neuron-stride", "32", "--seed", "3"],
        ["verify-optimality", "--max-n", "2", "--max-b", "6"],
    ]
    differing = []
    for i, cmd in enumerate(commands):
        texts = []
        for rep in range(2):
            out = tmp_path / f"{i}_{rep}"
            assert main(cmd + ["--out", str(out)]) == 0
            texts.append({p.relative_to(out): payload(p) for p in sorted(out.rglob("*")) if p.is_file()})
        if texts[0] != texts[1] or not texts[0]:
            differing.append(cmd[0])
    verdict(9, not differing, f"{len(commands)} commands repeated, differing={differing}")


def test_10_bit_distribution():
    base, ordered = run_bit_analysis(NoNocConfig(precision="float32", seeds=[0], flits=10_000))
    sign = float(base.p_one[0])
    lo, hi = SIGN_BIT_BAND
    tb, to = float(base.p_transition.mean()), float(ordered.p_transition.mean())
    verdict(10, lo <= sign <= hi and to <= tb,
            f"sign-bit P(1)={sign:.4f}, mean P(tr) baseline {tb:.4f} ordered {to:.4f}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
