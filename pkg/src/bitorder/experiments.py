"""Experiment runners behind the command line: flit generation, the no-NoC
comparison, NoC sweeps, bit-position analysis and the optimality check.

Every runner returns plain data; writing files and exit codes belong to the CLI.
"""
from __future__ import annotations

import itertools
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analytic import brute_force_max_f, exchange_lemma_holds, interleaved_descending
from .bitcore import fixed8_raw, fixed8_scale, float32_raw, quantize_fixed8_array
from .dnnload import (Precision, WeightSource, forward_trace, init_weights, make_input, make_model,
                      raw_operands)
from .nocsim import ConfigError, MeshConfig, SimConfig, default_mc_positions, simulate, verify_replay
from .nocsim.traffic import pack_operand_array
from .ordering import Layout, OrderingScheme, order_array
from .report import (BitPositionHistogram, NoNocSummary, bt_reduction_rate, flit_histogram,
                     summarize_no_noc)

VALUES_PER_FLIT = 16

# Reduction-rate windows (percent) used by ``--check``.
NO_NOC_BANDS = {"float32": (17.38, 23.38), "fixed8": (23.70, 31.70)}
NOC_O2_BANDS = {"fixed8": (10.95, 41.93), "float32": (17.30, 38.01)}
SIGN_BIT_BAND = (0.48, 0.52)


# --------------------------------------------------------------------------
# flit generation


def raw_words(values: np.ndarray, precision) -> np.ndarray:
    """Raw patterns of a whole tensor; fixed-8 uses one scale per tensor."""
    precision = Precision.parse(precision)
    flat = np.asarray(values, dtype=np.float32).reshape(-1)
    if precision is Precision.FIXED8:
        return fixed8_raw(quantize_fixed8_array(flat, fixed8_scale(flat))).reshape(np.shape(values))
    return float32_raw(flat).reshape(np.shape(values))


def pack_rows(rows: np.ndarray, slots: int) -> np.ndarray:
    """Zero-pad each row to a multiple of ``slots`` and cut it into flits."""
    rows = np.asarray(rows, dtype=np.uint32)
    n, k = rows.shape
    f = max(1, -(-k // slots))
    out = np.zeros((n, f * slots), dtype=np.uint32)
    out[:, :k] = rows
    return out.reshape(n * f, slots)


def weight_flits(model, weights, precision, slots: int = 8) -> np.ndarray:
    """Weights-only flits: each neuron's weights packed ``slots`` at a time."""
    parts = []
    for layer, w in zip(model.weighted_layers, weights):
        raw = raw_words(w, precision).reshape(layer.out_channels, -1)
        parts.append(pack_rows(raw, slots))
    return np.concatenate(parts)


def operand_flits(model, weights, x, precision, slots: int = 8) -> np.ndarray:
    """Half/half flits of every weighted layer's (input, weight) pairs."""
    trace = forward_trace(model, weights, x, Precision.FLOAT32)
    parts = []
    wi = 0
    for lt in trace.layers:
        if not lt.layer.has_weights:
            continue
        ins, wts = raw_operands(lt.layer, lt.input, weights[wi], precision)
        wi += 1
        flits, _ = pack_operand_array(ins, wts, slots)
        parts.append(flits.reshape(-1, slots))
    return np.concatenate(parts)


def no_noc_flits(model_name: str, precision, weights: str = "random", layout=Layout.WEIGHTS_ONLY,
                 n_flits: int = 10_000, seed: int = 0, slots: int = 8,
                 distribution: str = "uniform") -> np.ndarray:
    """``n_flits`` flits drawn from the model's weights (and inputs for half/half).

    Random weights are re-drawn with derived seeds until the pool is large
    enough; file weights are cycled. The pool is then subsampled with ``seed``.
    """
    if n_flits < 2:
        raise ValueError("need at least two flits")
    precision = Precision.parse(precision)
    layout = Layout.parse(layout)
    model = make_model(model_name, precision)
    pool, have, k = [], 0, 0
    while have < n_flits:
        sub = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        source = WeightSource.parse(weights, sub, distribution)
        w = init_weights(model, source)
        if layout is Layout.WEIGHTS_ONLY:
            flits = weight_flits(model, w, precision, slots)
        else:
            flits = operand_flits(model, w, make_input(model, sub), precision, slots)
        pool.append(flits)
        have += len(flits)
        k += 1
    stacked = np.concatenate(pool)
    rng = np.random.default_rng([seed, 0x5EED])
    return stacked[np.sort(rng.choice(len(stacked), n_flits, replace=False))]


def affiliated_pair_perms(model, weights, x, precision, values_per_flit: int = VALUES_PER_FLIT) -> dict:
    """Per weighted layer, the (n_neurons, K) pair order produced by O1 on packed flits.

    Pads are dropped, so each row is a permutation of the neuron's pair indices
    and can be fed to :func:`forward_trace` as ``pair_perms``.
    """
    precision = Precision.parse(precision)
    trace = forward_trace(model, weights, x, precision)
    h = values_per_flit // 2
    perms = {}
    wi = 0
    for lt in trace.layers:
        if not lt.layer.has_weights:
            continue
        ins, wts = raw_operands(lt.layer, lt.input, weights[wi], precision)
        wi += 1
        n, k = ins.shape
        flits, _ = pack_operand_array(ins, wts, values_per_flit)
        f = flits.shape[1]
        _, perm = order_array(flits.reshape(n * f, -1), OrderingScheme.O1, Layout.HALF_HALF)
        pair_idx = (perm[:, :h] + (np.arange(n * f) % f)[:, None] * h).reshape(n, f * h)
        perms[lt.layer.name] = pair_idx[pair_idx < k].reshape(n, k)
    return perms


# --------------------------------------------------------------------------
# no-NoC comparison


@dataclass
class NoNocConfig:
    model: str = "lenet"
    precision: str = "float32"
    weights: str = "random"
    distribution: str = "uniform"
    layout: str = "weights-only"
    scheme: str = "O1"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    flits: int = 10_000
    slots: int = 8


def run_no_noc(cfg: NoNocConfig) -> tuple[list[NoNocSummary], NoNocSummary]:
    """Per-seed summaries plus their pooled total (seed ``-1``)."""
    meta = {"precision": cfg.precision, "weights": cfg.weights, "layout": cfg.layout}
    rows = []
    for seed in cfg.seeds:
        flits = no_noc_flits(cfg.model, cfg.precision, cfg.weights, cfg.layout, cfg.flits, seed,
                             cfg.slots, cfg.distribution)
        rows.append(summarize_no_noc(flits, cfg.scheme, seed, cfg.layout, meta))
    pooled = NoNocSummary(rows[0].scheme, -1, sum(r.flits for r in rows), sum(r.pairs for r in rows),
                          sum(r.total_bt_baseline for r in rows), sum(r.total_bt_ordered for r in rows),
                          meta)
    return rows, pooled


# --------------------------------------------------------------------------
# bit-position analysis


def run_bit_analysis(cfg: NoNocConfig) -> tuple[BitPositionHistogram, BitPositionHistogram]:
    """Slot-stream profiles of shuffled flits before and after ordering, pooled over seeds."""
    width = Precision.parse(cfg.precision).word_width
    base = BitPositionHistogram(width)
    ordered = BitPositionHistogram(width)
    for seed in cfg.seeds:
        flits = no_noc_flits(cfg.model, cfg.precision, cfg.weights, cfg.layout, cfg.flits, seed,
                             cfg.slots, cfg.distribution)
        flits = flits[np.random.default_rng(seed).permutation(len(flits))]
        base = base.merge(flit_histogram(flits, width))
        ordered = ordered.merge(flit_histogram(order_array(flits, cfg.scheme, cfg.layout)[0], width))
    return base, ordered


# --------------------------------------------------------------------------
# optimality oracle


@dataclass
class OptimalityResult:
    checked_multisets: int = 0
    checked_quads: int = 0
    counterexample: dict | None = None
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.counterexample is None


def verify_optimality(max_n: int = 3, max_b: int = 8) -> OptimalityResult:
    """Interleaved descending F against brute force for every count multiset.

    Covers 1 <= N <= ``max_n`` words per flit and 1 <= b <= ``max_b`` bits,
    then checks the four-number exchange step over all quadruples up to ``max_b``.
    """
    if not 1 <= max_n <= 4:
        raise ValueError(f"max_n must be in 1..4, got {max_n}")
    if not 1 <= max_b <= 8:
        raise ValueError(f"max_b must be in 1..8, got {max_b}")
    res = OptimalityResult()
    t0 = time.perf_counter()
    for b in range(1, max_b + 1):
        for n in range(1, max_n + 1):
            for counts in itertools.combinations_with_replacement(range(b + 1), 2 * n):
                res.checked_multisets += 1
                fast = interleaved_descending(counts).objective
                best, arr = brute_force_max_f(counts)
                if fast != best:
                    res.counterexample = {"counts": list(counts), "b": b, "interleaved": fast,
                                          "brute_force": best, "witness": [list(arr.flit1_counts),
                                                                           list(arr.flit2_counts)]}
                    res.seconds = time.perf_counter() - t0
                    return res
    for quad in itertools.combinations_with_replacement(range(max_b + 1), 4):
        res.checked_quads += 1
        if not exchange_lemma_holds(*quad):
            res.counterexample = {"quad": list(quad)}
            break
    res.seconds = time.perf_counter() - t0
    return res


# --------------------------------------------------------------------------
# NoC sweeps


_PRESETS = {"MC2", "MC4", "MC8"}


def parse_mcs(text) -> int | tuple[tuple[int, int], ...]:
    """``4`` or ``0:1,3:1`` (x:y coordinates)."""
    if isinstance(text, int):
        return text
    text = str(text).strip()
    if text.isdigit():
        return int(text)
    try:
        return tuple(tuple(int(v) for v in part.split(":")) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --mcs value {text!r}; use a count or x:y,x:y") from None


def mesh_for(mesh: str, precision, mcs=None, **overrides) -> MeshConfig:
    """Mesh from a preset name or ``RxC``; links carry 16 values of the precision."""
    width = VALUES_PER_FLIT * Precision.parse(precision).word_width
    key = str(mesh).strip().upper()
    if key in _PRESETS and mcs is None:
        return MeshConfig.preset(key, width, **overrides)
    m = re.fullmatch(r"(\d+)X(\d+)", key)
    if key in _PRESETS:
        rows = cols = 4 if key == "MC2" else 8
    elif m:
        rows, cols = int(m.group(1)), int(m.group(2))
    else:
        raise ConfigError(f"bad mesh {mesh!r}; use MC2, MC4, MC8 or RxC")
    mcs = parse_mcs(2 if mcs is None else mcs)
    positions = default_mc_positions(rows, cols, mcs) if isinstance(mcs, int) else mcs
    return MeshConfig(rows, cols, link_width=width, mc_positions=positions, **overrides)


def mesh_label(mesh: MeshConfig) -> str:
    return f"{mesh.rows}x{mesh.cols}/MC{len(mesh.mc_positions)}"


@dataclass
class SweepCell:
    model: str
    precision: str
    mesh: str
    mcs: object
    scheme: str
    seed: int
    neuron_stride: int = 1
    distribution: str = "uniform"
    weights: str = "random"
    verify: bool = True


def run_cell(cell: SweepCell) -> dict:
    """One simulation; failures come back as an ``error`` entry instead of raising."""
    try:
        mesh = mesh_for(cell.mesh, cell.precision, cell.mcs)
        model = make_model(cell.model, cell.precision)
        cfg = SimConfig(mesh, cell.model, model.precision.value, cell.neuron_stride,
                        cell.distribution, cell.weights)
        result = simulate(cfg, model, cell.scheme, cell.seed, record_log=cell.verify)
        replay_ok = (not verify_replay(result)) if cell.verify else None
        return {"cell": asdict(cell), "mesh_label": mesh_label(mesh),
                "report": result.report.to_dict(), "replay_ok": replay_ok, "error": None}
    except Exception as exc:  # reported per cell, the sweep goes on
        return {"cell": asdict(cell), "mesh_label": str(cell.mesh), "report": None,
                "replay_ok": None, "error": f"{type(exc).__name__}: {exc}"}


def sweep_cells(models, precisions, meshes, schemes, seeds, mcs=None, **kw) -> list[SweepCell]:
    schemes = [OrderingScheme.parse(s).value for s in schemes]
    if "O0" not in schemes:
        schemes = ["O0"] + schemes
    return [SweepCell(m, Precision.parse(p).value, mesh, mcs, s, seed, **kw)
            for m in models for p in precisions for mesh in meshes for seed in seeds for s in schemes]


def run_sweep(cells: list[SweepCell], jobs: int = 1) -> list[dict]:
    if jobs <= 1 or len(cells) <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))


SWEEP_FIELDS = ["model", "precision", "mesh", "scheme", "seed", "total_bt", "payload_bt",
                "normalized_bt", "normalized_payload_bt", "reduction_pct", "payload_reduction_pct",
                "cycles", "injected_flits", "ejected_flits", "replay_ok", "error"]


def normalize_sweep(results: list[dict]) -> list[dict]:
    """Sweep table rows, each BT normalised to the O0 cell of its group."""
    base = {}
    for r in results:
        c = r["cell"]
        if r["report"] and c["scheme"] == "O0":
            base[(c["model"], c["precision"], r["mesh_label"], c["seed"])] = r["report"]
    rows = []
    for r in results:
        c = r["cell"]
        row = {"model": c["model"], "precision": c["precision"], "mesh": r["mesh_label"],
               "scheme": c["scheme"], "seed": c["seed"], "error": r["error"] or ""}
        rep = r["report"]
        ref = base.get((c["model"], c["precision"], r["mesh_label"], c["seed"]))
        if rep:
            row.update(total_bt=rep["total_bt"], payload_bt=rep["payload_bt"], cycles=rep["cycles"],
                       injected_flits=rep["injected_flits"], ejected_flits=rep["ejected_flits"],
                       replay_ok="" if r["replay_ok"] is None else str(r["replay_ok"]).lower())
        if rep and ref and ref["total_bt"] and ref["payload_bt"]:
            row.update(
                normalized_bt=f"{rep['total_bt'] / ref['total_bt']:.6f}",
                normalized_payload_bt=f"{rep['payload_bt'] / ref['payload_bt']:.6f}",
                reduction_pct=f"{bt_reduction_rate(ref['total_bt'], rep['total_bt']):.2f}",
                payload_reduction_pct=f"{bt_reduction_rate(ref['payload_bt'], rep['payload_bt']):.2f}",
            )
        rows.append({k: row.get(k, "") for k in SWEEP_FIELDS})
    return rows


def check_sweep(rows: list[dict], payload_only: bool = False) -> list[str]:
    """Band misses for LeNet on 4x4/MC2 cells; empty when everything is inside."""
    misses = []
    groups: dict[tuple, dict[str, dict]] = {}
    for r in rows:
        if r["error"]:
            misses.append(f"{r['model']} {r['precision']} {r['mesh']} {r['scheme']}: {r['error']}")
            continue
        groups.setdefault((r["model"], r["precision"], r["mesh"], r["seed"]), {})[r["scheme"]] = r
    key = "payload_bt" if payload_only else "total_bt"
    red = "payload_reduction_pct" if payload_only else "reduction_pct"
    for (model, prec, mesh, seed), cells in groups.items():
        if model != "lenet" or mesh != "4x4/MC2":
            continue
        if {"O0", "O1", "O2"} <= cells.keys():
            b0, b1, b2 = (int(cells[s][key]) for s in ("O0", "O1", "O2"))
            if not b2 < b1 < b0:
                misses.append(f"{prec} seed {seed}: trend O2<O1<O0 violated ({b2}, {b1}, {b0})")
        if "O2" in cells:
            lo, hi = NOC_O2_BANDS[prec]
            got = float(cells["O2"][red])
            if not lo <= got <= hi:
                misses.append(f"{prec} seed {seed}: O2 reduction {got:.2f}% outside [{lo}, {hi}]")
    return misses
