"""Turning one DNN layer into NoC packets.

Output neurons are dealt round-robin over the PE nodes. Each PE is served by
its nearest memory controller (ties go to the lower MC index), which packs the
neuron's (input, weight) pairs into flits, orders them with the selected
scheme and injects one operand packet per neuron. PEs answer with result
packets carrying up to one flit of outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bitcore import Flit, FlitKind, fixed8_raw, fixed8_scale, float32_raw, quantize_fixed8_array
from ..dnnload import LayerSpec, Precision, raw_operands
from ..ordering import Layout, OrderingScheme, order_array
from .mesh import ConfigError, Network, manhattan

OPERAND = 0
RESULT = 1
_NEURON_BITS = 24


@dataclass
class Packet:
    pid: int
    src: int
    dst: int
    dst_xy: tuple[int, int]
    flits: list[Flit]
    kind: int
    layer: int
    neurons: tuple[int, ...]

    @property
    def n_flits(self) -> int:
        return len(self.flits)


@dataclass
class LayerSchedule:
    layer_index: int
    layer: LayerSpec
    operand_packets: dict[int, list[Packet]]
    pe_of_neuron: dict[int, int]
    mc_of_pe: dict[int, int]
    expected_per_pe: dict[int, int]
    outputs: dict[int, int]
    values_per_flit: int
    word_width: int
    neurons: list[int] = field(default_factory=list)

    @property
    def n_operand_packets(self) -> int:
        return sum(len(v) for v in self.operand_packets.values())

    @property
    def n_result_packets(self) -> int:
        vpf = self.values_per_flit
        return sum(-(-m // vpf) for m in self.expected_per_pe.values())


def nearest_mc(network: Network, node: int) -> int:
    here = network.coord(node)
    best = None
    for mc in network.mc_nodes:
        d = manhattan(here, network.coord(mc))
        if best is None or d < best[0]:
            best = (d, mc)
    return best[1]


def assign_neurons(network: Network, neurons) -> tuple[dict[int, int], dict[int, int]]:
    """Round-robin neuron -> PE map and PE -> serving MC map."""
    pes = network.pe_nodes
    if not pes:
        raise ConfigError("no processing elements: every node is a memory controller")
    if not network.mc_nodes:
        raise ConfigError("at least one memory controller is required")
    pe_of = {int(n): pes[i % len(pes)] for i, n in enumerate(neurons)}
    mc_of = {pe: nearest_mc(network, pe) for pe in pes}
    return pe_of, mc_of


def _split_bits(value: int, word_width: int, total_bits: int) -> list[int]:
    mask = (1 << word_width) - 1
    return [(value >> s) & mask for s in range(0, total_bits, word_width)]


def head_flit(network: Network, src: int, dst: int, n_payload: int, layer: int, kind: int,
              first_neuron: int, word_width: int, slots: int) -> Flit:
    """Routing metadata packed into a link-width flit; unused slots are zero."""
    sx, sy = network.coord(src)
    dx, dy = network.coord(dst)
    mask = (1 << word_width) - 1
    fields = [dx, dy, sx, sy, n_payload & mask, layer & mask, kind]
    fields += _split_bits(first_neuron, word_width, _NEURON_BITS)
    if len(fields) > slots:
        raise ConfigError(f"head metadata needs {len(fields)} slots, flit has {slots}")
    words = tuple(fields + [0] * (slots - len(fields)))
    return Flit(words, word_width, FlitKind.HEAD)


def _rows_to_bits(arr: np.ndarray, word_width: int) -> list[int]:
    dtype = "<u4" if word_width == 32 else "<u1"
    data = np.ascontiguousarray(arr.astype(dtype))
    row_bytes = data.shape[1] * data.itemsize
    raw = data.tobytes()
    return [int.from_bytes(raw[i:i + row_bytes], "little") for i in range(0, len(raw), row_bytes)]


def pack_operand_array(ins: np.ndarray, wts: np.ndarray, values_per_flit: int):
    """Pack (n, K) operand rows into (n, F, values_per_flit) flits plus a pad mask (F, slots)."""
    n, k = ins.shape
    h = values_per_flit // 2
    f = max(1, -(-k // h))
    total = f * h
    pin = np.zeros((n, total), dtype=np.uint32)
    pw = np.zeros((n, total), dtype=np.uint32)
    pin[:, :k] = ins
    pw[:, :k] = wts
    flits = np.concatenate([pin.reshape(n, f, h), pw.reshape(n, f, h)], axis=2)
    pad_half = (np.arange(total) >= k).reshape(f, h)
    pad = np.concatenate([pad_half, pad_half], axis=1)
    return flits, pad


def build_payload_flits(words: np.ndarray, pad: np.ndarray, word_width: int,
                        last_kind: FlitKind = FlitKind.TAIL) -> list[list[Flit]]:
    """(n, F, slots) word array -> per-neuron lists of flits, last one tagged ``last_kind``."""
    n, f, slots = words.shape
    bits = _rows_to_bits(words.reshape(n * f, slots), word_width)
    rows = words.reshape(n * f, slots).tolist()
    pads = pad.reshape(n * f, slots).tolist()
    out = []
    i = 0
    for _ in range(n):
        packet = []
        for j in range(f):
            kind = last_kind if j == f - 1 else FlitKind.BODY
            packet.append(Flit._trusted(tuple(rows[i]), word_width, kind, tuple(pads[i]), bits[i]))
            i += 1
        out.append(packet)
    return out


def encode_outputs(values: np.ndarray, precision: Precision) -> np.ndarray:
    values = np.asarray(values, dtype=np.float32).reshape(-1)
    if precision is Precision.FIXED8:
        return fixed8_raw(quantize_fixed8_array(values, fixed8_scale(values)))
    return float32_raw(values)


def map_layer_traffic(layer: LayerSpec, x: np.ndarray, w: np.ndarray, outputs: np.ndarray,
                      network: Network, scheme, precision, layer_index: int = 0,
                      neuron_stride: int = 1, pid_start: int = 0) -> LayerSchedule:
    """Operand packets per MC for one weighted layer, ordered at MC egress.

    ``outputs`` holds the layer's pre-activation results (one per neuron) that
    PEs send back. ``neuron_stride`` > 1 keeps every k-th neuron only.
    """
    scheme = OrderingScheme.parse(scheme)
    precision = Precision.parse(precision)
    ww = precision.word_width
    vpf = network.config.check_word_width(ww)
    neurons = list(range(0, layer.n_neurons, max(1, int(neuron_stride))))
    pe_of, mc_of = assign_neurons(network, neurons)
    out_raw = encode_outputs(outputs, precision)
    expected: dict[int, int] = {}
    for n in neurons:
        expected[pe_of[n]] = expected.get(pe_of[n], 0) + 1
    schedule = LayerSchedule(layer_index, layer, {mc: [] for mc in network.mc_nodes}, pe_of, mc_of,
                             expected, {n: int(out_raw[n]) for n in neurons}, vpf, ww, neurons)
    if not neurons:
        return schedule

    ins, wts = raw_operands(layer, x, w, precision)
    sel = np.asarray(neurons)
    flits, pad = pack_operand_array(ins[sel], wts[sel], vpf)
    n, f, slots = flits.shape
    ordered, perm = order_array(flits.reshape(n * f, slots), scheme, Layout.HALF_HALF)
    pad_rows = np.take_along_axis(np.tile(pad, (n, 1)), perm, axis=1)
    payload = build_payload_flits(ordered.reshape(n, f, slots), pad_rows.reshape(n, f, slots), ww)

    pid = pid_start
    for neuron, body in zip(neurons, payload):
        pe = pe_of[neuron]
        mc = mc_of[pe]
        head = head_flit(network, mc, pe, len(body), layer_index, OPERAND, neuron, ww, slots)
        schedule.operand_packets[mc].append(
            Packet(pid, mc, pe, network.coord(pe), [head] + body, OPERAND, layer_index, (neuron,)))
        pid += 1
    return schedule


def result_packet(network: Network, pid: int, pe: int, mc: int, layer_index: int,
                  neurons: list[int], raw_outputs: list[int], word_width: int, slots: int) -> Packet:
    fill = slots - len(raw_outputs)
    if fill < 0:
        raise ValueError("result group larger than one flit")
    words = tuple(raw_outputs) + (0,) * fill
    pad = (False,) * len(raw_outputs) + (True,) * fill
    body = Flit(words, word_width, FlitKind.TAIL, pad)
    head = head_flit(network, pe, mc, 1, layer_index, RESULT, neurons[0], word_width, slots)
    return Packet(pid, pe, mc, network.coord(mc), [head, body], RESULT, layer_index, tuple(neurons))
