"""Cycle-level wormhole simulation with virtual channels and credit flow control.

Per cycle every router with buffered flits performs, in order:

1. route computation and VC allocation for head flits at a VC front
   (round-robin over free downstream VCs),
2. separable switch allocation: each input port nominates one ready VC,
   each output port grants one input port (both round-robin),
3. traversal of granted flits; a flit crossing an inter-router link is
   recorded on that link's :class:`LinkStatsCounter`.

Link traversal takes one cycle and credits return at the end of the cycle in
which a flit leaves a buffer. VC ownership is released when a tail leaves.
Layers are separated by a drain barrier.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import __version__
from ..bitcore import Flit, FlitKind, LinkStatsCounter, WidthMismatchError, bit_transitions
from ..dnnload import ModelSpec, Precision, WeightSource, forward_trace, init_weights, make_input
from ..ordering import OrderingScheme
from .mesh import (LOCAL, OPPOSITE, ConfigError, Direction, MeshConfig, Network, build_mesh,
                   xy_next_port)
from .traffic import LayerSchedule, Packet, map_layer_traffic, result_packet


class SimulationTimeout(RuntimeError):
    """The cycle cap was reached before the network drained."""


def record_link_traversal(counter: LinkStatsCounter, flit: Flit) -> LinkStatsCounter:
    counter.record(flit)
    return counter


def replay_link_log(width: int, flits: Sequence[Flit]) -> LinkStatsCounter:
    """Recount a traversal log from an all-zero wire using :func:`bit_transitions`.

    Payload flits are replayed as their own stream, skipping heads.
    """
    out = LinkStatsCounter(width)
    if not flits:
        return out
    ww = flits[0].word_width
    prev = prev_payload = Flit((0,) * (width // ww), ww)
    for f in flits:
        out.toggles += bit_transitions(prev, f)
        out.flits_seen += 1
        if not f.kind.is_head:
            out.payload_toggles += bit_transitions(prev_payload, f)
            out.payload_flits += 1
            prev_payload = f
        prev = f
    out.prev_bits = prev.bits
    out.prev_payload_bits = prev_payload.bits
    return out


class _Router:
    __slots__ = ("node", "xy", "nbr", "buf", "route", "ovc", "owner", "credits", "occ",
                 "va_rr", "in_rr", "out_rr")

    def __init__(self, node, xy, nbr, vcs, depth):
        n = 5 * vcs
        self.node = node
        self.xy = xy
        self.nbr = nbr
        self.buf = [deque() for _ in range(n)]
        self.route = [-1] * n
        self.ovc = [-1] * n
        self.owner = [False] * n
        self.credits = [depth if (i // vcs and nbr[i // vcs] >= 0) else 0 for i in range(n)]
        self.occ = set()
        self.va_rr = [0] * 5
        self.in_rr = [0] * 5
        self.out_rr = [0] * 5


class _Injector:
    """Network interface: streams queued packets into the local input port."""

    __slots__ = ("queue", "active", "credits", "bound", "rr")

    def __init__(self, vcs, depth):
        self.queue = deque()
        self.active = []          # [packet, next flit index, local vc]
        self.credits = [depth] * vcs
        self.bound = [False] * vcs
        self.rr = 0


@dataclass
class _PE:
    expected: int = 0
    received: int = 0
    computed: int = 0
    busy_until: int = 0
    pending: list = field(default_factory=list)


class Engine:
    def __init__(self, network: Network, record_log: bool = False):
        cfg = network.config
        self.network = network
        self.vcs = cfg.vc_count
        self.depth = cfg.vc_depth
        self.width = cfg.link_width
        self.routers = [
            _Router(n, network.coord(n), network.neighbours[n], self.vcs, self.depth)
            for n in range(network.n_routers)
        ]
        self.nis = [_Injector(self.vcs, self.depth) for _ in range(network.n_routers)]
        self.counters = {(n, p): LinkStatsCounter(self.width)
                         for n in range(network.n_routers) for p in range(1, 5)
                         if network.neighbours[n][p] >= 0}
        self.logs = {k: [] for k in self.counters} if record_log else None
        self.cycle = 0
        self.injected = 0
        self.ejected = 0
        self.active_routers: set[int] = set()
        self.active_nis: set[int] = set()
        self._arrivals = []
        self._ni_credits = []
        self._events = []
        self._seq = 0
        self.on_eject = None

    # -- traffic --------------------------------------------------------

    def enqueue(self, packet: Packet) -> None:
        for f in packet.flits:
            if f.width != self.width:
                raise WidthMismatchError(f"flit width {f.width} != link width {self.width}")
        self.nis[packet.src].queue.append(packet)
        self.active_nis.add(packet.src)

    def schedule(self, when: int, action) -> None:
        self._seq += 1
        heapq.heappush(self._events, (when, self._seq, action))

    @property
    def idle(self) -> bool:
        return not (self.active_routers or self.active_nis or self._events or self._arrivals)

    # -- cycle ----------------------------------------------------------

    def step(self) -> None:
        events = self._events
        while events and events[0][0] <= self.cycle:
            _, _, action = heapq.heappop(events)
            action()
        for node in sorted(self.active_nis):
            self._inject(node)
        for node in sorted(self.active_routers):
            self._route(self.routers[node])
        self._commit()
        self.cycle += 1

    def _inject(self, node: int) -> None:
        ni = self.nis[node]
        vcs = self.vcs
        while ni.queue and len(ni.active) < vcs:
            v = next(i for i in range(vcs) if not ni.bound[i])
            ni.bound[v] = True
            ni.active.append([ni.queue.popleft(), 0, v])
        if not ni.active:
            self.active_nis.discard(node)
            return
        k = len(ni.active)
        for off in range(k):
            j = (ni.rr + off) % k
            entry = ni.active[j]
            pkt, idx, v = entry
            if ni.credits[v] <= 0:
                continue
            ni.credits[v] -= 1
            flit = pkt.flits[idx]
            self._arrivals.append((node, LOCAL * vcs + v, flit, pkt))
            self.injected += 1
            if idx + 1 == len(pkt.flits):
                ni.bound[v] = False
                del ni.active[j]
                ni.rr = j % max(1, len(ni.active))
            else:
                entry[1] = idx + 1
                ni.rr = (j + 1) % k
            break
        if not ni.active and not ni.queue:
            self.active_nis.discard(node)

    def _route(self, r: _Router) -> None:
        vcs = self.vcs
        occ = sorted(r.occ)
        buf, route, ovc, owner, credits = r.buf, r.route, r.ovc, r.owner, r.credits

        for idx in occ:
            if ovc[idx] >= 0:
                continue
            op = route[idx]
            if op < 0:
                _, pkt = buf[idx][0]
                op = route[idx] = xy_next_port(r.xy, pkt.dst_xy)
            if op == LOCAL:
                ovc[idx] = 0
                continue
            base = op * vcs
            start = r.va_rr[op]
            for k in range(vcs):
                v = (start + k) % vcs
                if not owner[base + v]:
                    owner[base + v] = True
                    ovc[idx] = v
                    r.va_rr[op] = (v + 1) % vcs
                    break

        nominee = {}
        for idx in occ:
            ov = ovc[idx]
            if ov < 0:
                continue
            op = route[idx]
            if op != LOCAL and credits[op * vcs + ov] <= 0:
                continue
            p, v = divmod(idx, vcs)
            rank = (v - r.in_rr[p]) % vcs
            cur = nominee.get(p)
            if cur is None or rank < cur[0]:
                nominee[p] = (rank, idx, op)

        grants = {}
        for p, (_, idx, op) in nominee.items():
            rank = (p - r.out_rr[op]) % 5
            cur = grants.get(op)
            if cur is None or rank < cur[0]:
                grants[op] = (rank, idx, p)

        for op, (_, idx, p) in grants.items():
            v = idx % vcs
            r.in_rr[p] = (v + 1) % vcs
            r.out_rr[op] = (p + 1) % 5
            q = buf[idx]
            flit, pkt = q.popleft()
            if not q:
                r.occ.discard(idx)
            if p == LOCAL:
                self._ni_credits.append((r.node, v))
            else:
                self._arrivals.append((None, r.nbr[p], OPPOSITE[p] * vcs + v))
            ov = ovc[idx]
            if op == LOCAL:
                self.ejected += 1
                if flit.kind is FlitKind.TAIL or flit.kind is FlitKind.HEAD_TAIL:
                    self.on_eject(pkt, self.cycle)
            else:
                credits[op * vcs + ov] -= 1
                key = (r.node, op)
                self.counters[key].record(flit)
                if self.logs is not None:
                    self.logs[key].append(flit)
                self._arrivals.append((r.nbr[op], OPPOSITE[op] * vcs + ov, flit, pkt))
            if flit.kind is FlitKind.TAIL or flit.kind is FlitKind.HEAD_TAIL:
                if op != LOCAL:
                    owner[op * vcs + ov] = False
                ovc[idx] = -1
                route[idx] = -1
        if not r.occ:
            self.active_routers.discard(r.node)

    def _commit(self) -> None:
        routers = self.routers
        for item in self._arrivals:
            if item[0] is None:
                # credit back to the upstream router's output VC
                _, up, idx = item
                routers[up].credits[idx] += 1
                continue
            node, idx, flit, pkt = item
            r = routers[node]
            r.buf[idx].append((flit, pkt))
            r.occ.add(idx)
            self.active_routers.add(node)
        self._arrivals = []
        for node, v in self._ni_credits:
            self.nis[node].credits[v] += 1
        self._ni_credits = []


# --------------------------------------------------------------------------
# experiment driver


@dataclass
class SimConfig:
    """Everything a NoC run depends on besides the ordering scheme and seed."""

    mesh: MeshConfig
    model: str = "lenet"
    precision: str = "float32"
    neuron_stride: int = 1
    distribution: str = "uniform"
    weights: str = "random"

    def describe(self) -> dict:
        return {"mesh": self.mesh.describe(), "model": self.model, "precision": self.precision,
                "neuron_stride": self.neuron_stride, "distribution": self.distribution,
                "weights": self.weights}


@dataclass
class LinkReport:
    src: tuple[int, int]
    dst: tuple[int, int]
    direction: str
    toggles: int
    payload_toggles: int
    flits: int
    payload_flits: int


@dataclass
class SimReport:
    scheme: str
    seed: int
    config: dict
    cycles: int
    injected_flits: int
    ejected_flits: int
    total_bt: int
    payload_bt: int
    links: list[LinkReport]
    layers: list[dict]
    version: str = __version__

    def bt(self, payload_only: bool = False) -> int:
        return self.payload_bt if payload_only else self.total_bt

    def to_dict(self) -> dict:
        return {
            "version": self.version, "scheme": self.scheme, "seed": self.seed,
            "config": self.config, "cycles": self.cycles,
            "injected_flits": self.injected_flits, "ejected_flits": self.ejected_flits,
            "total_bt": self.total_bt, "payload_bt": self.payload_bt,
            "layers": self.layers,
            "links": [
                {"src": list(l.src), "dst": list(l.dst), "dir": l.direction, "toggles": l.toggles,
                 "payload_toggles": l.payload_toggles, "flits": l.flits,
                 "payload_flits": l.payload_flits}
                for l in self.links
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SimReport":
        links = [LinkReport(tuple(l["src"]), tuple(l["dst"]), l["dir"], l["toggles"],
                            l["payload_toggles"], l["flits"], l["payload_flits"]) for l in d["links"]]
        return cls(d["scheme"], d["seed"], d["config"], d["cycles"], d["injected_flits"],
                   d["ejected_flits"], d["total_bt"], d["payload_bt"], links, d["layers"],
                   d.get("version", __version__))

    def links_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link_src", "link_dst", "dir", "toggles", "flits"])
        for l in self.links:
            w.writerow([f"{l.src[0]}:{l.src[1]}", f"{l.dst[0]}:{l.dst[1]}", l.direction,
                        l.toggles, l.flits])
        return buf.getvalue()


@dataclass
class SimResult:
    report: SimReport
    logs: dict | None
    counters: dict


class _LayerRun:
    """PE/MC behaviour for one layer: compute latency and result return."""

    def __init__(self, engine: Engine, schedule: LayerSchedule, pid_start: int, pe_latency: int):
        self.engine = engine
        self.schedule = schedule
        self.pid = pid_start
        self.latency = pe_latency
        self.pes = {pe: _PE(expected=m) for pe, m in schedule.expected_per_pe.items()}
        self.expected_packets = schedule.n_operand_packets + schedule.n_result_packets
        self.delivered = 0

    def on_eject(self, pkt: Packet, cycle: int) -> None:
        self.delivered += 1
        if pkt.kind != 0:
            return
        pe = self.pes[pkt.dst]
        pe.received += 1
        pe.busy_until = max(pe.busy_until, cycle) + self.latency
        neuron = pkt.neurons[0]
        self.engine.schedule(pe.busy_until, lambda: self._computed(pkt.dst, neuron))

    def _computed(self, node: int, neuron: int) -> None:
        pe = self.pes[node]
        pe.computed += 1
        pe.pending.append(neuron)
        s = self.schedule
        if len(pe.pending) == s.values_per_flit or pe.computed == pe.expected:
            group, pe.pending = pe.pending, []
            pkt = result_packet(self.engine.network, self.pid, node, s.mc_of_pe[node], s.layer_index,
                                group, [s.outputs[n] for n in group], s.word_width, s.values_per_flit)
            self.pid += 1
            self.engine.enqueue(pkt)

    @property
    def done(self) -> bool:
        return self.delivered == self.expected_packets


def simulate(config: SimConfig | MeshConfig, model: ModelSpec, scheme, seed: int = 0,
             weights: Sequence[np.ndarray] | None = None, x: np.ndarray | None = None,
             record_log: bool = False, neuron_stride: int | None = None) -> SimResult:
    """Run every weighted layer of ``model`` through the mesh, layer by layer."""
    if isinstance(config, MeshConfig):
        config = SimConfig(config, model=model.name, precision=model.precision.value)
    scheme = OrderingScheme.parse(scheme)
    precision = Precision.parse(model.precision)
    if Precision.parse(config.precision) is not precision:
        raise ConfigError(f"config precision {config.precision} != model precision {precision.value}")
    mesh = config.mesh
    mesh.check_word_width(precision.word_width)
    stride = neuron_stride if neuron_stride is not None else config.neuron_stride
    network = build_mesh(mesh)
    if weights is None:
        source = WeightSource.parse(config.weights, seed, config.distribution)
        weights = init_weights(model, source)
    if x is None:
        x = make_input(model, seed)
    trace = forward_trace(model, weights, x, Precision.FLOAT32)

    engine = Engine(network, record_log=record_log)
    layer_stats = []
    pid = 0
    li = 0
    wi = 0
    for lt in trace.layers:
        if not lt.layer.has_weights:
            continue
        sched = map_layer_traffic(lt.layer, lt.input, weights[wi], lt.accumulators, network, scheme,
                                  precision, li, stride, pid)
        wi += 1
        pid += sched.n_operand_packets
        run = _LayerRun(engine, sched, pid, mesh.pe_latency)
        engine.on_eject = run.on_eject
        bt_before = sum(c.toggles for c in engine.counters.values())
        start = engine.cycle
        for mc in network.mc_nodes:
            for pkt in sched.operand_packets[mc]:
                engine.enqueue(pkt)
        while not run.done:
            if engine.cycle >= mesh.cycle_cap:
                raise SimulationTimeout(f"cycle cap {mesh.cycle_cap} reached in layer {lt.layer.name}")
            if engine.idle:
                raise RuntimeError(f"network idle with undelivered packets in layer {lt.layer.name}")
            engine.step()
        pid = run.pid
        layer_stats.append({
            "layer": lt.layer.name, "neurons": len(sched.neurons),
            "operand_packets": sched.n_operand_packets, "result_packets": sched.n_result_packets,
            "cycles": engine.cycle - start,
            "bt": sum(c.toggles for c in engine.counters.values()) - bt_before,
        })
        li += 1

    links = []
    for link in network.links:
        node = link.src[1] * mesh.cols + link.src[0]
        c = engine.counters[(node, link.direction.value)]
        links.append(LinkReport(link.src, link.dst, link.direction.label, c.toggles,
                                c.payload_toggles, c.flits_seen, c.payload_flits))
    echo = config.describe()
    echo["neuron_stride"] = stride
    report = SimReport(
        scheme=scheme.value, seed=seed, config=echo, cycles=engine.cycle,
        injected_flits=engine.injected, ejected_flits=engine.ejected,
        total_bt=sum(l.toggles for l in links), payload_bt=sum(l.payload_toggles for l in links),
        links=links, layers=layer_stats,
    )
    return SimResult(report, engine.logs, engine.counters)


def verify_replay(result: SimResult) -> list[tuple]:
    """Links whose replayed log disagrees with the live counter (empty when consistent)."""
    if result.logs is None:
        raise ValueError("run the simulation with record_log=True to replay it")
    bad = []
    for key, counter in result.counters.items():
        again = replay_link_log(counter.width, result.logs[key])
        if (again.toggles, again.payload_toggles, again.flits_seen) != (
                counter.toggles, counter.payload_toggles, counter.flits_seen):
            bad.append((key, counter, again))
    return bad


__all__ = ["Direction", "Engine", "SimConfig", "SimReport", "SimResult", "SimulationTimeout",
           "record_link_traversal", "replay_link_log", "simulate", "verify_replay"]
