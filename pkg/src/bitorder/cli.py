"""``bitorder`` command line: no-noc, noc-sweep, verify-optimality, bit-analysis.

Effective settings come from built-in defaults, overridden by flags, overridden
by ``--config`` (JSON object or ``key=value`` lines). The effective config is
echoed at the top of every output file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dnnload import Precision, WeightSource, make_model
from .experiments import (NO_NOC_BANDS, SIGN_BIT_BAND, SWEEP_FIELDS, NoNocConfig, check_sweep, mesh_for,
                          normalize_sweep, run_bit_analysis, run_no_noc, run_sweep, sweep_cells,
                          verify_optimality)
from .nocsim import ConfigError
from .ordering import Layout, OrderingScheme
from .report import (BIT_POSITION_FIELDS, SUMMARY_FIELDS, bit_position_rows, echo_header,
                     write_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_BAND = 0, 1, 2, 3

log = logging.getLogger("bitorder")

DEFAULTS = {
    "common": {"seed": [0, 1, 2, 3, 4], "out": None, "check": False},
    "no-noc": {"model": "lenet", "precision": "float32", "weights": "random",
               "distribution": "uniform", "layout": "weights-only", "scheme": "O1",
               "flits": 10_000, "slots": 8},
    "bit-analysis": {"model": "lenet", "precision": "float32", "weights": "random",
                     "distribution": "uniform", "layout": "weights-only", "scheme": "O1",
                     "flits": 10_000, "slots": 8},
    "noc-sweep": {"model": ["lenet"], "precision": ["fixed8", "float32"], "mesh": ["MC2"],
                  "mcs": None, "scheme": ["O0", "O1", "O2"], "seed": [0], "jobs": 1,
                  "neuron_stride": 1, "distribution": "uniform", "weights": "random",
                  "payload_only": False, "verify_replay": True},
    "verify-optimality": {"max_n": 3, "max_b": 8},
}

_SWEEP_LIST_KEYS = ("model", "precision", "mesh", "scheme")


class CliError(Exception):
    """Invalid configuration (exit code 1)."""


def load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            try:
                data[k] = json.loads(v)
            except json.JSONDecodeError:
                data[k] = v
    if not isinstance(data, dict):
        raise CliError(f"config {path} must hold an object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def effective_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[command])
    for k, v in vars(args).items():
        if k in ("command", "config", "func", "verbose") or v is None:
            continue
        cfg[k] = v
    if args.config:
        file_cfg = load_config_file(args.config)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    if command == "noc-sweep":
        for k in _SWEEP_LIST_KEYS:
            if not isinstance(cfg[k], list):
                cfg[k] = [cfg[k]]
    if not isinstance(cfg["seed"], list):
        cfg["seed"] = [cfg["seed"]]
    try:
        cfg["seed"] = [int(s) for s in cfg["seed"]]
    except (TypeError, ValueError):
        raise CliError(f"seeds must be integers, got {cfg['seed']!r}") from None
    cfg["command"] = command
    cfg["version"] = __version__
    return cfg


def emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.suffix:
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    path.write_text(text)
    log.info("wrote %s", path)


def _no_noc_config(cfg: dict) -> NoNocConfig:
    try:
        nc = NoNocConfig(cfg["model"], cfg["precision"], cfg["weights"], cfg["distribution"],
                         cfg["layout"], cfg["scheme"], cfg["seed"], int(cfg["flits"]), int(cfg["slots"]))
        make_model(nc.model)
        nc.precision = Precision.parse(nc.precision).value
        nc.layout = Layout.parse(nc.layout).value
        nc.scheme = OrderingScheme.parse(nc.scheme).value
        WeightSource.parse(nc.weights, 0, nc.distribution)
    except (ValueError, TypeError) as exc:
        raise CliError(str(exc)) from None
    if nc.flits < 2:
        raise CliError("--flits must be at least 2")
    if nc.slots < 1 or (nc.layout == "half-half" and nc.slots % 2):
        raise CliError(f"bad slot count {nc.slots} for layout {nc.layout}")
    return nc


def cmd_no_noc(cfg: dict) -> int:
    nc = _no_noc_config(cfg)
    rows, pooled = run_no_noc(nc)
    table = [r.row() for r in rows] + [dict(pooled.row(), seed="all")]
    emit(write_csv(table, SUMMARY_FIELDS, cfg, nc.seeds), cfg["out"], "no_noc_summary.csv")
    log.info("pooled reduction %.2f%% (%s, %s)", pooled.reduction, nc.precision, nc.scheme)
    if cfg["check"]:
        if nc.weights != "random":
            log.warning("--check only gates random weights; file weights are data-dependent")
            return EXIT_OK
        lo, hi = NO_NOC_BANDS[nc.precision]
        if not lo <= pooled.reduction <= hi:
            log.error("reduction %.2f%% outside [%.2f, %.2f]", pooled.reduction, lo, hi)
            return EXIT_BAND
    return EXIT_OK


def cmd_bit_analysis(cfg: dict) -> int:
    nc = _no_noc_config(cfg)
    base, ordered = run_bit_analysis(nc)
    emit(write_csv(bit_position_rows(base, ordered), BIT_POSITION_FIELDS, cfg, nc.seeds),
         cfg["out"], "bit_positions.csv")
    if cfg["check"]:
        misses = []
        if nc.precision == "float32" and nc.weights == "random":
            p = float(base.p_one[0])
            if not SIGN_BIT_BAND[0] <= p <= SIGN_BIT_BAND[1]:
                misses.append(f"sign-bit probability {p:.4f} outside {SIGN_BIT_BAND}")
        if float(np.mean(ordered.p_transition)) > float(np.mean(base.p_transition)):
            misses.append("ordered mean transition probability exceeds baseline")
        for m in misses:
            log.error(m)
        if misses:
            return EXIT_BAND
    return EXIT_OK


def cmd_verify_optimality(cfg: dict) -> int:
    try:
        res = verify_optimality(int(cfg["max_n"]), int(cfg["max_b"]))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    body = {"echo": json.loads(echo_header(cfg)[2:]), "passed": res.passed, "checked_multisets": res.checked_multisets,
            "checked_quads": res.checked_quads, "counterexample": res.counterexample}
    emit(json.dumps(body, indent=2, sort_keys=True) + "\n", cfg["out"],
         "optimality.json")
    if not res.passed:
        log.error("counterexample: %s", res.counterexample)
        return EXIT_BAND
    return EXIT_OK


def cmd_noc_sweep(cfg: dict) -> int:
    try:
        cells = sweep_cells(cfg["model"], cfg["precision"], cfg["mesh"], cfg["scheme"], cfg["seed"],
                            cfg["mcs"], neuron_stride=int(cfg["neuron_stride"]),
                            distribution=cfg["distribution"], weights=cfg["weights"],
                            verify=bool(cfg["verify_replay"]))
        for mesh in cfg["mesh"]:
            for precision in cfg["precision"]:
                mesh_for(mesh, precision, cfg["mcs"])
    except (ValueError, TypeError, ConfigError) as exc:
        raise CliError(str(exc)) from None
    results = run_sweep(cells, int(cfg["jobs"]))
    rows = normalize_sweep(results)
    emit(write_csv(rows, SWEEP_FIELDS, cfg, cfg["seed"]), cfg["out"], "noc_sweep.csv")
    if cfg["out"] and not Path(cfg["out"]).suffix:
        rep_dir = Path(cfg["out"]) / "reports"
        rep_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            if r["report"]:
                c = r["cell"]
                name = f"{c['model']}_{c['precision']}_{r['mesh_label'].replace('/', '_')}_{c['scheme']}_s{c['seed']}"
                (rep_dir / f"{name}.json").write_text(json.dumps(r["report"], indent=2, sort_keys=True) + "\n")
    failed = [r for r in results if r["error"]]
    bad_replay = [r for r in results if r["replay_ok"] is False]
    for r in failed:
        log.error("cell %s failed: %s", r["cell"], r["error"])
    for r in bad_replay:
        log.error("replay mismatch in cell %s", r["cell"])
    if cfg["check"]:
        misses = check_sweep(rows, bool(cfg["payload_only"]))
        for m in misses:
            log.error("band miss: %s", m)
        if misses or bad_replay:
            return EXIT_BAND
    if failed or bad_replay:
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bitorder", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, many_seeds=True):
        sp.add_argument("--config", help="JSON or key=value file; overrides flags")
        sp.add_argument("--seed", type=int, nargs="+" if many_seeds else None)
        sp.add_argument("--out", help="output file, or directory for default file names")
        sp.add_argument("--check", action="store_true", default=None,
                        help="exit 3 when results miss the reference bands")
        sp.add_argument("-v", "--verbose", action="store_true")

    def flits(sp):
        sp.add_argument("--scheme", choices=["O0", "O1", "O2"])
        sp.add_argument("--model", choices=["lenet", "darknet-mini"])
        sp.add_argument("--precision", choices=["float32", "fixed8"])
        sp.add_argument("--weights", help="'random' or 'file:<path>'")
        sp.add_argument("--distribution", choices=["uniform", "normal"])
        sp.add_argument("--layout", choices=["weights-only", "half-half"])
        sp.add_argument("--flits", type=int)
        sp.add_argument("--slots", type=int, help="values per flit (default 8)")

    sp = sub.add_parser("no-noc", help="ordered vs baseline BT on shuffled flit streams")
    common(sp)
    flits(sp)
    sp.set_defaults(func=cmd_no_noc)

    sp = sub.add_parser("bit-analysis", help="per-bit-position '1' and transition probabilities")
    common(sp)
    flits(sp)
    sp.set_defaults(func=cmd_bit_analysis)

    sp = sub.add_parser("noc-sweep", help="cycle-level mesh simulations across a config matrix")
    common(sp)
    sp.add_argument("--scheme", nargs="+", choices=["O0", "O1", "O2"])
    sp.add_argument("--model", nargs="+", choices=["lenet", "darknet-mini"])
    sp.add_argument("--precision", nargs="+", choices=["float32", "fixed8"])
    sp.add_argument("--mesh", nargs="+", help="MC2, MC4, MC8 or RxC")
    sp.add_argument("--mcs", help="MC count, or x:y,x:y positions (for RxC meshes)")
    sp.add_argument("--weights", help="'random' or 'file:<path>'")
    sp.add_argument("--distribution", choices=["uniform", "normal"])
    sp.add_argument("--neuron-stride", type=int, help="simulate every k-th neuron only")
    sp.add_argument("--jobs", type=int, help="parallel worker processes")
    sp.add_argument("--payload-only", action="store_true", default=None,
                    help="judge --check bands on payload flits only")
    sp.add_argument("--no-verify-replay", dest="verify_replay", action="store_false", default=None)
    sp.set_defaults(func=cmd_noc_sweep)

    sp = sub.add_parser("verify-optimality", help="exhaustive check of the interleaved arrangement")
    common(sp)
    sp.add_argument("--max-n", type=int)
    sp.add_argument("--max-b", type=int)
    sp.set_defaults(func=cmd_verify_optimality)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = effective_config(args.command, args)
        return args.func(cfg)
    except (CliError, ConfigError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
