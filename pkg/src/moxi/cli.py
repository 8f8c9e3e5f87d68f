"""Command-line interface.

Commands: ``gen-data``, ``attribute``, ``curve``, ``heatmap``, ``shapley``.

Each command accepts ``--config FILE`` (a ``moxi-config/1`` JSON document
whose keys are the long option names with underscores); explicit flags
override it.  Outputs embed the seed and a digest of the resolved config so
that identical configs give byte-identical artifacts.  Exit codes: 0 ok,
2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from pathlib import Path

from moxi import kernels
from moxi.curves import (
    corruption_curve,
    curves_to_csv,
    default_factory,
    deletion_curve,
    insertion_curve,
)
from moxi.formats import (
    CONFIG_SCHEMA,
    MANIFEST_SCHEMA,
    SCORES_SCHEMA,
    FormatError,
    dataset_to_dict,
    digest,
    dumps,
    load_dataset,
    load_json,
    load_model,
    load_trace,
    model_to_dict,
    trace_to_dict,
    write_text,
)
from moxi.game import CachedOracle, ContractViolation
from moxi.greedy import METHODS, STOP_MODES, StoppingRule, run_method
from moxi.heatmap import HeatmapSpec, render_ppm
from moxi.shapley import (
    EXACT_LIMIT,
    EnumerationLimitError,
    SamplingConfig,
    exact_interaction,
    exact_shapley_all,
    mc_shapley_all,
    self_context_shapley,
    self_interaction,
)
from moxi.tasks import (
    ClassifierOracle,
    CorruptionSpec,
    GenerationError,
    PlantedConfig,
    SetSumGame,
    SetSumOracle,
    generate_patch_dataset,
    generate_setsum_dataset,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
INTERACTION_LIMIT = 16
WORKERS_ENV = "MOXI_WORKERS"

# keys that never influence artifact contents
_VOLATILE = {"out", "manifest", "workers", "config", "model_out"}


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


DEFAULTS = {
    "gen-data": {
        "kind": "setsum", "count": 100, "grid": "2x2", "d": 12, "classes": 8, "seed": 0,
        "duplicate_rate": 1.0, "coupled": True, "out": "dataset.json", "model_out": None,
    },
    "attribute": {
        "dataset": None, "model": None, "setsum": None, "instance": "0", "direction": "insert",
        "method": "moxi", "stop": "full", "tau": 0.0, "samples": 200, "seed": 0,
        "out": "trace.json", "manifest": None,
    },
    "curve": {
        "dataset": None, "model": None, "methods": "moxi,moxi-minus", "directions": "insertion",
        "corruption": "gaussian", "sigma": 1.0, "fill": 0.0, "corruption_seed": 0, "samples": 200,
        "seed": 0, "out": "curves.csv", "manifest": None,
    },
    "heatmap": {"trace": None, "grid": None, "cell_size": 16, "out": "heatmap.ppm"},
    "shapley": {
        "dataset": None, "model": None, "setsum": None, "instance": "0", "samples": None, "seed": 0,
        "interactions": False, "out": "scores.json",
    },
}


def _parse_grid(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        rows, cols = text
    else:
        try:
            rows, cols = (int(p) for p in str(text).lower().split("x"))
        except ValueError as exc:
            raise ConfigError(f"grid must look like ROWSxCOLS, got {text!r}") from exc
    if rows < 1 or cols < 1:
        raise ConfigError("grid dimensions must be positive")
    return int(rows), int(cols)


def _parse_values(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"--setsum expects comma-separated integers, got {text!r}") from exc


def _resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        try:
            doc = load_json(args.config, CONFIG_SCHEMA)
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from exc
        except FormatError as exc:
            raise ConfigError(str(exc)) from exc
        unknown = set(doc) - set(cfg) - {"schema", "command", "workers"}
        if unknown:
            raise ConfigError(f"{args.config}: unknown config keys: {', '.join(sorted(unknown))}")
        if doc.get("command", command) != command:
            raise ConfigError(f"{args.config}: config is for command {doc['command']!r}")
        cfg.update({k: v for k, v in doc.items() if k in cfg})
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    workers = getattr(args, "workers", None)
    if workers is None:
        workers = os.environ.get(WORKERS_ENV, "1")
    try:
        cfg["workers"] = max(1, int(workers))
    except ValueError as exc:
        raise ConfigError(f"worker count must be an integer, got {workers!r}") from exc
    return cfg


# input files enter the digest by content, so moving them does not change artifacts
_INPUT_FILES = ("dataset", "model", "trace")


def _file_digest(path: str) -> str:
    try:
        return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return str(path)


def _stable(cfg: dict) -> dict:
    out = {}
    for k, v in sorted(cfg.items()):
        if k in _VOLATILE:
            continue
        out[k] = _file_digest(v) if k in _INPUT_FILES and v else v
    return out


def _write_manifest(path: str, command: str, cfg: dict, outputs: list[str], calls: int, started: float,
                    extra: dict | None = None) -> None:
    doc = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "seed": cfg.get("seed"),
        "config": {k: v for k, v in sorted(cfg.items()) if k not in _VOLATILE},
        "config_sha256": digest(_stable(cfg)),
        "oracle_calls": calls,
        "wall_time_s": round(time.perf_counter() - started, 6),
        "outputs": outputs,
        "kernel_backend": kernels.BACKEND,
    }
    doc.update(extra or {})
    write_text(path, dumps(doc))


def _load_data(cfg: dict):
    if cfg.get("setsum"):
        values = _parse_values(cfg["setsum"])
        return [SetSumGame(values, id="cli", grid=(1, len(values)))], None
    if not cfg.get("dataset"):
        raise ConfigError("give --dataset (or --setsum for a literal Set-Sum game)")
    try:
        data = load_dataset(cfg["dataset"])
        model = load_model(cfg["model"]) if cfg.get("model") else None
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except (FormatError, ContractViolation) as exc:
        raise DataError(str(exc)) from exc
    if data and not isinstance(data[0], SetSumGame) and model is None:
        raise ConfigError("patch-grid datasets need --model")
    return data, model


def _select(data, ident) -> object:
    for x in data:
        if str(x.id) == str(ident):
            return x
    try:
        idx = int(ident)
    except (TypeError, ValueError):
        idx = None
    if idx is not None and 0 <= idx < len(data):
        return data[idx]
    raise DataError(f"instance {ident!r} not found in dataset")


def _oracle(inst, model, workers: int) -> CachedOracle:
    if isinstance(inst, SetSumGame):
        return CachedOracle(SetSumOracle(inst), workers=workers)
    try:
        return CachedOracle(ClassifierOracle(model, inst), workers=workers)
    except ContractViolation as exc:
        raise DataError(str(exc)) from exc


def _grid_of(inst) -> tuple[int, int]:
    return tuple(inst.grid) if inst.grid is not None else (1, inst.n)


# commands ---------------------------------------------------------------

def cmd_gen_data(cfg: dict) -> int:
    grid = _parse_grid(cfg["grid"])
    try:
        if cfg["kind"] == "setsum":
            data = generate_setsum_dataset(int(cfg["count"]), grid, int(cfg["seed"]), float(cfg["duplicate_rate"]))
            doc = dataset_to_dict(data, "setsum")
            model = None
        elif cfg["kind"] == "patch-grid":
            pc = PlantedConfig(grid=grid, d=int(cfg["d"]), n_classes=int(cfg["classes"]), coupled=bool(cfg["coupled"]))
            data, model = generate_patch_dataset(int(cfg["count"]), pc, seed=int(cfg["seed"]))
            doc = dataset_to_dict(data, "patch-grid")
        else:
            raise ConfigError(f"unknown dataset kind {cfg['kind']!r}")
    except (ContractViolation, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    except GenerationError as exc:
        raise DataError(str(exc)) from exc
    doc["seed"] = int(cfg["seed"])
    doc["config_sha256"] = digest(_stable(cfg))
    write_text(cfg["out"], dumps(doc))
    if model is not None:
        mdoc = model_to_dict(model)
        mdoc["seed"] = int(cfg["seed"])
        mdoc["config_sha256"] = doc["config_sha256"]
        write_text(cfg["model_out"] or str(Path(cfg["out"]).with_suffix("")) + ".model.json", dumps(mdoc))
    return EXIT_OK


def _stop_rule(cfg: dict, direction: str) -> StoppingRule:
    try:
        return StoppingRule(cfg["stop"], float(cfg["tau"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_attribute(cfg: dict) -> int:
    started = time.perf_counter()
    direction = {"insert": "insertion", "insertion": "insertion", "delete": "deletion", "deletion": "deletion"}.get(
        cfg["direction"])
    if direction is None:
        raise ConfigError(f"direction must be insert or delete, got {cfg['direction']!r}")
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}, got {cfg['method']!r}")
    data, model = _load_data(cfg)
    inst = _select(data, cfg["instance"])
    oracle = _oracle(inst, model, cfg["workers"])
    stop = _stop_rule(cfg, direction)
    sampling = SamplingConfig(int(cfg["samples"]), int(cfg["seed"]))
    try:
        trace = run_method(oracle, cfg["method"], direction, stop, cfg=sampling, seed=int(cfg["seed"]),
                           workers=cfg["workers"])
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc
    trace = trace.with_grid(_grid_of(inst))
    doc = trace_to_dict(trace, instance=str(inst.id), label=int(inst.label), seed=int(cfg["seed"]),
                        config_sha256=digest(_stable(cfg)))
    write_text(cfg["out"], dumps(doc))
    manifest = cfg["manifest"] or cfg["out"] + ".manifest.json"
    _write_manifest(manifest, "attribute", cfg, [cfg["out"]], oracle.call_count(), started)
    return EXIT_OK


def cmd_curve(cfg: dict) -> int:
    started = time.perf_counter()
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    directions = [d.strip() for d in str(cfg["directions"]).split(",") if d.strip()]
    for d in directions:
        if d not in ("insertion", "deletion", "corruption"):
            raise ConfigError(f"unknown curve direction {d!r}")
    data, model = _load_data(cfg)
    spec = None
    if "corruption" in directions:
        if model is None:
            raise ConfigError("corruption curves need a patch-grid dataset and --model")
        try:
            spec = CorruptionSpec(cfg["corruption"], float(cfg["sigma"]), float(cfg["fill"]), int(cfg["corruption_seed"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    factory = default_factory(data, model)
    sampling = SamplingConfig(int(cfg["samples"]), int(cfg["seed"]))
    seed, workers = int(cfg["seed"]), cfg["workers"]
    results = []
    try:
        for d in directions:
            for m in methods:
                if d == "insertion":
                    results.append(insertion_curve(data, factory, m, sampling, seed, workers))
                elif d == "deletion":
                    results.append(deletion_curve(data, factory, m, sampling, seed, workers))
                else:
                    results.append(corruption_curve(data, factory, m, spec, sampling, seed, workers))
    except ContractViolation as exc:
        raise DataError(str(exc)) from exc
    write_text(cfg["out"], curves_to_csv(results))
    manifest = cfg["manifest"] or cfg["out"] + ".manifest.json"
    auc = {f"{r.method}/{r.direction}": r.auc for r in results}
    _write_manifest(manifest, "curve", cfg, [cfg["out"]], 0, started, {"auc": auc})
    return EXIT_OK


def cmd_heatmap(cfg: dict) -> int:
    if not cfg.get("trace"):
        raise ConfigError("give a trace file")
    try:
        trace, doc = load_trace(cfg["trace"])
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except FormatError as exc:
        raise DataError(str(exc)) from exc
    if cfg.get("grid"):
        grid = _parse_grid(cfg["grid"])
    elif trace.grid is not None:
        grid = trace.grid
    else:
        raise ConfigError("trace has no grid; pass --grid ROWSxCOLS")
    try:
        spec = HeatmapSpec(grid, int(cfg["cell_size"]))
        comment = f"moxi heatmap {trace.method} {trace.direction} seed={doc.get('seed')} " \
                  f"config_sha256={doc.get('config_sha256')}"
        text = render_ppm(trace, spec, comment)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_text(cfg["out"], text)
    return EXIT_OK


def cmd_shapley(cfg: dict) -> int:
    data, model = _load_data(cfg)
    inst = _select(data, cfg["instance"])
    oracle = _oracle(inst, model, cfg["workers"])
    n = oracle.n
    samples = cfg.get("samples")
    if samples is None and n > EXACT_LIMIT:
        raise ConfigError(f"{n} players exceed the exact limit of {EXACT_LIMIT}; pass --samples N for sampling")
    if cfg["interactions"] and (samples is not None or n > INTERACTION_LIMIT):
        raise ConfigError(f"the interaction matrix is exact-only and limited to {INTERACTION_LIMIT} players")
    try:
        if samples is None:
            scores = exact_shapley_all(oracle)
            mode = "exact"
        else:
            scores = mc_shapley_all(oracle, cfg=SamplingConfig(int(samples), int(cfg["seed"])), workers=cfg["workers"])
            mode = "sampled"
    except (EnumerationLimitError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    grand = oracle.grand_set()
    f_full, f_empty = oracle.evaluate(grand), oracle.evaluate(grand.complement())
    values = [s.value for s in scores]
    doc = {
        "schema": SCORES_SCHEMA,
        "instance": str(inst.id),
        "n": n,
        "mode": mode,
        "sample_size": None if samples is None else int(samples),
        "seed": int(cfg["seed"]),
        "config_sha256": digest(_stable(cfg)),
        "shapley": values,
        "std_error": None if samples is None else [s.std_error for s in scores],
        "self_context_shapley": [self_context_shapley(oracle, p).value for p in range(n)],
        "efficiency": {"sum": sum(values), "target": f_full - f_empty, "gap": sum(values) - (f_full - f_empty)},
        "interactions": None,
    }
    if cfg["interactions"]:
        matrix = []
        for i in range(n):
            row = []
            for j in range(n):
                sc = self_interaction(oracle, grand, i) if i == j else exact_interaction(oracle, grand, i, j)
                row.append(sc.value)
            matrix.append(row)
        doc["interactions"] = matrix
    write_text(cfg["out"], dumps(doc))
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "attribute": cmd_attribute,
    "curve": cmd_curve,
    "heatmap": cmd_heatmap,
    "shapley": cmd_shapley,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moxi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="moxi-config/1 JSON file; flags override its values")
        p.add_argument("--workers", type=int, help=f"parallel workers (default ${WORKERS_ENV} or 1)")
        p.add_argument("--out", help="output path")
        if seed:
            p.add_argument("--seed", type=int, help="global seed")

    def data_args(p):
        p.add_argument("--dataset", help="moxi-dataset/1 file")
        p.add_argument("--model", help="moxi-model/1 file (patch-grid datasets)")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset (and planted model)")
    common(p)
    p.add_argument("--kind", choices=["setsum", "patch-grid"])
    p.add_argument("--count", type=int)
    p.add_argument("--grid")
    p.add_argument("--d", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--duplicate-rate", dest="duplicate_rate", type=float)
    p.add_argument("--no-coupling", dest="coupled", action="store_false", default=None)
    p.add_argument("--model-out", dest="model_out")

    p = sub.add_parser("attribute", help="run one ordering method on one instance and write its trace")
    common(p)
    data_args(p)
    p.add_argument("--setsum", help="literal Set-Sum values, e.g. 2,2,1")
    p.add_argument("--instance", help="instance id (or index)")
    p.add_argument("--direction", choices=["insert", "delete", "insertion", "deletion"])
    p.add_argument("--method", choices=list(METHODS))
    p.add_argument("--stop", choices=list(STOP_MODES))
    p.add_argument("--tau", type=float)
    p.add_argument("--samples", type=int, help="Shapley sampling size for large games")
    p.add_argument("--manifest", help="run manifest path (default OUT.manifest.json)")

    p = sub.add_parser("curve", help="insertion/deletion/corruption curves as CSV")
    common(p)
    data_args(p)
    p.add_argument("--methods", help="comma-separated methods")
    p.add_argument("--directions", help="comma-separated: insertion,deletion,corruption")
    p.add_argument("--corruption", choices=["gaussian", "constant_fill"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--fill", type=float)
    p.add_argument("--corruption-seed", dest="corruption_seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--manifest")

    p = sub.add_parser("heatmap", help="render a trace as a P3 pixmap")
    p.add_argument("trace", nargs="?")
    p.add_argument("--config")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--grid")
    p.add_argument("--cell-size", dest="cell_size", type=int)

    p = sub.add_parser("shapley", help="per-player Shapley values and interactions")
    common(p)
    data_args(p)
    p.add_argument("--setsum")
    p.add_argument("--instance")
    p.add_argument("--samples", type=int, help="use permutation sampling with this many orderings")
    p.add_argument("--interactions", action="store_true", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"moxi {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"moxi {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"moxi {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
