"""Command-line entry point: ``mmhcl <command> --config <path> [--set k=v ...] [--out <dir>]``.

The config is one JSON object with optional sections::

    {
      "seed": 0,
      "synthetic": {...SyntheticSpec fields...},
      "train": {...TrainConfig fields...},
      "data": {"features_a": ..., "features_b": ..., "partition": ...,
               "catalog": ..., "labels": ..., "checkpoint": ...},
      "eval": {"k_values": [1, 2, 5], "n_dump": 30, "min_accuracy": {"mix": 40}}
    }

Relative paths in ``data`` resolve against the config file's directory.
Every run writes into a fresh directory ``<out>/<command>-<fingerprint>-s<seed>``
together with ``manifest.json``.

Exit codes: 0 success, 1 config error, 2 runtime error, 3 failed ``eval --check``.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataset import (
    ClassPartition,
    MmhclDataset,
    SyntheticSpec,
    load_features,
    make_eval_scenarios,
    save_features,
    synthesize,
    synthetic_catalog,
)
from .errors import ConfigError, MmhclError
from .evaluation import (
    ablation_suite,
    aggregate,
    comparison_suite,
    config_fingerprint,
    read_predictions,
    reports_to_text,
    topk_sweep,
    uncertainty_dump,
    write_predictions,
    write_sweep_csv,
    write_uncertainty_csv,
)
from .semantic import load_catalog, save_catalog
from .training import TrainConfig, load_checkpoint, save_checkpoint, train, write_train_log

log = logging.getLogger("mmhcl")

COMMANDS = ("gen-data", "train", "eval", "ablate", "sweep-k", "dump-uncertainty")
SECTIONS = ("seed", "synthetic", "train", "data", "eval")
DATA_KEYS = ("features_a", "features_b", "partition", "catalog", "labels", "checkpoint")
EVAL_DEFAULTS = {"k_values": [1, 2, 3, 5, 10, 20], "n_dump": 30, "min_accuracy": {}}

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def parse_value(text: str):
    """JSON literal if it parses (numbers, bools, lists, null), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    config = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"bad override key {key!r}")
        node = config
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = parse_value(text)
    return config


def load_config(path, overrides=()) -> dict:
    base: dict = {}
    if path is not None:
        try:
            base = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    cfg = apply_overrides(base, overrides)
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    cfg.setdefault("seed", 0)
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")
    root = Path(path).resolve().parent if path is not None else Path.cwd()
    data = cfg.setdefault("data", {})
    unknown = set(data) - set(DATA_KEYS)
    if unknown:
        raise ConfigError(f"unknown data key(s): {', '.join(sorted(unknown))}")
    for key, val in list(data.items()):
        if val is not None:
            data[key] = str((root / val).resolve())
    ev = {**EVAL_DEFAULTS, **cfg.get("eval", {})}
    unknown = set(ev) - set(EVAL_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown eval key(s): {', '.join(sorted(unknown))}")
    cfg["eval"] = ev
    cfg["synthetic"] = asdict(synthetic_spec(cfg))
    cfg["train"] = asdict(train_config(cfg))
    return cfg


def synthetic_spec(cfg: dict) -> SyntheticSpec:
    raw = dict(cfg.get("synthetic", {}))
    known = {f.name for f in fields(SyntheticSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown synthetic option(s): {', '.join(sorted(unknown))}")
    raw.setdefault("seed", cfg["seed"])
    spec = SyntheticSpec(**raw)
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec


def train_config(cfg: dict) -> TrainConfig:
    raw = dict(cfg.get("train", {}))
    raw.setdefault("seed", cfg["seed"])
    try:
        tc = TrainConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    tc.validate()
    return tc


def require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg["data"].get(k)]
    if missing:
        raise ConfigError(f"missing data path(s): {', '.join('data.' + k for k in missing)}")
    for k in keys:
        if not Path(cfg["data"][k]).is_file():
            raise ConfigError(f"data.{k} does not exist: {cfg['data'][k]}")


# ---------------------------------------------------------------------------
# run directory and manifest
# ---------------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_directory(out: Path, command: str, fingerprint: str, seed: int) -> Path:
    """A new directory; completed runs are never overwritten."""
    stem = f"{command}-{fingerprint}-s{seed}"
    path = out / stem
    n = 1
    while path.exists():
        path = out / f"{stem}-{n}"
        n += 1
    path.mkdir(parents=True)
    return path


class Run:
    def __init__(self, command: str, cfg: dict, out: Path):
        self.command = command
        self.cfg = cfg
        self.fingerprint = config_fingerprint({"command": command, **cfg})
        self.dir = run_directory(out, command, self.fingerprint, cfg["seed"])
        self.outputs: list[str] = []
        self.manifest = {
            "command": command,
            "config": cfg,
            "fingerprint": self.fingerprint,
            "seed": cfg["seed"],
            "versions": {
                "mmhcl": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "inputs": {k: {"path": v, "sha256": sha256_file(v)} for k, v in cfg["data"].items() if v and Path(v).is_file()},
            "outputs": {},
            "status": "incomplete",
            "started": _now(),
        }
        self._write_manifest()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def finish(self, status: str = "complete", **extra) -> None:
        self.manifest["outputs"] = {n: sha256_file(self.dir / n) for n in self.outputs if (self.dir / n).is_file()}
        self.manifest["status"] = status
        self.manifest["finished"] = _now()
        self.manifest.update(extra)
        self._write_manifest()

    def _write_manifest(self) -> None:
        (self.dir / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def obtain_dataset(cfg: dict):
    """Dataset and catalog from files if given, otherwise freshly synthesized."""
    data = cfg["data"]
    if data.get("features_a") or data.get("features_b"):
        require(cfg, "features_a", "features_b", "partition", "catalog")
        partition = ClassPartition.from_dict(json.loads(Path(data["partition"]).read_text(encoding="utf-8")))
        dataset = load_features(data["features_a"], data["features_b"], partition, data.get("labels"))
        return dataset, load_catalog(data["catalog"])
    spec = synthetic_spec(cfg)
    catalog = load_catalog(data["catalog"]) if data.get("catalog") else synthetic_catalog(spec)
    return synthesize(spec, catalog), catalog


def cmd_gen_data(run: Run, cfg: dict, args) -> int:
    dataset, catalog = obtain_dataset(cfg)
    save_features(dataset, run.path("features_A.csv"), run.path("features_B.csv"))
    save_catalog(catalog, run.path("catalog.csv"))
    run.write_json("partition.json", dataset.partition.to_dict())
    return EXIT_OK


def cmd_train(run: Run, cfg: dict, args) -> int:
    dataset, catalog = obtain_dataset(cfg)
    model = train(dataset, catalog, train_config(cfg))
    save_checkpoint(model, run.path("model.ckpt"))
    write_train_log(model, run.path("train_log.csv"))
    return EXIT_OK


def _model_and_data(cfg: dict):
    require(cfg, "checkpoint")
    model = load_checkpoint(cfg["data"]["checkpoint"])
    dataset, _ = obtain_dataset(cfg)
    if (dataset.dim_a, dataset.dim_b) != (model.dim_a, model.dim_b):
        raise ConfigError(
            f"checkpoint expects feature dims ({model.dim_a}, {model.dim_b}), "
            f"data has ({dataset.dim_a}, {dataset.dim_b})"
        )
    return model, dataset


def cmd_eval(run: Run, cfg: dict, args) -> int:
    model, dataset = _model_and_data(cfg)
    reports = comparison_suite(model, dataset)
    run.write_json("metrics.json", [r.to_dict() for r in reports])
    run.path("metrics.txt").write_text(reports_to_text(reports), encoding="utf-8")
    write_predictions(reports[0], run.path("predictions.csv"))
    print(reports_to_text(reports), end="")
    if not args.check:
        return EXIT_OK
    failures = check_report(reports[0], run.dir / "predictions.csv", cfg["eval"]["min_accuracy"])
    run.write_json("check.json", {"passed": not failures, "failures": failures})
    for f in failures:
        print(f"CHECK FAILED: {f}", file=sys.stderr)
    if failures:
        raise CheckFailed("; ".join(failures))
    print("check passed")
    return EXIT_OK


def check_report(report, predictions_path, min_accuracy: dict) -> list[str]:
    """Report invariants plus configured accuracy floors."""
    failures = []
    for scen, acc in report.accuracy.items():
        if not 0.0 <= acc <= 100.0:
            failures.append(f"{scen} accuracy {acc} outside [0, 100]")
    recount, counts = aggregate(read_predictions(predictions_path))
    if recount != report.accuracy or counts != report.counts:
        failures.append("accuracies do not match a recount of the prediction dump")
    for scen, floor in min_accuracy.items():
        if scen not in report.accuracy:
            failures.append(f"{scen}: no such scenario in the report")
        elif report.accuracy[scen] < floor:
            failures.append(f"{scen} accuracy {report.accuracy[scen]:.2f} < {floor}")
    return failures


def cmd_ablate(run: Run, cfg: dict, args) -> int:
    dataset, catalog = obtain_dataset(cfg)
    model = load_checkpoint(cfg["data"]["checkpoint"]) if cfg["data"].get("checkpoint") else None
    reports = ablation_suite(dataset, catalog, train_config(cfg), model=model)
    run.write_json("ablation.json", [r.to_dict() for r in reports])
    run.path("ablation.txt").write_text(reports_to_text(reports), encoding="utf-8")
    print(reports_to_text(reports), end="")
    return EXIT_OK


def cmd_sweep_k(run: Run, cfg: dict, args) -> int:
    model, dataset = _model_and_data(cfg)
    sweep = topk_sweep(model, dataset, cfg["eval"]["k_values"])
    write_sweep_csv(sweep, run.path("sweep_k.csv"))
    run.write_json("sweep_k.json", [{"k": k, **r.to_dict()} for k, r in sweep])
    return EXIT_OK


def cmd_dump_uncertainty(run: Run, cfg: dict, args) -> int:
    model, dataset = _model_and_data(cfg)
    samples = make_eval_scenarios(dataset)["A_all+B_all"]
    rows = uncertainty_dump(model, samples, int(cfg["eval"]["n_dump"]), seed=cfg["seed"])
    write_uncertainty_csv(rows, run.path("uncertainty.csv"))
    return EXIT_OK


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-k": cmd_sweep_k,
    "dump-uncertainty": cmd_dump_uncertainty,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmhcl", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key, dotted path")
    p.add_argument("--out", default="runs", help="parent directory for run directories (default: runs)")
    p.add_argument("--check", action="store_true", help="eval only: exit 3 if report checks fail")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def error_report(kind: str, exc: BaseException) -> None:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.check and args.command != "eval":
        error_report("config", ConfigError("--check only applies to eval"))
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.set)
        if args.command in ("eval", "sweep-k", "dump-uncertainty"):
            require(cfg, "checkpoint")
    except (ConfigError, ValueError) as exc:
        error_report("config", exc)
        return EXIT_CONFIG
    run = Run(args.command, cfg, Path(args.out))
    try:
        code = HANDLERS[args.command](run, cfg, args)
    except CheckFailed as exc:
        run.finish("complete", check="failed")
        return EXIT_CHECK
    except ConfigError as exc:
        run.finish("incomplete", error=str(exc))
        error_report("config", exc)
        return EXIT_CONFIG
    except (MmhclError, OSError, ValueError, ArithmeticError) as exc:
        run.finish("incomplete", error=str(exc))
        error_report("runtime", exc)
        return EXIT_RUNTIME
    run.finish("complete", **({"check": "passed"} if args.check else {}))
    print(f"run directory: {run.dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
