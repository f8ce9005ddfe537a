"""Command-line front end: ``run``, ``sweep`` and ``verify``.

Configuration files are INI documents whose sections and keys are listed in
``harness.SECTIONS``, plus an optional ``[output]`` section (``out``,
``format``) and, for sweeps, a ``[grid]`` section mapping keys to
comma-separated value lists. Exit codes: 0 success, 1 runtime failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import verify
from .harness import FIELD_SECTION, SECTIONS, ConfigError, RunResult, ScenarioConfig, apply_overrides, run_scenario, run_sweep

log = logging.getLogger(__name__)

COLUMNS = (
    "cell_id", "n_nodes", "v_max", "sinr_db", "p_m", "detector",
    "precision", "precision_ci90", "recall", "recall_ci90",
    "matching_accuracy", "matching_ci90", "epochs", "replicates",
)
FORMATS = ("csv", "json")
SEED_ENV = "FANET_SEED"
_DEFAULTS = {f.name: f.default for f in dataclasses.fields(ScenarioConfig)}
_OUTPUT_KEYS = ("out", "format")


# ---------------------------------------------------------------- config


def convert_value(key: str, text: str) -> Any:
    """Parse ``text`` for ScenarioConfig field ``key``, typed after its default."""
    if key not in _DEFAULTS or key == "cell_index":
        raise ConfigError(key, "unknown configuration key")
    where = f"{FIELD_SECTION.get(key, 'scenario')}.{key}"
    default = _DEFAULTS[key]
    text = text.strip()
    if key == "detectors":
        return tuple(x.strip() for x in text.split(",") if x.strip())
    try:
        if default is None:
            return None if text.lower() in ("", "none") else float(text)
        if isinstance(default, bool):
            raise ConfigError(where, "boolean keys are not supported")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(where, f"cannot parse {text!r} as {type(default or 0.0).__name__}") from None
    return text


def parse_grid(spec: str) -> list[dict[str, Any]]:
    """``"n_nodes=20,150; v_max=10,20"`` -> Cartesian product of the listed values, in order."""
    axes = []
    for part in (p.strip() for p in spec.split(";")):
        if not part:
            continue
        key, sep, values = part.partition("=")
        key = key.strip()
        items = [v for v in values.split(",") if v.strip()]
        if not sep or not key or not items:
            raise ConfigError("grid", f"malformed grid entry {part!r}; expected key=v1,v2,...")
        if key == "detectors":
            raise ConfigError("grid", "detectors cannot be swept; list them in [scenario]")
        axes.append((key, [convert_value(key, v) for v in items]))
    if not axes:
        raise ConfigError("grid", "empty grid specification")
    keys = [k for k, _ in axes]
    if len(set(keys)) != len(keys):
        raise ConfigError("grid", "a key appears twice in the grid")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]


@dataclasses.dataclass(frozen=True)
class RunConfigFile:
    scenario: ScenarioConfig
    grid: Optional[list[dict[str, Any]]] = None
    out: Optional[str] = None
    format: Optional[str] = None


def load_config(path: str | os.PathLike) -> RunConfigFile:
    """Read and validate a configuration file. Raises ConfigError on any problem."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive field names
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError("file", f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError("file", f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError("file", f"malformed config file: {exc}") from None

    overrides: dict[str, Any] = {}
    grid = None
    output: dict[str, str] = {}
    for section in parser.sections():
        items = parser.items(section)
        if section == "grid":
            grid = parse_grid(";".join(f"{k}={v}" for k, v in items))
            continue
        if section == "output":
            for key, value in items:
                if key not in _OUTPUT_KEYS:
                    raise ConfigError(f"output.{key}", "unknown configuration key")
                output[key] = value.strip()
            continue
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section; expected one of {sorted([*SECTIONS, 'output', 'grid'])}")
        for key, value in items:
            if key not in SECTIONS[section]:
                raise ConfigError(f"{section}.{key}", "unknown configuration key")
            overrides[key] = convert_value(key, value)
    fmt = output.get("format")
    if fmt is not None and fmt not in FORMATS:
        raise ConfigError("output.format", f"must be one of {FORMATS}")
    cfg = apply_overrides(ScenarioConfig(), overrides).validate()
    return RunConfigFile(cfg, grid, output.get("out"), fmt)


def resolve_seed(cfg: ScenarioConfig, flag: Optional[int]) -> ScenarioConfig:
    """Seed precedence: ``--seed`` flag, then $FANET_SEED, then the file."""
    if flag is not None:
        seed = flag
    elif os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError("scenario.seed", f"{SEED_ENV} is not an integer") from None
    else:
        return cfg
    return dataclasses.replace(cfg, seed=seed).validate()


# ---------------------------------------------------------------- output


def result_rows(results: Sequence[RunResult]) -> list[dict[str, Any]]:
    rows = []
    for cell_id, res in enumerate(results):
        c = res.config
        for name, s in res.summaries.items():
            acc = s.matching_accuracy
            rows.append({
                "cell_id": cell_id, "n_nodes": c.n_nodes, "v_max": c.v_max, "sinr_db": c.sinr_db, "p_m": c.p_m,
                "detector": name,
                "precision": s.precision.mean, "precision_ci90": s.precision.ci90,
                "recall": s.recall.mean, "recall_ci90": s.recall.ci90,
                "matching_accuracy": acc.mean if acc else None, "matching_ci90": acc.ci90 if acc else None,
                "epochs": res.epochs, "replicates": len(res.replicates),
            })
    return rows


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(rows: Sequence[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in COLUMNS])
    return buf.getvalue()


def to_json(rows: Sequence[dict[str, Any]], results: Sequence[RunResult]) -> str:
    cells = []
    for cell_id, res in enumerate(results):
        cfg = dataclasses.asdict(res.config)
        cfg.pop("cell_index")
        cells.append({
            "cell_id": cell_id,
            "config": cfg,
            "effective_range_m": res.derived.effective_range,
            "interference": res.derived.interference,
            "count_identity_holds": all(r.count_identity_holds for r in res.replicates),
            "premise_violations": sum(r.premise_violations for r in res.replicates),
            "mean_k_a": [r.mean_k_a for r in res.replicates],
            "mean_k_v": [r.mean_k_v for r in res.replicates],
        })
    doc = {"columns": list(COLUMNS), "rows": [dict(r) for r in rows], "cells": cells}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def write_results(results: Sequence[RunResult], out: Path, fmt: Optional[str]) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    rows = result_rows(results)
    written = []
    if fmt in (None, "csv"):
        p = out / "results.csv"
        p.write_bytes(to_csv(rows).encode("utf-8"))
        written.append(p)
    if fmt in (None, "json"):
        p = out / "results.json"
        p.write_bytes(to_json(rows, results).encode("utf-8"))
        written.append(p)
    return written


def _summary(results: Sequence[RunResult]) -> str:
    lines = []
    for r in result_rows(results):
        acc = "" if r["matching_accuracy"] is None else f" acc={r['matching_accuracy']:.4f}"
        lines.append(
            f"cell {r['cell_id']} N={r['n_nodes']} v_max={r['v_max']:g} p_m={r['p_m']:g} {r['detector']:<12}"
            f" P={r['precision']:.4f} R={r['recall']:.4f}{acc}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------- commands


def _out_dir(flag: Optional[str], conf: RunConfigFile) -> Path:
    return Path(flag or conf.out or "results")


def cmd_run(config: str, seed: Optional[int] = None, out: Optional[str] = None, fmt: Optional[str] = None) -> int:
    try:
        conf = load_config(config)
        cfg = resolve_seed(conf.scenario, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_scenario(cfg)
        paths = write_results([result], _out_dir(out, conf), fmt or conf.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(_summary([result]))
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_sweep(
    config: str, grid: Optional[str] = None, seed: Optional[int] = None, out: Optional[str] = None, fmt: Optional[str] = None
) -> int:
    try:
        conf = load_config(config)
        base = resolve_seed(conf.scenario, seed)
        cells = parse_grid(grid) if grid is not None else conf.grid
        if not cells:
            raise ConfigError("grid", "no grid given: pass --grid or add a [grid] section")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        results = run_sweep(base, cells)
        paths = write_results(results, _out_dir(out, conf), fmt or conf.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception("sweep failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(_summary(results))
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_verify(overrides: Optional[dict[str, dict]] = None) -> int:
    results = verify.run_all(overrides)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} oracle(s) failed: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} oracles passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fanet-sybil", description="Sybil detection simulations for UAV swarms.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="INI configuration file")
        sp.add_argument("--seed", type=int, help=f"master seed (overrides ${SEED_ENV} and the file)")
        sp.add_argument("--out", help="output directory (default: [output] out, else ./results)")
        sp.add_argument("--format", choices=FORMATS, help="write only this format (default: both)")

    common(sub.add_parser("run", help="run one scenario"))
    sweep = sub.add_parser("sweep", help="run one scenario per grid cell")
    common(sweep)
    sweep.add_argument("--grid", help='e.g. "n_nodes=20,150; v_max=10,20" (default: the [grid] section)')
    sub.add_parser("verify", help="run the built-in oracle checks")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.out, args.format)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.grid, args.seed, args.out, args.format)
    return cmd_verify()


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
