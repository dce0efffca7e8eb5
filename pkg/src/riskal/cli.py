"""Command-line entry point: ``riskal generate | fit | simulate | report``.

Exit codes: 0 success, 2 configuration error, 3 inference failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .data import DatasetError, read_csv, to_csv_string
from .harness import (ExperimentConfig, Fitter, ScenarioError, SimulationError, SimulationResult,
                      compare, generate_synthetic, gold_standard_result, run_periodic, run_risk_based)
from .model import ModelError, build_model, priors_from_dict
from .sampler import SamplerError, sample

log = logging.getLogger("riskal")

EXIT_OK, EXIT_CONFIG, EXIT_INFERENCE, EXIT_IO = 0, 2, 3, 4
RHAT_LIMIT = 1.05


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    artifacts: list[str] = field(default_factory=list)
    duration_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps({"command": self.command, "config_hash": self.config_hash, "seed": self.seed,
                           "artifacts": self.artifacts, "duration_s": round(self.duration_s, 3)},
                          indent=2)


def config_hash(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, allow_nan=True) + "\n").encode()


def _load_config(path: str | None) -> tuple[ExperimentConfig, bytes, Path | None]:
    if path is None:
        cfg = ExperimentConfig()
        return cfg, json.dumps(cfg.to_dict(), sort_keys=True).encode(), None
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}", EXIT_IO) from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", EXIT_CONFIG) from exc
    return ExperimentConfig.from_dict(doc), raw, p.parent


def _write_all(outputs: dict[Path, bytes], force: bool) -> list[str]:
    """Write every output or none of them; refuses to overwrite without ``force``."""
    if not force:
        existing = [str(p) for p in outputs if p.exists()]
        if existing:
            raise CliError(f"refusing to overwrite {', '.join(existing)} (use --force)", EXIT_IO)
    written = []
    try:
        for p, data in outputs.items():
            p.parent.mkdir(parents=True, exist_ok=True)
            tmp = p.with_name(p.name + ".tmp")
            tmp.write_bytes(data)
            tmp.replace(p)
            written.append(str(p))
    except OSError as exc:
        raise CliError(f"cannot write {exc.filename}: {exc.strerror}", EXIT_IO) from exc
    return written


def _apply_threads(cfg: ExperimentConfig, threads: int | None) -> ExperimentConfig:
    if threads is None:
        return cfg
    if threads < 1:
        raise CliError("--threads must be >= 1", EXIT_CONFIG)
    s = cfg.scenario
    return replace(cfg, scenario=replace(s, sampler=replace(s.sampler, threads=threads)))


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> RunManifest:
    cfg, raw, _ = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    data = generate_synthetic(cfg.seeded_synthetic())
    out = Path(args.out)
    truth = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    truth_doc = {"seed": cfg.seed, "synthetic": cfg.synthetic.to_dict() | {"seed": cfg.seeded_synthetic().seed},
                 "tools": {str(k): v for k, v in data.truth.items()}}
    written = _write_all({out: to_csv_string(data).encode(), truth: _dump_json(truth_doc)}, args.force)
    return RunManifest("generate", config_hash(raw), cfg.seed, written)


def _read_dataset(path: str):
    try:
        return read_csv(path)
    except OSError as exc:
        raise CliError(f"cannot read dataset {path}: {exc.strerror}", EXIT_IO) from exc


def cmd_fit(args) -> RunManifest:
    cfg, raw, _ = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    cfg = _apply_threads(cfg, args.threads)
    scen = cfg.seeded_scenario()
    overrides = {k: v for k, v in (("warmup", args.warmup), ("draws", args.draws), ("chains", args.chains),
                                   ("target_accept", args.target_accept),
                                   ("max_tree_depth", args.max_tree_depth)) if v is not None}
    sampler_cfg = replace(scen.sampler, **overrides)
    likelihood = args.likelihood or scen.likelihood.value
    pooling = args.pooling or scen.pooling.value
    if args.priors:
        try:
            priors = priors_from_dict(likelihood, json.loads(Path(args.priors).read_text()))
        except OSError as exc:
            raise CliError(f"cannot read priors {args.priors}: {exc.strerror}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.priors}: invalid JSON ({exc})", EXIT_CONFIG) from exc
    elif args.likelihood and args.likelihood != scen.likelihood.value:
        priors = None
    else:
        priors = scen.priors
    data = _read_dataset(args.dataset)
    spec = build_model(pooling, likelihood, priors, data)
    samples, diag = sample(spec, sampler_cfg)

    out = Path(args.out_dir)
    summary = {"pooling": spec.pooling.value, "likelihood": spec.likelihood.value,
               "sampler": sampler_cfg.to_dict(), "diagnostics": diag.to_dict(),
               "parameters": samples.summary(diag)}
    written = _write_all({out / "posterior.csv": samples.to_csv_string().encode(),
                          out / "summary.json": _dump_json(summary)}, args.force)
    manifest = RunManifest("fit", config_hash(raw), cfg.seed, written)
    bad = {k: v for k, v in diag.rhat.items() if math.isfinite(v) and v > RHAT_LIMIT}
    if bad and not args.allow_unconverged:
        worst = max(bad, key=bad.get)
        print(manifest.to_json())
        raise CliError(f"{len(bad)} parameter(s) have R-hat above {RHAT_LIMIT} "
                       f"(worst {worst} = {bad[worst]:.3f}); rerun with more draws or "
                       f"pass --allow-unconverged", EXIT_INFERENCE)
    return manifest


def cmd_simulate(args) -> RunManifest:
    cfg, raw, base = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.policies:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "policies": args.policies})
    cfg = _apply_threads(cfg, args.threads)
    scen = cfg.seeded_scenario()
    if cfg.dataset:
        path = Path(cfg.dataset)
        data = _read_dataset(str(path if path.is_absolute() or base is None else base / path))
    else:
        data = generate_synthetic(cfg.seeded_synthetic())

    fitter = Fitter(data, scen)
    gold = gold_standard_result(data, scen, fitter)
    oracle = dict(gold.replacement_step)
    runners = {"risk_based": run_risk_based, "periodic": run_periodic}
    results = [runners[p](data, scen, fitter).settle(oracle, scen.decision) for p in cfg.policies]
    gold = gold.settle(oracle, scen.decision)

    out = Path(args.out_dir)
    outputs = {out / f"result_{r.policy}.json": _dump_json(r.to_dict()) for r in results}
    outputs[out / "oracle.json"] = _dump_json(gold.to_dict())
    outputs[out / "compare.csv"] = compare(results, oracle, scen.decision).to_csv_string().encode()
    written = _write_all(outputs, args.force)
    return RunManifest("simulate", config_hash(raw), cfg.seed, written)


REPORT_COLUMNS = ["policy", "inspections", "inspection_cost", "wasted_life_cost", "damage_cost", "total"]


def report_table(results: Sequence[SimulationResult]) -> tuple[list[str], list[list]]:
    """Rows for the cost table; the reduction column appears only with two or more policies."""
    if not results:
        raise ScenarioError("report needs at least one result")
    rows = []
    for r in results:
        if r.ledger is None:
            raise ScenarioError(f"{r.policy} result carries no ledger")
        recount = r.recount()
        if abs(recount.total - r.ledger.total) > 1e-12:
            raise ScenarioError(f"{r.policy}: ledger total {r.ledger.total} does not match "
                                f"timeline recount {recount.total}")
        rows.append([r.policy, r.inspections, r.ledger.inspection_cost, r.ledger.wasted_life_cost,
                     r.ledger.damage_cost, r.ledger.total])
    cols = list(REPORT_COLUMNS)
    if len(results) >= 2:
        cols.append("reduction_vs_first_pct")
        base = results[0].ledger.total
        for row in rows:
            total = row[5]
            row.append(0.0 if base == total else
                       (100.0 * (base - total) / base if base else -math.inf))
    return cols, rows


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def render_markdown(cols, rows) -> str:
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    lines += ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def render_csv(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in rows])
    return buf.getvalue()


def cmd_report(args) -> RunManifest:
    results, digest = [], hashlib.sha256()
    for path in args.results:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise CliError(f"cannot read result {path}: {exc.strerror}", EXIT_IO) from exc
        digest.update(raw)
        try:
            results.append(SimulationResult.from_dict(json.loads(raw)))
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})", EXIT_CONFIG) from exc
        except (KeyError, TypeError) as exc:
            raise CliError(f"{path}: malformed result ({exc})", EXIT_CONFIG) from exc
    cols, rows = report_table(results)
    text = render_markdown(cols, rows) if args.format == "md" else render_csv(cols, rows)
    if args.out is None:
        sys.stdout.write(text)
        written = []
    else:
        written = _write_all({Path(args.out): text.encode()}, args.force)
    return RunManifest("report", "sha256:" + digest.hexdigest(), 0, written)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="root seed; overrides the config")
    common.add_argument("--threads", type=int, help="worker threads for sampler chains")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="riskal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic population")
    g.add_argument("--out", required=True, help="dataset CSV path")
    g.add_argument("--truth", help="ground-truth JSON path (default: <out>.truth.json)")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", parents=[common], help="sample a posterior for a dataset")
    f.add_argument("dataset")
    f.add_argument("--out-dir", required=True)
    f.add_argument("--pooling", choices=["complete", "none", "partial"])
    f.add_argument("--likelihood", choices=["gaussian", "cauchy"])
    f.add_argument("--priors", help="prior hyperparameters (JSON)")
    f.add_argument("--warmup", type=int)
    f.add_argument("--draws", type=int)
    f.add_argument("--chains", type=int)
    f.add_argument("--target-accept", type=float)
    f.add_argument("--max-tree-depth", type=int)
    f.add_argument("--allow-unconverged", action="store_true")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", parents=[common], help="run inspection policies and the oracle")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--policies", help="comma-separated subset of risk,periodic")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", parents=[common], help="tabulate policy costs")
    r.add_argument("results", nargs="+")
    r.add_argument("--format", choices=["md", "csv"], default="md")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        manifest = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, ModelError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SamplerError, SimulationError) as exc:
        print(f"error: inference failed: {exc}", file=sys.stderr)
        return EXIT_INFERENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest.duration_s = time.perf_counter() - t0
    if args.command != "report" or args.out is not None:
        print(manifest.to_json())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
