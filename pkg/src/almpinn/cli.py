"""Command-line entry point.

Subcommands:
  solve     train a forward solution and write run artifacts
  invert    recover PDE coefficients from noisy measurements (warm-started)
  evaluate  grid-evaluate a checkpoint against the exact solution
  sweep     run the inversion experiment matrix and summarize it
  selftest  run the built-in oracle suite
  report    render figures from a run directory's CSV outputs

Each run directory receives run.json (effective config echo + metrics),
history.csv, best.ckpt, metrics.csv and surface.csv.  Exit codes: 0 success,
2 usage, 3 bad configuration, 4 unknown problem, 5 output I/O failure,
6 checkpoint mismatch, 7 diverged run, 8 failed selftest.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .config import (ConfigError, build_run_config, load_config_file,
                     merge_mappings, normalize_data_term)
from .network import CheckpointError, CheckpointDimensionError, load_checkpoint
from .metrics import evaluate_on_grid, write_metrics_csv, write_surface_csv
from .problems import get_problem
from .train import DivergenceError, train_forward, train_inverse, write_run_artifacts

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PROBLEM = 4
EXIT_IO = 5
EXIT_CHECKPOINT = 6
EXIT_DIVERGED = 7
EXIT_SELFTEST = 8


def _parse_set(pairs):
    """--set a.b.c=value overrides, parsed with YAML scalar rules."""
    out: dict = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _effective_mapping(args, extra: dict) -> dict:
    mapping: dict = {}
    if getattr(args, "config", None):
        mapping = load_config_file(args.config)
    mapping = merge_mappings(mapping, extra)
    mapping = merge_mappings(mapping, _parse_set(getattr(args, "set", None)))
    return mapping


def _flag_overrides(args) -> dict:
    out: dict = {"problem": args.problem}
    if getattr(args, "method", None):
        out["method"] = args.method
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    train = {}
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    if getattr(args, "batches", None) is not None:
        train["batches"] = args.batches
    if train:
        out["train"] = train
    return out


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise _IoError(f"output directory {out} is not writable: {exc}") from exc
    return out


class _IoError(RuntimeError):
    pass


def cmd_solve(args) -> int:
    mapping = _effective_mapping(args, _flag_overrides(args))
    mapping["mode"] = "forward"
    cfg = build_run_config(mapping)
    out = _prepare_out(args.out)
    try:
        result = train_forward(cfg)
    except DivergenceError as exc:
        _write_partial_history(out, exc)
        print(f"run diverged at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    metrics = write_run_artifacts(cfg, result, out)
    print(f"{cfg.problem} {cfg.method} forward: eps_r={metrics['eps_r']:.6g} "
          f"best_gover={metrics['best_gover_loss']:.6g} -> {out}")
    return EXIT_OK


def cmd_invert(args) -> int:
    extra = _flag_overrides(args)
    extra["mode"] = "inverse"
    extra["inverse"] = {"pretrained": args.pretrained}
    if args.v_init is not None:
        raw = args.v_init
        extra["inverse"]["v_init"] = raw if raw in ("true", "midpoint") else yaml.safe_load(raw)
    if args.x_num is not None:
        extra["inverse"]["x_num"] = args.x_num
    if args.t_num is not None:
        extra["inverse"]["t_num"] = args.t_num
    if args.noise:
        extra["noise"] = {"distribution": args.noise, "level": args.level}
    if args.loss:
        extra.setdefault("loss", {})["data_term"] = normalize_data_term(args.loss)
    if args.v_bounds:
        extra.setdefault("optim", {})["v_bounds"] = list(args.v_bounds)
    mapping = _effective_mapping(args, extra)
    cfg = build_run_config(mapping)
    out = _prepare_out(args.out)
    pretrained = load_checkpoint(cfg.pretrained)
    try:
        result = train_inverse(cfg, pretrained)
    except DivergenceError as exc:
        _write_partial_history(out, exc)
        print(f"run diverged at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    metrics = write_run_artifacts(cfg, result, out)
    print(f"{cfg.problem} {cfg.method} inverse [{cfg.data_term}"
          f"/{cfg.noise_distribution}@{cfg.noise_level}]: "
          f"v=({metrics['v_1']:.5g}, {metrics['v_2']:.5g}) "
          f"errors=({metrics['error_v_1']:.4g}, {metrics['error_v_2']:.4g}) -> {out}")
    return EXIT_OK


def _write_partial_history(out: Path, exc: DivergenceError) -> None:
    from .train import HISTORY_COLUMNS
    with open(out / "history.csv", "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in exc.history:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")


def cmd_evaluate(args) -> int:
    net = load_checkpoint(args.checkpoint)
    pid = args.problem or net.problem
    problem = get_problem(pid, nu=args.nu)
    out = _prepare_out(args.out)
    grid = evaluate_on_grid(net, problem, args.nx, args.nt)
    write_metrics_csv(out / "metrics.csv", grid.report,
                      {"problem": pid, "checkpoint": str(args.checkpoint)})
    write_surface_csv(out / "surface.csv", grid)
    print(f"{pid}: eps_r={grid.report.eps_r:.6g} eps_inf={grid.report.eps_inf:.6g} "
          f"eps_a={grid.report.eps_a:.6g} -> {out}")
    return EXIT_OK


# -- sweep ---------------------------------------------------------------------


def _sweep_cell_run(task: dict) -> dict:
    """One (cell, seed) inversion; runs in a worker process."""
    try:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=1)
    except Exception:
        limiter = None
    try:
        cfg = build_run_config(task["mapping"])
        result = train_inverse(cfg, task["pretrained"])
        metrics = write_run_artifacts(cfg, result, task["out"])
        return {**task["ident"], "status": "ok",
                "v_1": metrics["v_1"], "v_2": metrics["v_2"],
                "error_v_1": metrics["error_v_1"], "error_v_2": metrics["error_v_2"]}
    except Exception as exc:
        return {**task["ident"], "status": f"failed: {exc}",
                "v_1": "", "v_2": "", "error_v_1": "", "error_v_2": ""}
    finally:
        if limiter is not None:
            limiter.unregister()


def build_sweep_tasks(args, base_mapping: dict) -> list[dict]:
    noises = [s.strip() for s in args.noise.split(",")]
    levels = [float(s) for s in args.levels.split(",")]
    losses = [normalize_data_term(s.strip()) for s in args.losses.split(",")]
    methods = [s.strip() for s in args.methods.split(",")]
    pretrained = {"alm": args.pretrained_alm, "pinns": args.pretrained_pinns}
    for method in methods:
        if not pretrained.get(method):
            raise ConfigError(f"sweep needs --pretrained-{method}")
    tasks = []
    cell_index = 0
    for noise in noises:
        for level in levels:
            for loss in losses:
                for method in methods:
                    for rep in range(args.seeds):
                        seed = args.seed_base + 1000 * cell_index + rep
                        cell_dir = (Path(args.out) / f"cell{cell_index:03d}_{method}"
                                    f"_{loss}_{noise}_{level:g}" / f"seed{seed}")
                        mapping = merge_mappings(base_mapping, {
                            "problem": args.problem, "method": method,
                            "mode": "inverse", "seed": seed,
                            "loss": {"data_term": loss},
                            "noise": {"distribution": noise, "level": level},
                            "inverse": {"pretrained": pretrained[method]},
                        })
                        tasks.append({
                            "mapping": mapping,
                            "pretrained": pretrained[method],
                            "out": str(cell_dir),
                            "ident": {"problem": args.problem, "cell": cell_index,
                                      "method": method, "loss": loss,
                                      "noise": noise, "level": level, "seed": seed},
                        })
                    cell_index += 1
    return tasks


SWEEP_COLUMNS = ("problem", "cell", "method", "loss", "noise", "level", "seed",
                 "v_1", "v_2", "error_v_1", "error_v_2", "status")


def write_sweep_summary(path, rows: list[dict]) -> None:
    """Long-format table, one row per (cell, seed) plus a median row per cell."""
    by_cell: dict[int, list[dict]] = {}
    for row in rows:
        by_cell.setdefault(row["cell"], []).append(row)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        wr.writeheader()
        for cell in sorted(by_cell):
            ok_rows = [r for r in by_cell[cell] if r["status"] == "ok"]
            for row in by_cell[cell]:
                wr.writerow({k: row.get(k, "") for k in SWEEP_COLUMNS})
            if ok_rows:
                med = dict(ok_rows[0])
                med["seed"] = "median"
                for keyname in ("v_1", "v_2", "error_v_1", "error_v_2"):
                    med[keyname] = float(np.median([r[keyname] for r in ok_rows]))
                med["status"] = f"ok ({len(ok_rows)}/{len(by_cell[cell])})"
                wr.writerow({k: med.get(k, "") for k in SWEEP_COLUMNS})


def cmd_sweep(args) -> int:
    base_mapping: dict = {}
    if args.config:
        base_mapping = load_config_file(args.config)
    base_mapping = merge_mappings(base_mapping, _parse_set(args.set))
    tasks = build_sweep_tasks(args, base_mapping)
    out = _prepare_out(args.out)
    if not tasks:
        write_sweep_summary(out / "sweep_summary.csv", [])
        print("empty sweep")
        return EXIT_OK
    for task in tasks:  # validate every cell before burning compute
        build_run_config(task["mapping"])
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell_run, tasks))
    else:
        rows = [_sweep_cell_run(task) for task in tasks]
    write_sweep_summary(out / "sweep_summary.csv", rows)
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"sweep: {len(rows) - failed}/{len(rows)} runs ok -> {out / 'sweep_summary.csv'}")
    return EXIT_OK


def cmd_selftest(_args) -> int:
    from .selftest import run_checks
    results = run_checks()
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name} - {r.detail}")
    n_fail = sum(1 for r in results if not r.passed)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_SELFTEST


def cmd_report(args) -> int:
    from .report import render_run
    paths = render_run(args.run, args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="almpinn",
                                 description="PDE solving and coefficient inversion "
                                             "with constraint-trained networks")
    sub = ap.add_subparsers(dest="command", required=True)

    def common_run_flags(p):
        p.add_argument("--problem", required=True, choices=("nl1d", "burgers"))
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", required=True, help="run output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batches", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VAL",
                       help="override any config key, e.g. --set optim.poi_weight=10")

    ps = sub.add_parser("solve", help="train a forward solution")
    common_run_flags(ps)
    ps.add_argument("--method", choices=("alm", "pinns"), default="alm")
    ps.set_defaults(func=cmd_solve)

    pi = sub.add_parser("invert", help="recover PDE coefficients")
    common_run_flags(pi)
    pi.add_argument("--method", choices=("alm", "pinns"), default="alm")
    pi.add_argument("--pretrained", required=True, help="forward checkpoint (.ckpt)")
    pi.add_argument("--noise", choices=("gaussian", "laplace", "lognormal"))
    pi.add_argument("--level", type=float, default=0.0)
    pi.add_argument("--loss", help="data term: l2|l1|logn")
    pi.add_argument("--v-bounds", nargs=2, type=float, metavar=("LO", "HI"))
    pi.add_argument("--v-init", help="midpoint | true | number")
    pi.add_argument("--x-num", type=int)
    pi.add_argument("--t-num", type=int)
    pi.set_defaults(func=cmd_invert)

    pe = sub.add_parser("evaluate", help="evaluate a checkpoint on the exact solution")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--problem", choices=("nl1d", "burgers"))
    pe.add_argument("--nu", type=float, default=0.1)
    pe.add_argument("--nx", type=int, default=100)
    pe.add_argument("--nt", type=int, default=100)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_evaluate)

    pw = sub.add_parser("sweep", help="inversion experiment matrix")
    pw.add_argument("--problem", required=True, choices=("nl1d", "burgers"))
    pw.add_argument("--config", help="base YAML config for every cell")
    pw.add_argument("--noise", default="gaussian", help="comma list of distributions")
    pw.add_argument("--levels", default="0.02,0.2", help="comma list of noise levels")
    pw.add_argument("--losses", default="l2", help="comma list of data terms")
    pw.add_argument("--methods", default="pinns,alm", help="comma list of methods")
    pw.add_argument("--seeds", type=int, default=1, help="replicates per cell")
    pw.add_argument("--seed-base", type=int, default=0)
    pw.add_argument("--jobs", type=int, default=1)
    pw.add_argument("--pretrained-alm", help="forward ALM checkpoint")
    pw.add_argument("--pretrained-pinns", help="forward PINNs checkpoint")
    pw.add_argument("--out", required=True)
    pw.add_argument("--set", action="append", metavar="KEY=VAL")
    pw.set_defaults(func=cmd_sweep)

    pt = sub.add_parser("selftest", help="run the oracle suite")
    pt.set_defaults(func=cmd_selftest)

    pr = sub.add_parser("report", help="render figures from run CSVs")
    pr.add_argument("--run", required=True, help="run or sweep directory")
    pr.add_argument("--out", help="figure directory (default: alongside the CSVs)")
    pr.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"unknown problem: {exc}", file=sys.stderr)
        return EXIT_PROBLEM
    except CheckpointDimensionError as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except _IoError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
