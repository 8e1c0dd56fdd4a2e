"""Command-line front end: ``resflow train | analyze | compare``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .data import make_spiral
from .io import (ConfigError, RunConfig, dump_run_config, load_checkpoint, load_run_config,
                 make_run_config, read_dataset, save_checkpoint, write_csv, write_dataset,
                 write_grid_csv, write_pgm, write_points_csv, write_ppm)
from .losses import accuracy, round_trip_error
from .trainer import LOG_COLUMNS, TrainingDiverged, init_model, train

log = logging.getLogger("resflow")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3
PRODUCTS = ("jacobian", "boundary", "trajectories")
CHECKPOINT = "checkpoint.bin"
MANIFEST = "manifest.yaml"
DATASET = "dataset.csv"
TRAIN_LOG = "train_log.csv"
COMPARE_COLUMNS = ("variant", "accuracy", "J_min", "J_max", "negative_fraction",
                   "boundary_edges", "mean_ic_error")


class UsageError(Exception):
    pass


def _pair(text, n, kind, name):
    try:
        vals = [kind(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--{name}: expected {n} comma-separated values, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"--{name}: expected {n} comma-separated values, got {text!r}")
    return tuple(vals)


def _grid_args(args):
    res = _pair(args.grid, 2, int, "grid") if args.grid else analysis.DEFAULT_RESOLUTION
    box = _pair(args.box, 4, float, "box") if args.box else analysis.DEFAULT_BOX
    if min(res) < 2:
        raise UsageError("--grid: resolution must be at least 2,2")
    if not (box[1] > box[0] and box[3] > box[2]):
        raise UsageError(f"--box: degenerate box {box}")
    return res, box


# train

def run_training(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    dump_run_config(cfg, out / MANIFEST)
    data = make_spiral(cfg.spiral())
    write_dataset(out / DATASET, data)
    model, head = init_model(cfg.n_steps, cfg.hidden, cfg.dim, cfg.shared, cfg.scheme,
                             cfg.step_mode, cfg.use_bias, np.random.default_rng(cfg.seed))
    log.info("training %s: %d points, %d epochs", cfg.variant, len(data), cfg.epochs)
    try:
        result = train(data, model, head, cfg.loss_config(), cfg.train_config())
    except TrainingDiverged as err:
        save_checkpoint(out / CHECKPOINT, err.model, err.head, cfg.variant)
        _write_log(out / TRAIN_LOG, err.history)
        print(f"diverged: {err}; last good checkpoint written", file=sys.stderr)
        return EXIT_DIVERGED
    save_checkpoint(out / CHECKPOINT, result.model, result.head, cfg.variant)
    _write_log(out / TRAIN_LOG, result.history)
    acc = accuracy(result.model, result.head, data.points, data.labels)
    print(f"variant={cfg.variant} epochs={cfg.epochs} accuracy={acc:.17g}")
    return EXIT_OK


def _write_log(path, history):
    write_csv(path, LOG_COLUMNS, ([row[c] for c in LOG_COLUMNS] for row in history))


def cmd_train(args) -> int:
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.config:
        cfg = load_run_config(args.config, overrides)
    else:
        cfg = make_run_config(overrides)
    out = Path(args.out) if args.out else Path("runs") / cfg.variant
    return run_training(cfg, out)


# analyze

def _resolve_checkpoint(path: Path) -> Path:
    ckpt = path / CHECKPOINT if path.is_dir() else path
    if not ckpt.is_file():
        raise UsageError(f"no checkpoint at {path}")
    return ckpt


def _load_run(ckpt: Path):
    try:
        model, head, variant = load_checkpoint(ckpt)
    except ValueError as err:
        raise UsageError(f"{ckpt}: {err}") from err
    data_path = ckpt.parent / DATASET
    data = read_dataset(data_path) if data_path.is_file() else None
    return model, head, variant, data


def cmd_analyze(args) -> int:
    from . import plotting

    ckpt = _resolve_checkpoint(Path(args.checkpoint))
    products = [p.strip() for p in args.products.split(",") if p.strip()]
    bad = sorted(set(products) - set(PRODUCTS))
    if bad or not products:
        raise UsageError(f"--products: choose from {','.join(PRODUCTS)}")
    res, box = _grid_args(args)
    model, head, variant, data = _load_run(ckpt)
    if data is None:
        data = make_spiral()
    out = Path(args.out) if args.out else ckpt.parent / "analysis"
    out.mkdir(parents=True, exist_ok=True)

    if "jacobian" in products:
        grid = analysis.jacobian_map(model, box, res)
        write_grid_csv(out / "jacobian.csv", grid)
        write_ppm(out / "jacobian.ppm", grid.values)
        plotting.jacobian_figure(grid, out / "jacobian.png")
        jmin, jmax = grid.extrema()
        print(f"J_min={jmin:.17g} J_max={jmax:.17g} negative_fraction={grid.negative_fraction():.17g} "
              f"divergent_cells={int(grid.divergent.sum())}")
    if "boundary" in products:
        grid = analysis.decision_boundary(model, head, box, res)
        write_grid_csv(out / "boundary.csv", grid)
        write_pgm(out / "boundary.pgm", grid.values)
        plotting.boundary_figure(grid, out / "boundary.png", data)
        print(f"boundary_edges={analysis.boundary_edge_count(grid)}")
    if "trajectories" in products:
        traj = analysis.trajectories(model, data.points)
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for l, states in enumerate(traj):
            write_csv(tdir / f"layer_{l:03d}.csv", ("x1", "x2", "label"),
                      ((x1, x2, int(y)) for (x1, x2), y in zip(states, data.labels)))
        plotting.trajectory_figure(traj, data.labels, out / "trajectories.png")
        print(f"trajectory_snapshots={len(traj)}")
    return EXIT_OK


# compare

def _data_key(manifest: Path):
    cfg = load_run_config(manifest)
    return (cfg.n_per_class, cfg.turns, cfg.radius_scale, cfg.noise_sigma, cfg.data_seed)


def cmd_compare(args) -> int:
    from . import plotting

    res, box = _grid_args(args)
    runs = [Path(r) for r in args.runs]
    for r in runs:
        if not r.is_dir():
            raise UsageError(f"run directory {r} does not exist")
    keys = [(_data_key(r / MANIFEST) if (r / MANIFEST).is_file() else None) for r in runs]
    if len(set(keys)) > 1:
        raise UsageError("runs were trained on different datasets; comparison is invalid")

    rows, names, jgrids, bgrids, data = [], [], [], [], None
    for r in runs:
        model, head, variant, data = _load_run(_resolve_checkpoint(r))
        if data is None:
            raise UsageError(f"{r} has no {DATASET}")
        jg = analysis.jacobian_map(model, box, res)
        bg = analysis.decision_boundary(model, head, box, res)
        jmin, jmax = jg.extrema()
        name = variant or r.name
        rows.append((name, accuracy(model, head, data.points, data.labels), jmin, jmax,
                     jg.negative_fraction(), analysis.boundary_edge_count(bg),
                     float(np.mean(round_trip_error(model, data.points, check=False)))))
        names.append(name)
        jgrids.append(jg)
        bgrids.append(bg)

    out = Path(args.out) if args.out else Path("comparison")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "summary.csv", COMPARE_COLUMNS, rows)
    plotting.comparison_figure(names, jgrids, bgrids, out / "comparison.png", data)
    for row in rows:
        print(" ".join(f"{c}={v if isinstance(v, str) else format(v, '.6g')}"
                       for c, v in zip(COMPARE_COLUMNS, row)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one variant on the spiral task")
    p.add_argument("--config", help="flat key: value config file")
    p.add_argument("--out", help="run directory (default runs/<variant>)")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="Jacobian maps, decision boundaries, trajectories")
    p.add_argument("checkpoint", help="checkpoint file or run directory")
    p.add_argument("--products", default=",".join(PRODUCTS))
    p.add_argument("--grid", help="NX,NY (default 200,200)")
    p.add_argument("--box", help="X0,X1,Y0,Y1 (default -6,6,-6,6)")
    p.add_argument("--out", help="output directory (default <run>/analysis)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="summary table across run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--grid")
    p.add_argument("--box")
    p.add_argument("--out", help="output directory (default ./comparison)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
