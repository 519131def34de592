"""Command-line entry point: ``slotgoal {gen,eval,sweep,overlay,stub}``.

Exit codes: 0 success, 1 harness failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from .bench import load_trials, write_benchmark
from .config import ConfigError, RunConfig, load_config
from .evaluate import BackendSpec, SuiteReport, evaluate_trials, run_suite
from .geometry import BehindCamera, WorldPoint, project
from .remote import API_KEY_ENV, StubServer, drop, echo, resize_to
from .render import render_goal_overlays, save_rgb
from .report import plot_sweep, sweep_rows, write_report
from .scene import CATEGORIES, loads_scene

log = logging.getLogger("slotgoal")

EXIT_OK, EXIT_HARNESS, EXIT_CONFIG = 0, 1, 2


def _csv_list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _floats(s: str) -> tuple:
    try:
        return tuple(float(x) for x in s.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    g.add_argument("--categories", type=_csv_list, help=f"comma list from: {','.join(CATEGORIES)}")
    g.add_argument("--variants", type=int, help="scene variants per category (default 5)")
    g.add_argument("--trials", type=int, help="trials per category (default 50)")
    g.add_argument("--seed", type=int, help="root seed (default 0)")
    g.add_argument("--backend", choices=("oracle", "perturbed", "remote"))
    g.add_argument("--sigma-px", type=float, help="pixel noise for the perturbed backend")
    g.add_argument("--endpoint", help=f"URL for the remote backend; credentials come from ${API_KEY_ENV}")
    g.add_argument("--timeout", type=float, help="remote request timeout in seconds")
    g.add_argument("--exec-sigma", type=float, help="executor lateral noise std in meters (default 0.002)")
    g.add_argument("--radius", type=float, help="goal sphere radius in meters (default 0.015)")
    g.add_argument("--resolution", type=int, nargs=2, metavar=("W", "H"))
    g.add_argument("--out", help="output root (default ./out)")
    g.add_argument("--verbose-artifacts", action="store_true", default=None,
                   help="also write overlays for successful trials")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slotgoal", description="Slot-level placement benchmark with visual goals.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate scenes, instructions, calibration and renders")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a backend on a generated benchmark")
    _common(p)
    p.add_argument("--bench", help="benchmark directory (default <out>/benchmark)")
    p.add_argument("--run-name", help="report directory name under <out>/runs (default: timestamp)")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("sweep", help="grounding-noise sweep with the perturbed backend")
    _common(p)
    p.add_argument("--sigmas", type=_floats, default=(0.0, 2.0, 5.0, 10.0), help="comma list of pixel sigmas")
    p.add_argument("--run-name")

    p = sub.add_parser("overlay", help="draw a goal marker for a slot or anchor into all views")
    p.add_argument("scene", help="scene.json file")
    tgt = p.add_mutually_exclusive_group(required=True)
    tgt.add_argument("--slot", help="ROW,COL (1-based, rows from the front)")
    tgt.add_argument("--anchor", type=_floats, help="X,Y,Z in meters, world frame (write --anchor=-0.1,... for negative values)")
    p.add_argument("--radius", type=float, default=0.015)
    p.add_argument("--out", default="overlay")

    p = sub.add_parser("stub", help="serve the bundled stub image-edit backend")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--mode", choices=("echo", "resize", "drop"), default="echo")
    return ap


def make_config(args) -> RunConfig:
    base = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return base.with_overrides(
        categories=args.categories, variants=args.variants, trials=args.trials, seed=args.seed,
        backend=args.backend, sigma_px=args.sigma_px, endpoint=args.endpoint, timeout=args.timeout,
        exec_sigma=args.exec_sigma, radius=args.radius,
        resolution=tuple(args.resolution) if args.resolution else None,
        out=args.out, verbose_artifacts=args.verbose_artifacts,
    )


def _writable_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"output directory {path} is not writable: {e}") from e
    return path


def _run_dir(cfg: RunConfig, name: str | None) -> Path:
    return _writable_dir(Path(cfg.out) / "runs" / (name or time.strftime("%Y%m%d-%H%M%S")))


def cmd_gen(cfg: RunConfig) -> int:
    root = _writable_dir(Path(cfg.out) / "benchmark")
    write_benchmark(cfg, root)
    n = len(cfg.categories) * cfg.variants
    print(f"wrote {n} scenes ({cfg.generation_fingerprint()}) to {root}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, bench: str | None = None, run_name: str | None = None, figures: bool = True) -> int:
    root = Path(bench) if bench else Path(cfg.out) / "benchmark"
    # materialized up front so fingerprint or layout problems surface before any grounding
    specs = list(load_trials(cfg, root))
    run_dir = _run_dir(cfg, run_name)
    records = evaluate_trials(
        specs, cfg.backend_spec(), cfg.exec_sigma, cfg.radius, cfg.thresholds,
        run_dir, cfg.verbose_artifacts,
    )
    report = SuiteReport.from_records(records, cfg.backend_spec().label, cfg.fingerprint())
    paths = write_report(report, records, run_dir, figures)
    (run_dir / "config.json").write_text(json.dumps(
        {"fingerprint": cfg.fingerprint(), "config": cfg.to_dict()}, indent=2, sort_keys=True, default=str) + "\n")
    print(paths["text"].read_text(), end="")
    print(f"report written to {run_dir}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, sigmas, run_name: str | None = None) -> int:
    run_dir = _run_dir(cfg, run_name)
    points = []
    for s in sigmas:
        if s < 0:
            raise ConfigError("sigmas must be nonnegative")
        spec = BackendSpec("perturbed", s)
        rep, recs = run_suite(cfg.categories, cfg.variants, cfg.trials, cfg.seed, spec, cfg.exec_sigma,
                              cfg.radius, cfg.thresholds, cfg.resolution, fingerprint=cfg.fingerprint())
        write_report(rep, recs, run_dir / f"sigma_{s:g}", figures=False)
        points.append((s, rep))
        o = rep.overall
        print(f"sigma={s:g}px  SR={o.sr:.1f}  IA={o.ia:.1f}  CA={o.ca:.1f}")
    with open(run_dir / "sweep.csv", "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(sweep_rows(points))
    plot_sweep(points, run_dir / "sweep.png")
    print(f"sweep written to {run_dir}")
    return EXIT_OK


def cmd_overlay(scene_path: str, slot: str | None, anchor, radius: float, out: str) -> int:
    try:
        scene = loads_scene(Path(scene_path).read_text())
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"cannot read scene {scene_path}: {e}") from e
    if not radius > 0:
        raise ConfigError("radius must be positive")
    if slot is not None:
        try:
            r, c = (int(x) for x in slot.split(","))
            point = scene.tray.slot(r, c).center
        except (ValueError, KeyError, IndexError) as e:
            raise ConfigError(f"bad slot index {slot!r} for a {scene.tray.rows}x{scene.tray.cols} tray") from e
    else:
        if len(anchor) != 3:
            raise ConfigError("anchor needs three coordinates")
        point = WorldPoint(*anchor)
    out_dir = _writable_dir(Path(out))
    for cid, cam in scene.cameras.items():
        try:
            project(point, cam)
        except BehindCamera:
            log.warning("anchor is behind the %s camera; its overlay has no marker", cid)
    for cid, img in render_goal_overlays(scene, point, radius).items():
        save_rgb(out_dir / f"{cid}_overlay.png", img)
    print(f"overlays written to {out_dir}")
    return EXIT_OK


def cmd_stub(host: str, port: int, mode: str) -> int:
    responder = {"echo": echo, "drop": drop, "resize": resize_to(320, 240)}[mode]
    server = StubServer(responder, host, port)
    print(f"stub backend ({mode}) listening at {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "overlay":
            return cmd_overlay(args.scene, args.slot, args.anchor, args.radius, args.out)
        if args.cmd == "stub":
            return cmd_stub(args.host, args.port, args.mode)
        cfg = make_config(args)
        if args.cmd == "gen":
            return cmd_gen(cfg)
        if args.cmd == "eval":
            return cmd_eval(cfg, args.bench, args.run_name, not args.no_figures)
        return cmd_sweep(cfg, args.sigmas, args.run_name)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # anything else is a harness bug or I/O failure
        log.exception("harness failure")
        print(f"harness failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_HARNESS


if __name__ == "__main__":
    sys.exit(main())
