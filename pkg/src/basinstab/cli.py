"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

from .config import load_config
from .gridmap import GridShapeMismatch, NoEligibleBoxes, ProbabilityGrid, difference_map, max_abs_change
from .harvesters import PRESETS, get_system
from .montecarlo import ConfigError, RunConfig, config_hash, default_domain, run_campaign
from .render import difference_svg, grid_svg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class DataError(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def output_stem(config: RunConfig) -> str:
    return f"{config.system_id}_{config.mismatch.tag}"


class _PercentProgress:
    def __init__(self, stream=None):
        self.stream = stream
        self.last = -1

    def __call__(self, done: int, total: int) -> None:
        pct = 100 if total == 0 else (100 * done) // total
        if pct != self.last:
            self.last = pct
            stream = self.stream or sys.stderr
            stream.write(json.dumps({"percent": pct, "done": done, "total": total}) + "\n")
            stream.flush()


def cmd_run(args) -> int:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    config = load_config(args.config, overrides)
    out = Path(args.output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = output_stem(config)
    marker = out / f"{stem}.incomplete"
    marker.write_text("run in progress or aborted; outputs in this set are not final\n")
    progress = _PercentProgress() if args.progress else None
    result = run_campaign(config, progress, workers=args.workers,
                          checkpoint=out / f"{stem}.checkpoint.npz")
    grid = result.grid
    grid.meta["mismatch_tag"] = config.mismatch.tag
    _write_text(out / f"{stem}.grid.csv", grid.to_csv())
    _write_text(out / f"{stem}.grid.json", grid.to_json())
    manifest = dict(result.manifest, outcome_split=result.periodic_split(),
                    outputs=[f"{stem}.grid.csv", f"{stem}.grid.json"])
    if config.sample_log or args.sample_log:
        header = f"# seed: {config.seed}\n# config_hash: {config_hash(config)}\n"
        _write_text(out / f"{stem}.samples.csv", header + result.sample_log_csv())
        manifest["outputs"].append(f"{stem}.samples.csv")
    if config.render or args.render:
        _write_text(out / f"{stem}.svg",
                    grid_svg(grid, title=f"{config.system_id.upper()} cross-well probability, "
                                         f"{config.mismatch.tag}"))
        manifest["outputs"].append(f"{stem}.svg")
    _write_json(out / f"{stem}.manifest.json", manifest)
    marker.unlink()
    print(json.dumps({"outputs": [str(out / f) for f in manifest["outputs"]],
                      "wall_time_s": manifest["wall_time_s"]}))
    return EXIT_OK


def _load_grid(path) -> ProbabilityGrid:
    try:
        return ProbabilityGrid.load(path)
    except FileNotFoundError:
        raise DataError(f"grid file not found: {path}") from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"cannot read grid {path}: {exc}") from None


def cmd_diff(args) -> int:
    a, b = _load_grid(args.grid_a), _load_grid(args.grid_b)
    diff = difference_map(a, b)
    try:
        stat = max_abs_change(a, b, args.min_samples)
    except NoEligibleBoxes:
        stat = None
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or f"{Path(args.grid_b).name.split('.')[0]}_minus_{Path(args.grid_a).name.split('.')[0]}"
    _write_text(out / f"{stem}.diff.csv", diff.to_csv())
    comments = {"grid_a": args.grid_a, "grid_b": args.grid_b,
                "seed_a": a.meta.get("seed"), "seed_b": b.meta.get("seed"),
                "config_hash_a": a.meta.get("config_hash"), "config_hash_b": b.meta.get("config_hash")}
    _write_text(out / f"{stem}.diff.svg",
                difference_svg(diff, title="change in cross-well probability", comments=comments))
    print(json.dumps({"max_abs_change": stat, "min_samples": args.min_samples,
                      "outputs": [str(out / f"{stem}.diff.csv"), str(out / f"{stem}.diff.svg")]}))
    return EXIT_OK


def cmd_render(args) -> int:
    grid = _load_grid(args.grid)
    path = Path(args.output or Path(args.grid).with_suffix(".svg"))
    _write_text(path, grid_svg(grid, title=args.title or ""))
    print(json.dumps({"outputs": [str(path)]}))
    return EXIT_OK


def cmd_presets(args) -> int:
    listing = {}
    for name, (sid, params) in PRESETS.items():
        spec = get_system(sid)
        dom = default_domain(sid)
        listing[name] = {
            "system_id": sid,
            "description": spec.description,
            "state": list(spec.state_names),
            "params": params.to_dict(),
            "mismatch_parameters": list(spec.mismatch_names),
            "domain": {"omega_range": list(dom.omega_range),
                       "amplitude_range": list(dom.amplitude_range),
                       "ic_ranges": {k: list(v) for k, v in dom.ic_ranges.items()},
                       "note": "excitation ranges are estimates"},
        }
    print(json.dumps(listing, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    config = load_config(args.config, args.override or [])
    print(json.dumps({"valid": True, "config_hash": config_hash(config),
                      "config": config.to_dict()}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="basinstab",
                                 description="Basin stability with parameter mismatch for "
                                             "bistable energy harvesters.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte-Carlo campaign from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="dotted-path override, e.g. mismatch.relative_bound=0.1")
    r.add_argument("--output-dir")
    r.add_argument("--workers", type=int, default=None,
                   help="worker processes (0 = auto; default from BASINSTAB_WORKERS or 1)")
    r.add_argument("--seed", type=int)
    r.add_argument("--render", action="store_true", help="also write an SVG heatmap")
    r.add_argument("--sample-log", action="store_true", help="also write a per-sample CSV log")
    r.add_argument("--progress", action="store_true", help="JSON progress lines on stderr")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("diff", help="difference map and max |change| between two grids")
    d.add_argument("grid_a", help="reference grid (CSV or JSON)")
    d.add_argument("grid_b", help="mismatched grid (CSV or JSON)")
    d.add_argument("--output-dir", default=".")
    d.add_argument("--name")
    d.add_argument("--min-samples", type=int, default=100)
    d.set_defaults(func=cmd_diff)

    v = sub.add_parser("render", help="render a grid file as an SVG heatmap")
    v.add_argument("grid")
    v.add_argument("--output")
    v.add_argument("--title")
    v.set_defaults(func=cmd_render)

    p = sub.add_parser("presets", help="list reference parameter presets")
    p.set_defaults(func=cmd_presets)

    c = sub.add_parser("validate", help="check a config without running it")
    c.add_argument("--config", required=True)
    c.add_argument("--override", action="append", metavar="KEY=VALUE")
    c.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is None and args.command == "run":
        env = os.environ.get("BASINSTAB_WORKERS")
        args.workers = int(env) if env else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GridShapeMismatch) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
