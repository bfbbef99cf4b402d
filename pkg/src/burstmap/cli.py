"""Command-line entry point.

    burstmap <subcommand> CONFIG [--seed N] [--out DIR] [--jobs N]

Subcommands: detect-latency, per-ray, sweep, remap-demo. Every run writes its
artifacts plus ``manifest.json`` to the output directory.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from burstmap.config import RunConfig, parse_config
from burstmap.detector import default_window_spec, detection_latency
from burstmap.evaluation import Evaluator, GridSpec, SweepOptions, sweep
from burstmap.factory import FactoryLayout, Remapper, default_layout
from burstmap.geometry import ConfigurationError
from burstmap.noise import RayEvent, RayModel

log = logging.getLogger("burstmap")

OUT_ENV = "BURSTMAP_OUT"


def build_layout(cfg: RunConfig) -> FactoryLayout:
    f = cfg.factory
    layout = default_layout(f.code_distances(), f.footprint, f.rotation_list())
    layout.buffer.d_buf = f.d_buf
    return layout


def _header(cfg: RunConfig) -> str:
    return f"# config_sha256={cfg.digest()} seed={cfg.seed}\n"


def _csv_text(cfg: RunConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(_header(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_text(cfg: RunConfig, payload: dict) -> str:
    doc = {"config_sha256": cfg.digest(), "seed": cfg.seed, **payload}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(type(v))


def _finite(v: float):
    return v if math.isfinite(v) else str(v)


def cmd_detect_latency(cfg: RunConfig, jobs: int) -> dict[str, str]:
    lat = cfg.latency
    model = RayModel(lat.model)
    det = cfg.detector
    noise = cfg.noise.spec()
    d_m = cfg.factory.distances.d_m
    c_t = 6 * d_m
    rows = []
    for r in lat.r_cre:
        spec = default_window_spec(model, r, d_m, det.fpr)
        if model is RayModel.DIRECT:
            variants = [(f, 0) for f in lat.f_t1]
        else:
            variants = [(None, i) for i in range(lat.rays)]
        for f, i in variants:
            ray = RayEvent(model, (0, 0), r, f if f is not None else 0.01, scramble_seed=cfg.seed * 100003 + i)
            rng = np.random.default_rng([cfg.seed, i, int(r * 1000)])
            cycles = detection_latency(ray, spec, det.coverage, det.latency_mode, noise=noise, rng=rng,
                                       n_streams=det.n_streams, max_cycles=det.max_cycles)
            rows.append((model.value, float(r), f, i, det.latency_mode, cycles, cycles / c_t))
    cols = ("model", "r_CRE", "f_T1", "ray", "mode", "cycles", "distillations")
    return {"latency.csv": _csv_text(cfg, cols, rows)}


def cmd_per_ray(cfg: RunConfig, jobs: int) -> dict[str, str]:
    layout = build_layout(cfg)
    ev = Evaluator(layout, cfg.factory.schedule_mode, cfg.noise.spec(), cfg.seed, cfg.noise.heterogeneous,
                   cfg.detector.fpr, cfg.factory.access)
    ray_kw = {"model": RayModel(cfg.ray.model), "r_cre": cfg.ray.r_cre, "f_t1": cfg.ray.f_t1}
    dist = ev.per_ray_overhead(ray_kw, cfg.trials)
    rows = [(c, p) for c, p in dist.histogram().items()]
    summary = {"model": cfg.ray.model, "r_CRE": cfg.ray.r_cre, "f_T1": cfg.ray.f_t1, "trials": cfg.trials,
               "p_inoperable": dist.p_inoperable, "mean_operable_cycles": _finite(dist.mean_operable_cycles),
               "default_cycles": layout.c_t}
    return {"per_ray.csv": _csv_text(cfg, ("cycles", "probability"), rows),
            "per_ray.json": _json_text(cfg, {"summary": summary})}


def cmd_sweep(cfg: RunConfig, jobs: int) -> dict[str, str]:
    s = cfg.sweep
    grid = GridSpec(s.model, s.f_t1, s.r_cre, s.gamma_toffline, s.detection, s.t_offline)
    opts = SweepOptions(trials=cfg.trials, seed=cfg.seed, methods=s.methods, epsilon=cfg.baselines.epsilon,
                        d_buf=cfg.factory.d_buf, schedule_mode=cfg.factory.schedule_mode,
                        latency_mode=cfg.detector.latency_mode, scrambling_latency=s.scrambling_latency,
                        latency_rays=s.latency_rays, latency_quantile=s.latency_quantile,
                        heterogeneous=cfg.noise.heterogeneous, fpr=cfg.detector.fpr,
                        access=cfg.factory.access, codes=tuple(cfg.baselines.code_list()))
    report = sweep(build_layout(cfg), grid, opts, cfg.noise.spec(), cfg.baselines.policy(), jobs=jobs)
    report.metadata["config_sha256"] = cfg.digest()
    return {"sweep.csv": _header(cfg) + report.to_csv(), "sweep.json": report.to_json()}


def cmd_remap_demo(cfg: RunConfig, jobs: int) -> dict[str, str]:
    layout = build_layout(cfg)
    remapper = Remapper(layout, cfg.factory.schedule_mode, cfg.factory.access)
    offline = [tuple(t) for t in cfg.remap_demo.offline]
    unknown = [t for t in offline if t not in remapper.graph.index]
    if unknown:
        raise ConfigurationError(f"remap_demo.offline: unknown tiles {unknown}")
    result = remapper.remap(offline)
    payload = {"offline": [list(t) for t in sorted(offline)], "default_cycles": layout.c_t,
               "result": result.to_json(remapper.graph)}
    return {"remap.json": _json_text(cfg, payload)}


COMMANDS = {
    "detect-latency": cmd_detect_latency,
    "per-ray": cmd_per_ray,
    "sweep": cmd_sweep,
    "remap-demo": cmd_remap_demo,
}


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("burstmap", "numpy", "scipy", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def run(command: str, cfg: RunConfig, out_dir: Path, jobs: int = 1) -> dict[str, str]:
    """Run a subcommand and write its artifacts plus a manifest into ``out_dir``."""
    artifacts = COMMANDS[command](cfg, jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in artifacts.items():
        (out_dir / name).write_text(text)
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "versions": _versions(),
        "artifacts": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(artifacts.items())},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return artifacts


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="burstmap", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help=f"output directory (default: config output_dir, ${OUT_ENV}, or ./results)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        out = Path(args.out or cfg.output_dir or os.environ.get(OUT_ENV) or "results")
        run(args.command, cfg, out, args.jobs)
    except ConfigurationError as exc:
        print(f"burstmap: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"burstmap: cannot write output: {exc}", file=sys.stderr)
        return 3
    log.info("wrote artifacts to %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
