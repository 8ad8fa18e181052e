"""Command line entry points: simulate, pipeline, evaluate, compare.

Exit codes: 0 success, 1 stage failure, 2 input validation failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import dataio, pipeline
from .geometry import ValidationError
from .metrics import coverage_heatmap, point_count_heatmap
from .refine import fix_dimensions


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise click.ClickException(f"config {path} must be a mapping")
    return config


def _apply_overrides(config: dict, seed, variant, point_sigma, pos_sigma, rot_sigma):
    if seed is not None:
        config["seed"] = seed
    if variant is not None:
        if variant not in pipeline.VARIANTS:
            raise click.ClickException(f"unknown variant {variant!r}")
        config["variant"] = variant
    noise = config.setdefault("noise", {})
    if point_sigma is not None:
        noise["point_sigma"] = point_sigma
    if pos_sigma is not None:
        noise["pos_sigma"] = pos_sigma
    if rot_sigma is not None:
        noise["rot_sigma"] = rot_sigma
    return config


@click.group()
def main() -> None:
    """Multi-LiDAR simulation, fusion, tracking and evaluation workbench."""


@main.command()
@click.option("--config", "-c", required=True, type=click.Path(exists=False))
@click.option("--output", "-o", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--variant", type=str, default=None)
@click.option("--point-sigma", type=float, default=None)
@click.option("--pos-sigma", type=float, default=None)
@click.option("--rot-sigma", type=float, default=None)
def simulate(config, output, seed, variant, point_sigma, pos_sigma, rot_sigma):
    """Simulate a scenario and write per-sensor frames, GT and a manifest."""
    cfg = _apply_overrides(_load_config(config), seed, variant,
                           point_sigma, pos_sigma, rot_sigma)
    outdir = Path(output) / f"sim-{pipeline.config_hash(cfg)}"
    try:
        manifest = pipeline.simulate_dataset(cfg, outdir)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {manifest['n_frames']} frames x "
               f"{len(manifest['sensors'])} sensors to {outdir}")


@main.command("pipeline")
@click.option("--manifest", "-m", required=True, type=click.Path())
@click.option("--output", "-o", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["single", "fused"]), default="fused")
@click.option("--sensor", type=int, default=None, help="sensor id for --mode single")
@click.option("--config", "-c", type=click.Path(), default=None,
              help="optional stage-parameter config")
def pipeline_cmd(manifest, output, mode, sensor, config):
    """Run fusion, pre-processing, detection, tracking and refinement."""
    try:
        man = dataio.read_manifest(Path(manifest))
    except (OSError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        click.echo(f"error: invalid manifest: {exc}", err=True)
        sys.exit(2)
    if mode == "single" and sensor is None:
        click.echo("error: --mode single requires --sensor", err=True)
        sys.exit(2)
    cfg = _load_config(config) if config else {}
    cfg.setdefault("variant", man["variant"])
    cfg.setdefault("rate", man["rate"])
    cfg.setdefault("seed", man["seed"])
    params = pipeline.params_from_config(cfg)
    params.intensity_max = man["intensity_max"]

    base = Path(manifest).parent
    tag = "fused" if mode == "fused" else f"s{sensor}"
    outdir = Path(output) / f"run-{tag}-{pipeline.config_hash(cfg)}"
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        result = pipeline.run_pipeline(
            pipeline.manifest_frame_iter(man, base),
            pipeline.manifest_poses(man),
            params, mode=mode, sensor=sensor,
        )
    except Exception as exc:  # stage failure
        click.echo(f"error: pipeline stage failed: {exc}", err=True)
        sys.exit(1)
    dataio.write_detections(outdir / "detections.csv", result.detections)
    dataio.write_trajectories(outdir / "tracks.csv", result.raw_trajectories)
    dataio.write_trajectories(outdir / "refined.csv", result.trajectories,
                              with_acceleration=True)
    dataio.write_fixed_dims(
        outdir / "fixed_dims.csv",
        {t.track_id: fix_dimensions(t) for t in result.trajectories},
    )
    click.echo(f"wrote tracks for {len(result.trajectories)} trajectories to {outdir}")


@main.command()
@click.option("--tracks", required=True, type=click.Path())
@click.option("--detections", type=click.Path(), default=None)
@click.option("--gt", required=True, type=click.Path())
@click.option("--output", "-o", required=True, type=click.Path())
@click.option("--rate", type=float, default=20.0)
@click.option("--l-t", type=float, default=10.0, help="trajectory length threshold (m)")
@click.option("--n-t", type=int, default=50, help="trajectory frame threshold")
def evaluate(tracks, detections, gt, output, rate, l_t, n_t):
    """Evaluate refined trajectories against ground truth."""
    for path in (tracks, gt):
        if not Path(path).exists():
            click.echo(f"error: missing input file {path}", err=True)
            sys.exit(2)
    trajs = dataio.read_trajectories(Path(tracks), rate)
    gt_records = dataio.read_gt(Path(gt))
    dets = dataio.read_detections(Path(detections)) if detections else []
    result = pipeline.StreamResult("eval", None, dets, trajs, trajs)
    try:
        report = pipeline.evaluate_run(result, gt_records,
                                       pipeline.RunParams(rate=rate),
                                       l_t=l_t, n_t=n_t)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    outdir = Path(output)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@main.command()
@click.option("--gt", required=True, type=click.Path(exists=True))
@click.option("--frames-dir", required=True, type=click.Path(exists=True),
              help="directory with world-frame point cloud CSVs (frame index order)")
@click.option("--sensor-id", type=int, default=0)
@click.option("--output", "-o", required=True, type=click.Path())
@click.option("--rate", type=float, default=20.0)
@click.option("--cell", type=float, default=4.0)
@click.option("--low", type=float, default=-56.0)
@click.option("--high", type=float, default=56.0)
def heatmaps(gt, frames_dir, sensor_id, output, rate, cell, low, high):
    """Point-count and coverage heat maps from staged world-frame clouds."""
    gt_records = dataio.read_gt(Path(gt))
    frames = {}
    for path in sorted(Path(frames_dir).glob(f"s{sensor_id}_f*.csv")):
        fi = int(path.stem.split("_f")[1])
        frames[fi] = dataio.read_frame(path, sensor_id, fi, fi / rate)
    hm = point_count_heatmap(gt_records, frames, low, high, cell)
    hw, hl, hh = coverage_heatmap(gt_records, frames, low, high, cell)
    outdir = Path(output)
    outdir.mkdir(parents=True, exist_ok=True)
    dataio.write_heatmap(outdir / "heatmap_points.csv", hm.mean())
    dataio.write_heatmap(outdir / "heatmap_coverage_w.csv", hw.mean())
    dataio.write_heatmap(outdir / "heatmap_coverage_l.csv", hl.mean())
    dataio.write_heatmap(outdir / "heatmap_coverage_h.csv", hh.mean())
    click.echo(f"wrote heat maps ({hm.n}x{hm.n} cells) to {outdir}")


@main.command()
@click.argument("report_a", type=click.Path(exists=True))
@click.argument("report_b", type=click.Path(exists=True))
def compare(report_a, report_b):
    """Per-metric delta table between two evaluation reports (A minus B)."""
    with open(report_a) as fh:
        a = json.load(fh)
    with open(report_b) as fh:
        b = json.load(fh)
    rows = []
    for key in ("mota", "motp", "motp_meters"):
        rows.append((key, a.get(key), b.get(key)))
    for grp in ("all", "vehicle", "vru"):
        for q in ("pos", "vel", "acc"):
            rows.append((f"deviation.{grp}.{q}",
                         a["deviation"][grp][q], b["deviation"][grp][q]))
    click.echo(f"{'metric':<28}{'A':>12}{'B':>12}{'A-B':>12}")
    for name, va, vb in rows:
        if va is None or vb is None:
            click.echo(f"{name:<28}{'n/a':>12}{'n/a':>12}{'n/a':>12}")
        else:
            click.echo(f"{name:<28}{va:>12.4f}{vb:>12.4f}{va - vb:>12.4f}")


if __name__ == "__main__":
    main()
