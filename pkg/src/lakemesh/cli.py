"""Command line front end: one subcommand per stage plus ``pipeline``.

Every stage reads and writes files, and ``pipeline`` calls the same stage
functions, so its intermediates match the individual subcommands byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import ingest, meshops, poisson, survey_sim, volume
from . import pointcloud as pc
from .config import ENV_VAR, PipelineConfig, load_config
from .errors import InputError, LakeMeshError, ParameterError

log = logging.getLogger("lakemesh")

# thread-count variables honoured by the BLAS/OpenMP runtimes numpy may load
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


# --------------------------------------------------------------------------
# stages (file in, file out)


def stage_ingest(log_path, out, cfg: PipelineConfig) -> dict:
    samples, report = ingest.parse_depth_log(Path(log_path))
    cloud = pc.to_utm_cloud(samples, cfg.waterline_z, cfg.utm_zone)
    cloud = pc.dedupe(cloud, cfg.dedupe_tolerance)
    cloud = pc.estimate_normals(cloud, cfg.normal_k)
    pc.write_cloud(cloud, out)
    ce, cn = pc.hull_centroid(pc.convex_hull_2d(cloud.points[:, :2]))
    return {
        "points": len(cloud),
        "samples": len(samples),
        "skipped_lines": report.n_skipped,
        "frame": str(cloud.frame),
        "hull_centroid_e": ce,
        "hull_centroid_n": cn,
    }


def stage_depthmap(cloud_path, out, cfg: PipelineConfig) -> dict:
    cloud = pc.read_cloud(cloud_path)
    grid = pc.rasterize_depth_map(cloud, cfg.depthmap_spacing, cfg.idw_power, cfg.idw_radius)
    pc.write_ascii_grid(grid, out)
    return {"ncols": grid.values.shape[0], "nrows": grid.values.shape[1], "cellsize": grid.spacing}


def stage_reconstruct(cloud_path, out, cfg: PipelineConfig, dump_chi=None) -> dict:
    cloud = pc.read_cloud(cloud_path)
    mesh, info = poisson.reconstruct_with_report(cloud, cfg.poisson_params())
    ingest.write_mesh(mesh, out)
    if dump_chi:
        poisson.dump_field(info["chi"], dump_chi)
    return {
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "grid_spacing": info["grid_spacing"],
        "dims": list(info["dims"]),
        "cg_iterations": info["cg_iterations"],
        "cg_residual": info["cg_residual"],
        "isovalue": info["isovalue"],
    }


def stage_repair(
    mesh_path,
    out,
    cfg: PipelineConfig,
    *,
    clip_below: float | None = None,
    footprint_cloud=None,
    keep_largest: bool = True,
) -> dict:
    mesh = ingest.read_mesh(mesh_path)
    footprint = None
    margin = 0.0
    if footprint_cloud is not None:
        cloud = pc.read_cloud(footprint_cloud)
        footprint = pc.convex_hull_2d(cloud.points[:, :2])
        margin = cfg.footprint_margin
        if margin is None:
            # half of the reconstruction spacing the same config gives for this cloud
            margin = 0.5 * cfg.poisson_params().spacing_for(cloud.points)
    fixed, report = meshops.repair(
        mesh,
        cfg.repair_alpha,
        clip_below=clip_below,
        footprint=footprint,
        footprint_margin=margin,
        keep_largest=keep_largest,
    )
    ingest.write_mesh(fixed, out)
    return {**report.as_dict(), "faces_in": mesh.n_faces, "faces_out": fixed.n_faces}


def parse_zone(text: str) -> tuple[int, str]:
    """``"14"``, ``"14N"`` or ``"utm/14S"`` -> (zone, hemisphere)."""
    t = text.strip().upper().removeprefix("UTM/")
    hemi = "N"
    if t and t[-1] in "NS":
        t, hemi = t[:-1], t[-1]
    try:
        zone = int(t)
    except ValueError:
        raise ParameterError(f"bad UTM zone {text!r}") from None
    if not 1 <= zone <= 60:
        raise ParameterError(f"UTM zone {zone} outside 1..60")
    return zone, hemi


def stage_georef(mesh_path, offsets_path, out, zone: int, hemisphere: str) -> dict:
    mesh = ingest.read_mesh(mesh_path)
    offset = meshops.OffsetRecord(*ingest.parse_offsets(Path(offsets_path)))
    geo = meshops.georeference(mesh, offset, zone, hemisphere)
    ingest.write_mesh(geo, out)
    return {"frame": str(geo.frame), "offset": list(offset.vector)}


def stage_merge(mesh_paths, out, cfg: PipelineConfig) -> dict:
    meshes = [ingest.read_mesh(p) for p in mesh_paths]
    merged = meshops.merge(meshes, cfg.weld_tolerance)
    ingest.write_mesh(merged, out)
    total = sum(m.n_vertices for m in meshes)
    return {"vertices": merged.n_vertices, "welded": total - merged.n_vertices, "faces": merged.n_faces}


def stage_close(mesh_path, out, cfg: PipelineConfig, dump_voxels=None) -> dict:
    mesh = ingest.read_mesh(mesh_path)
    closed, grid, basin = meshops.close_basin(mesh, cfg.voxel_spacing, cfg.close_radius, cfg.lid)
    ingest.write_mesh(closed, out)
    if dump_voxels:
        meshops.dump_voxels(grid, dump_voxels)
    check = meshops.watertight_check(closed)
    return {
        "faces": closed.n_faces,
        "watertight": check.closed,
        "voxel_dims": list(grid.dims),
        "gap_columns": basin.gap_columns,
        "lid": basin.lid,
    }


def stage_volume(mesh_path, cfg: PipelineConfig) -> volume.StageStorageCurve:
    mesh = ingest.read_mesh(mesh_path)
    return volume.stage_storage_curve(mesh, cfg.levels, cfg.capacity_spacing)


def stage_export_wgs84(mesh_path, out) -> dict:
    mesh = meshops.export_wgs84(ingest.read_mesh(mesh_path))
    ingest.write_mesh(mesh, out)
    return {"vertices": mesh.n_vertices, "frame": str(mesh.frame)}


def load_spec(source: str) -> survey_sim.SynthLakeSpec:
    """A JSON spec file, or ``preset:default`` / ``preset:paraboloid``."""
    presets = {"preset:default": survey_sim.default_preset, "preset:paraboloid": survey_sim.paraboloid_preset}
    if source in presets:
        return presets[source]()
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read spec {source}: {exc.strerror}") from None
    try:
        return survey_sim.SynthLakeSpec.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, LakeMeshError):
            raise
        raise InputError(f"bad survey spec {source}: {exc}") from None


def bank_offsets_path(bank: Path) -> Path:
    return bank.with_name(bank.stem + ".offsets.txt")


def run_pipeline(cfg: PipelineConfig, log_path, banks, out_dir) -> dict:
    """ingest -> depthmap -> reconstruct -> repair -> georef/repair banks -> merge -> close -> volume."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    summary = {}
    cloud = d / "cloud.ply"
    summary["ingest"] = stage_ingest(log_path, cloud, cfg)
    summary["depthmap"] = stage_depthmap(cloud, d / "depthmap.asc", cfg)
    summary["reconstruct"] = stage_reconstruct(cloud, d / "bed_raw.ply", cfg)
    summary["repair"] = stage_repair(d / "bed_raw.ply", d / "bed.ply", cfg, footprint_cloud=cloud)
    frame = pc.read_cloud(cloud).frame
    parts = [d / "bed.ply"]
    for i, bank in enumerate(banks, 1):
        bank = Path(bank)
        offsets = bank_offsets_path(bank)
        if not offsets.exists():
            raise InputError(f"bank {bank} has no offsets file {offsets.name}")
        utm = d / f"bank_{i}_utm.ply"
        clean = d / f"bank_{i}.ply"
        summary[f"georef_{i}"] = stage_georef(bank, offsets, utm, frame.zone, frame.hemisphere)
        summary[f"repair_bank_{i}"] = stage_repair(utm, clean, cfg, clip_below=cfg.clip_level)
        parts.append(clean)
    summary["merge"] = stage_merge(parts, d / "merged.ply", cfg)
    summary["close"] = stage_close(d / "merged.ply", d / "closed.ply", cfg)
    curve = stage_volume(d / "closed.ply", cfg)
    curve.write(d / "curve.csv")
    summary["curve"] = curve.samples()
    (d / "config.txt").write_text(cfg.dumps())
    return summary


# --------------------------------------------------------------------------
# argument handling


def _config_for(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {}
    for key in (
        "waterline_z",
        "utm_zone",
        "grid_spacing",
        "repair_alpha",
        "footprint_margin",
        "weld_tolerance",
        "voxel_spacing",
        "close_radius",
        "lid",
        "capacity_spacing",
        "idw_power",
        "idw_radius",
        "depthmap_spacing",
        "levels",
    ):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if not overrides:
        return cfg
    values = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    values.update(overrides)
    return PipelineConfig(**values)


def _levels_arg(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _cmd_ingest(args):
    _emit(stage_ingest(args.log, args.out, _config_for(args)))


def _cmd_depthmap(args):
    _emit(stage_depthmap(args.cloud, args.out, _config_for(args)))


def _cmd_reconstruct(args):
    _emit(stage_reconstruct(args.cloud, args.out, _config_for(args), args.dump_chi))


def _cmd_repair(args):
    cfg = _config_for(args)
    _emit(
        stage_repair(
            args.mesh,
            args.out,
            cfg,
            clip_below=args.clip_below,
            footprint_cloud=args.footprint,
            keep_largest=not args.keep_all,
        )
    )


def _cmd_georef(args):
    zone, hemi = parse_zone(args.zone)
    _emit(stage_georef(args.mesh, args.offsets, args.out, zone, hemi))


def _cmd_merge(args):
    _emit(stage_merge(args.meshes, args.out, _config_for(args)))


def _cmd_close(args):
    _emit(stage_close(args.mesh, args.out, _config_for(args), args.dump_voxels))


def _cmd_volume(args):
    curve = stage_volume(args.mesh, _config_for(args))
    sys.stdout.write(curve.to_csv())
    if args.plot_data:
        Path(args.plot_data).write_text(curve.to_plot_data())


def _cmd_simulate(args):
    spec = load_spec(args.spec)
    out = survey_sim.simulate_survey(spec)
    written = survey_sim.write_survey(out, args.out)
    _emit({"files": [p.name for p in written], "samples": out.manifest["n_samples"]})


def _cmd_pipeline(args):
    cfg = load_config(args.config_file)
    _emit(run_pipeline(cfg, args.log, args.banks, args.out))


def _cmd_export(args):
    _emit(stage_export_wgs84(args.mesh, args.out))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lakemesh", description="Bathymetric survey to closed lake mesh and capacity curve.")
    p.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="single-threaded reference mode (default on)",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, func, help_text, config=True):
        sp = sub.add_parser(name, help=help_text)
        if config:
            sp.add_argument("--config", help=f"key = value config file (default ${ENV_VAR})")
        sp.set_defaults(func=func)
        return sp

    sp = cmd("ingest", _cmd_ingest, "depth log -> UTM point cloud with normals")
    sp.add_argument("log")
    sp.add_argument("--out", required=True)
    sp.add_argument("--waterline-z", dest="waterline_z", type=float)
    sp.add_argument("--utm-zone", dest="utm_zone", type=int)

    sp = cmd("depthmap", _cmd_depthmap, "point cloud -> ESRI ASCII depth grid")
    sp.add_argument("cloud")
    sp.add_argument("--out", required=True)
    sp.add_argument("--spacing", dest="depthmap_spacing", type=float)
    sp.add_argument("--idw-power", dest="idw_power", type=float)
    sp.add_argument("--idw-radius", dest="idw_radius", type=float)

    sp = cmd("reconstruct", _cmd_reconstruct, "point cloud -> Poisson bed surface")
    sp.add_argument("cloud")
    sp.add_argument("--out", required=True)
    sp.add_argument("--grid-spacing", dest="grid_spacing", type=float)
    sp.add_argument("--dump-chi", help="write the indicator field to this file")

    sp = cmd("repair", _cmd_repair, "remove long-edge faces, reflections and floating parts")
    sp.add_argument("mesh")
    sp.add_argument("--out", required=True)
    sp.add_argument("--alpha", dest="repair_alpha", type=float)
    sp.add_argument("--clip-below", dest="clip_below", type=float)
    sp.add_argument("--footprint", help="point cloud whose plan hull bounds the mesh")
    sp.add_argument("--footprint-margin", dest="footprint_margin", type=float)
    sp.add_argument("--keep-all", action="store_true", help="keep every connected component")

    sp = cmd("georef", _cmd_georef, "apply a local->UTM offset to a local mesh", config=False)
    sp.add_argument("mesh")
    sp.add_argument("offsets")
    sp.add_argument("--zone", required=True, help="UTM zone, e.g. 14N")
    sp.add_argument("--out", required=True)

    sp = cmd("merge", _cmd_merge, "concatenate and weld meshes in one frame")
    sp.add_argument("meshes", nargs="+")
    sp.add_argument("--weld", dest="weld_tolerance", type=float)
    sp.add_argument("--out", required=True)

    sp = cmd("close", _cmd_close, "voxel closing -> watertight water body")
    sp.add_argument("mesh")
    sp.add_argument("--spacing", dest="voxel_spacing", type=float)
    sp.add_argument("--radius", dest="close_radius", type=int)
    sp.add_argument("--lid", type=float)
    sp.add_argument("--dump-voxels", help="write the closed voxel grid to this file")
    sp.add_argument("--out", required=True)

    sp = cmd("volume", _cmd_volume, "stage-storage CSV of a closed mesh to standard output")
    sp.add_argument("mesh")
    sp.add_argument("--levels", type=_levels_arg)
    sp.add_argument("--spacing", dest="capacity_spacing", type=float)
    sp.add_argument("--plot-data", help="also write whitespace columns for plotting")

    sp = cmd("simulate", _cmd_simulate, "synthetic survey from a spec file or preset:NAME", config=False)
    sp.add_argument("spec")
    sp.add_argument("--out", required=True)

    sp = cmd("pipeline", _cmd_pipeline, "full chain, writing every intermediate", config=False)
    sp.add_argument("config_file")
    sp.add_argument("log")
    sp.add_argument("banks", nargs="*", help="bank meshes; each needs a sibling <stem>.offsets.txt")
    sp.add_argument("--out", required=True)

    sp = cmd("export-wgs84", _cmd_export, "UTM mesh -> lon/lat/z mesh", config=False)
    sp.add_argument("mesh")
    sp.add_argument("--out", required=True)
    return p


def _error_line(cls: str, message: str) -> str:
    return f"error: {cls}: {' '.join(str(message).split())}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; map its status 2 onto the input-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.deterministic:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, "1")
    try:
        args.func(args)
    except LakeMeshError as exc:
        print(_error_line(exc.error_class, exc), file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(_error_line("input", f"{exc.strerror}: {exc.filename}"), file=sys.stderr)
        return 2
    except OSError as exc:
        print(_error_line("io", exc), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(_error_line("internal", f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
