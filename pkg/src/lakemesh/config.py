"""Flat ``key = value`` pipeline configuration."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ParameterError
from .poisson import ReconstructionParams

ENV_VAR = "LAKEMESH_CONFIG"


def _auto_float(text: str) -> float | None:
    return None if text.strip().lower() == "auto" else float(text)


def _auto_int(text: str) -> int | None:
    return None if text.strip().lower() == "auto" else int(text)


def _levels(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


@dataclass
class PipelineConfig:
    waterline_z: float = 0.0
    utm_zone: int | None = None  # None = zone of the hull centroid
    dedupe_tolerance: float = 1e-6
    normal_k: int = 16
    grid_spacing: float | None = None
    padding_cells: int = 4
    vertical_padding_cells: int = 16
    splat_radius_cells: int = 1
    cg_tolerance: float = 1e-7
    cg_max_iters: int = 5000
    repair_alpha: float = 4.0
    footprint_margin: float | None = None  # None = half the grid spacing
    bank_clip_below: float | None = None  # None = waterline_z
    weld_tolerance: float = 1e-6
    voxel_spacing: float = 0.5
    close_radius: int = 2
    lid: float | None = None  # None = highest merged vertex
    capacity_spacing: float = 0.25
    idw_power: float = 2.0
    idw_radius: float | None = None  # None = 3 x mean nearest-neighbour spacing
    depthmap_spacing: float = 1.0
    levels: list = field(default_factory=lambda: [-3.0, -2.0, -1.0, 0.0])

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.utm_zone is not None and not 1 <= self.utm_zone <= 60:
            raise ParameterError("utm_zone must be auto or 1..60")
        for name in ("voxel_spacing", "capacity_spacing", "depthmap_spacing", "idw_power"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("idw_radius", "footprint_margin"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.idw_radius is not None and self.idw_radius == 0:
            raise ParameterError("idw_radius must be positive")
        if self.normal_k < 3:
            raise ParameterError("normal_k must be >= 3")
        if self.dedupe_tolerance < 0 or self.weld_tolerance < 0:
            raise ParameterError("tolerances must be >= 0")
        if not self.repair_alpha > 1:
            raise ParameterError("repair_alpha must exceed 1")
        if self.close_radius < 1:
            raise ParameterError("close_radius must be >= 1")
        if not self.levels or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ParameterError("levels must be a non-empty ascending list")
        if not all(math.isfinite(v) for v in self.levels):
            raise ParameterError("levels must be finite")
        self.poisson_params()  # validates the reconstruction group

    def poisson_params(self) -> ReconstructionParams:
        return ReconstructionParams(
            grid_spacing=self.grid_spacing,
            padding_cells=self.padding_cells,
            vertical_padding_cells=self.vertical_padding_cells,
            cg_tolerance=self.cg_tolerance,
            cg_max_iters=self.cg_max_iters,
            splat_radius_cells=self.splat_radius_cells,
        )

    @property
    def clip_level(self) -> float:
        return self.waterline_z if self.bank_clip_below is None else self.bank_clip_below

    def dumps(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                text = "auto"
            elif isinstance(v, list):
                text = ", ".join(repr(float(x)) for x in v)
            else:
                text = repr(v)
            out.append(f"{f.name} = {text}")
        return "\n".join(out) + "\n"


_PARSERS = {
    "waterline_z": float,
    "utm_zone": _auto_int,
    "dedupe_tolerance": float,
    "normal_k": int,
    "grid_spacing": _auto_float,
    "padding_cells": int,
    "vertical_padding_cells": int,
    "splat_radius_cells": int,
    "cg_tolerance": float,
    "cg_max_iters": int,
    "repair_alpha": float,
    "footprint_margin": _auto_float,
    "bank_clip_below": _auto_float,
    "weld_tolerance": float,
    "voxel_spacing": float,
    "close_radius": int,
    "lid": _auto_float,
    "capacity_spacing": float,
    "idw_power": float,
    "idw_radius": _auto_float,
    "depthmap_spacing": float,
    "levels": _levels,
}


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {no}: expected key = value")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise ParameterError(f"config line {no}: unknown key {key!r}")
        if key in values:
            raise ParameterError(f"config line {no}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError:
            raise ParameterError(f"config line {no}: bad value for {key}: {val!r}") from None
    return PipelineConfig(**values)


def load_config(path=None) -> PipelineConfig:
    """Read ``path``, else the file named by ``$LAKEMESH_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
