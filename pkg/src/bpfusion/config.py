"""
Experiment configuration: strict JSON schema, defaults and conversion into
the runtime objects used by the estimators.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ParseError, ValidationError
from .fusion import PriorBox
from .geometry import Scene
from .scene import SnrModel
from .solvers import GridSpec, PcgaParams, check_grids
from .waveform import OfdmConfig

METHODS = ("bayes", "signal_nc", "signal_c", "param_hard", "param_soft", "symbol",
           "traversal_oracle")

DATA_DIR = Path(__file__).parent / "data"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OfdmSection(_Strict):
    fc: float = Field(gt=0, description="carrier frequency, Hz")
    delta_f: float = Field(gt=0, description="subcarrier spacing, Hz")
    tp: float = Field(gt=0, description="symbol repetition interval, s")
    k: int = Field(ge=2)
    l: int = Field(ge=2)
    antennas: int = Field(default=64, ge=1, description="elements per AP array (metadata)")


class SceneSection(_Strict):
    tx_aps: list[tuple[float, float]] = Field(min_length=1)
    rx_aps: list[tuple[float, float]] = Field(min_length=1)
    target_pos: tuple[float, float]
    target_vel: tuple[float, float] = (0.0, 0.0)


class SnrSection(_Strict):
    mode: Literal["fixed_snr", "radar_equation"] = "fixed_snr"
    rho2_db: Optional[list[float]] = None
    pt_dbm: Optional[float] = None
    gain: Optional[float] = Field(default=None, gt=0)
    rcs_mean: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _mode_fields(self):
        if self.mode == "fixed_snr" and not self.rho2_db:
            raise ValueError("fixed_snr mode needs rho2_db")
        if self.mode == "radar_equation":
            missing = [n for n in ("pt_dbm", "gain", "rcs_mean") if getattr(self, n) is None]
            if missing:
                raise ValueError(f"radar_equation mode needs {', '.join(missing)}")
        return self


class PriorSection(_Strict):
    pos: tuple[float, float, float, float]
    vel: tuple[float, float, float, float]

    @field_validator("pos", "vel")
    @classmethod
    def _ordered(cls, box):
        if not (box[0] < box[1] and box[2] < box[3]):
            raise ValueError("box must be (min_x, max_x, min_y, max_y) with min < max")
        return box


class GridSection(_Strict):
    pos_step: Optional[float] = Field(default=None, gt=0)
    vel_step: Optional[float] = Field(default=None, gt=0)


class RefineSection(_Strict):
    eta: Optional[float] = Field(default=None, gt=0)
    delta: Optional[float] = Field(default=None, gt=0)
    max_iter: int = Field(default=200, ge=1)
    eps: Optional[float] = Field(default=None, gt=0)
    backtrack_factor: float = Field(default=0.5, gt=0, lt=1)
    backtrack_limit: int = Field(default=20, ge=0)
    growth: float = Field(default=1.5, ge=1)


class PcgaSection(_Strict):
    position: RefineSection = RefineSection()
    velocity: RefineSection = RefineSection()


class ExperimentConfig(_Strict):
    name: str = "experiment"
    ofdm: OfdmSection
    scene: SceneSection
    snr: SnrSection
    sigma2: float = Field(default=1.0, gt=0, description="noise variance per resource element")
    prior: PriorSection
    grids: GridSection = GridSection()
    pcga: PcgaSection = PcgaSection()
    traversal_step: tuple[float, float] = (0.01, 0.01)
    trials: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    methods: list[Literal[METHODS]] = Field(default_factory=lambda: ["bayes"], min_length=1)
    cdf_grid: list[float] = Field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0])

    @field_validator("traversal_step")
    @classmethod
    def _positive_steps(cls, v):
        if min(v) <= 0:
            raise ValueError("traversal steps must be > 0")
        return v

    @field_validator("cdf_grid")
    @classmethod
    def _sorted_grid(cls, v):
        if list(v) != sorted(v):
            raise ValueError("cdf_grid must be sorted ascending")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        n_pairs = len(self.scene.tx_aps) * len(self.scene.rx_aps)
        if self.snr.mode == "fixed_snr" and len(self.snr.rho2_db) != n_pairs:
            raise ValueError(f"snr.rho2_db has {len(self.snr.rho2_db)} entries, "
                             f"scene has {n_pairs} pairs")
        return self

    # --- runtime objects ----------------------------------------------------

    def ofdm_config(self) -> OfdmConfig:
        o = self.ofdm
        return OfdmConfig(o.fc, o.delta_f, o.tp, o.k, o.l)

    def scene_obj(self) -> Scene:
        s = self.scene
        return Scene(np.array(s.tx_aps, float), np.array(s.rx_aps, float),
                     np.array(s.target_pos, float), np.array(s.target_vel, float))

    def snr_model(self) -> SnrModel:
        s = self.snr
        if s.mode == "fixed_snr":
            return SnrModel.from_db(s.rho2_db)
        return SnrModel("radar_equation", pt=10 ** ((s.pt_dbm - 30) / 10), g=s.gain,
                        rcs_mean=s.rcs_mean)

    def prior_box(self) -> PriorBox:
        return PriorBox(self.prior.pos, self.prior.vel)

    def grid_specs(self) -> tuple[GridSpec, GridSpec]:
        cfg = self.ofdm_config()
        pos_step = self.grids.pos_step or cfg.range_resolution / 2
        vel_step = self.grids.vel_step or cfg.speed_resolution / 2
        grids = (GridSpec(self.prior.pos, pos_step, pos_step),
                 GridSpec(self.prior.vel, vel_step, vel_step))
        check_grids(cfg, grids)
        return grids

    def pcga_params(self) -> tuple[PcgaParams, PcgaParams]:
        pos_grid, vel_grid = self.grid_specs()
        out = []
        for sec, grid, delta, eps in ((self.pcga.position, pos_grid, 1e-3, 1e-4),
                                      (self.pcga.velocity, vel_grid, 1e-4, 1e-6)):
            out.append(PcgaParams(eta=sec.eta or 0.5 * grid.dx, delta=sec.delta or delta,
                                  max_iter=sec.max_iter, eps=sec.eps or eps,
                                  backtrack_factor=sec.backtrack_factor,
                                  backtrack_limit=sec.backtrack_limit, growth=sec.growth))
        return tuple(out)

    def echo(self) -> dict:
        """Full configuration with every default and derived solver setting filled in."""
        data = self.model_dump(mode="json")
        pos_grid, vel_grid = self.grid_specs()
        data["grids"] = {"pos_step": pos_grid.dx, "vel_step": vel_grid.dx}
        pp, vp = self.pcga_params()
        keys = ("eta", "delta", "max_iter", "eps", "backtrack_factor", "backtrack_limit", "growth")
        data["pcga"] = {"position": {k: getattr(pp, k) for k in keys},
                        "velocity": {k: getattr(vp, k) for k in keys}}
        return data


def _error_path(err: pydantic.ValidationError) -> tuple[str, str]:
    first = err.errors()[0]
    path = ".".join(str(p) for p in first["loc"])
    return path, first["msg"]


def parse_config(data: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        path, msg = _error_path(exc)
        raise ValidationError(msg, path) from None
    for path, build in (("scene", cfg.scene_obj), ("grids", cfg.grid_specs),
                        ("pcga", cfg.pcga_params), ("snr", cfg.snr_model)):
        try:
            build()
        except ValueError as exc:
            raise ValidationError(str(exc), path) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment file (bundled names resolve to package data)."""
    p = Path(path)
    if not p.exists() and (DATA_DIR / p.name).exists() and p.parent == Path("."):
        p = DATA_DIR / p.name
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object")
    return parse_config(data)


def bundled(name: str) -> Path:
    return DATA_DIR / name
