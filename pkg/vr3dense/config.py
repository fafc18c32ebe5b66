"""Environment settings and the run-configuration models."""
import hashlib
import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

# Load environment variables from .env file if it exists
load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    """Process-level settings read from the environment."""

    CONFIG_PATH: str = os.getenv("VR3DENSE_CONFIG", "")
    LOG_LEVEL: str = os.getenv("VR3DENSE_LOG_LEVEL", "WARNING").upper()
    WORKERS: int = int(os.getenv("VR3DENSE_WORKERS", "1"))

    @classmethod
    def validate(cls) -> tuple[bool, Optional[str]]:
        """Validate the environment-derived settings."""
        if not isinstance(logging.getLevelName(cls.LOG_LEVEL), int):
            return False, f"VR3DENSE_LOG_LEVEL has unknown level '{cls.LOG_LEVEL}'"
        if cls.WORKERS < 1:
            return False, "VR3DENSE_WORKERS must be >= 1"
        if cls.CONFIG_PATH and not Path(cls.CONFIG_PATH).is_file():
            return False, f"VR3DENSE_CONFIG points to a missing file: {cls.CONFIG_PATH}"
        return True, None

    @classmethod
    def get_default_config_path(cls) -> Optional[Path]:
        return Path(cls.CONFIG_PATH) if cls.CONFIG_PATH else None


class DensityMode(str, Enum):
    RAW = "raw"
    LOG1P = "log1p"
    BINARY = "binary"


class EdgeVariant(str, Enum):
    """Which image gradient drives alpha_1: dx_dy pairs the y-term with dy I."""

    DX_DY = "dx_dy"
    DX_DX = "dx_dx"


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RoiConfig(_Frozen):
    """LiDAR-frame region of interest and its voxel resolution."""

    x_range: tuple[float, float] = (0.0, 70.0)
    y_range: tuple[float, float] = (-25.0, 25.0)
    z_range: tuple[float, float] = (-2.5, 1.0)
    dims: tuple[int, int, int] = (256, 256, 16)

    @model_validator(mode="after")
    def _check_bounds(self) -> "RoiConfig":
        for name, (lo, hi) in zip("xyz", self.ranges):
            if not hi > lo:
                raise ValueError(f"{name}_range must have max > min, got ({lo}, {hi})")
        if min(self.dims) < 1:
            raise ValueError(f"dims must be >= 1 per axis, got {self.dims}")
        return self

    @property
    def ranges(self) -> tuple[tuple[float, float], ...]:
        return (self.x_range, self.y_range, self.z_range)

    @property
    def mins(self) -> tuple[float, float, float]:
        return (self.x_range[0], self.y_range[0], self.z_range[0])

    @property
    def maxs(self) -> tuple[float, float, float]:
        return (self.x_range[1], self.y_range[1], self.z_range[1])

    @property
    def voxel_size(self) -> tuple[float, float, float]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.ranges, self.dims))


class DetLossWeights(_Frozen):
    lambda_conf: float = Field(1.0, ge=0.0)
    lambda_pose: float = Field(1.0, ge=0.0)
    lambda_class: float = Field(1.0, ge=0.0)
    lambda_giou: float = Field(1.0, ge=0.0)
    epsilon: float = Field(1e-6, gt=0.0)


class DepthLossWeights(_Frozen):
    lambda_eps: float = Field(1.0, ge=0.0)
    lambda_repr: float = Field(1.0, ge=0.0)
    lambda_cons: float = Field(1.0, ge=0.0)
    lambda_app: float = Field(1.0, ge=0.0)
    lambda_sup: float = Field(1.0, ge=0.0)
    beta_edge: float = Field(0.5, ge=0.0, le=1.0)
    alpha_ssim: float = Field(0.85, ge=0.0, le=1.0)
    huber_delta: float = Field(1.0, gt=0.0)
    sup_decay_rate: float = 0.01
    depth_clamp: tuple[float, float] = (0.1, 100.0)
    cross_reprojection: bool = False
    edge_variant: EdgeVariant = EdgeVariant.DX_DY

    @model_validator(mode="after")
    def _check_clamp(self) -> "DepthLossWeights":
        lo, hi = self.depth_clamp
        if not 0.0 < lo < hi:
            raise ValueError(f"depth_clamp must satisfy 0 < min < max, got {self.depth_clamp}")
        return self


class RunConfig(_Frozen):
    """Everything a CLI run depends on. Unknown keys are rejected."""

    roi: RoiConfig = RoiConfig()
    det_weights: DetLossWeights = DetLossWeights()
    depth_weights: DepthLossWeights = DepthLossWeights()
    edge_variant: EdgeVariant = EdgeVariant.DX_DY
    density_mode: DensityMode = DensityMode.RAW
    nms_iou: float = Field(0.1, ge=0.0, le=1.0)
    conf_threshold: float = Field(0.5, ge=0.0, le=1.0)
    seed: int = 0
    class_names: list[str] = Field(default_factory=lambda: ["Car", "Pedestrian", "Cyclist"])
    grid_cells: int = Field(16, ge=1)
    default_baseline: float = Field(0.54, gt=0.0)
    depth_range: tuple[float, float] = (0.0, 80.0)
    ap_iou_thresholds: list[float] = Field(default_factory=lambda: [0.3, 0.5, 0.7])
    fit_steps: int = Field(500, ge=1)
    fit_lr: float = Field(0.05, ge=0.0)

    @model_validator(mode="after")
    def _check_run(self) -> "RunConfig":
        if not self.class_names:
            raise ValueError("class_names must not be empty")
        if not self.depth_range[1] > self.depth_range[0]:
            raise ValueError(f"depth_range must have max > min, got {self.depth_range}")
        for t in self.ap_iou_thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"ap_iou_thresholds must lie in (0, 1], got {t}")
        nested = self.depth_weights.edge_variant
        if "edge_variant" in self.depth_weights.model_fields_set and nested != self.edge_variant:
            raise ValueError(
                f"depth_weights.edge_variant={nested.value} conflicts with edge_variant={self.edge_variant.value}; "
                "set the top-level edge_variant"
            )
        return self

    def resolved_depth_weights(self) -> DepthLossWeights:
        """Depth weights with the top-level edge_variant, the one the losses use."""
        return self.depth_weights.model_copy(update={"edge_variant": self.edge_variant})


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_override(data: dict, dotted_key: str, value: Any) -> None:
    node = data
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override '{dotted_key}': '{part}' is not a section")
        node = child
    node[parts[-1]] = value


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Load a RunConfig from a JSON file and apply dotted-key overrides.

    Override values given as strings are parsed as JSON when possible
    ("0.3" -> 0.3, "[1, 2]" -> list), otherwise kept as text.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        logger.info(f"Loaded run config from {path}")

    for key, value in (overrides or {}).items():
        if isinstance(value, str):
            value = _parse_override_value(value)
        _apply_override(data, key, value)

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{where}: {first['msg']}") from e


def canonical_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
