"""Experiment configuration and the textual specs accepted on the command line."""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from coeff.fields import CoefficientField, constant_coefficient, trig_coefficient
from coeff.raster import load_raster, synthetic_channel
from config.settings import settings
from homog.basis import default_layers
from mesh.hierarchy import Rectangle
from ocp.problem import ConstraintSpec, default_desired_state

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.json"
COEFFICIENT_KINDS = ("trig", "raster", "constant", "channel")


def _spec_value(text: str, name: str) -> str:
    _, _, rest = text.partition(":")
    if not rest:
        raise ValueError(f"'{text}' is missing the value after '{name}:'")
    return rest


def _floats(text: str, count: int, what: str) -> List[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != count:
        raise ValueError(f"{what} expects {count} comma-separated numbers, got '{text}'")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f"{what}: cannot parse '{text}' as numbers") from exc


def parse_domain(text: str) -> Rectangle:
    x0, x1, y0, y1 = _floats(text, 4, "domain")
    return Rectangle(x0=x0, x1=x1, y0=y0, y1=y1)


def parse_coefficient_spec(text: str, domain: Rectangle) -> CoefficientField:
    """trig | raster:<path> | constant:<v> | channel:<kappa>,<channels>,<seed>"""
    text = text.strip()
    head = text.split(":", 1)[0]
    if text == "trig":
        return trig_coefficient(domain)
    if head == "raster":
        return load_raster(_spec_value(text, head), domain)
    if head == "constant":
        (value,) = _floats(_spec_value(text, head), 1, "constant coefficient")
        return constant_coefficient(value)
    if head == "channel":
        kappa, channels, seed = _floats(_spec_value(text, head), 3, "channel coefficient")
        if channels != int(channels) or seed != int(seed):
            raise ValueError(f"channel count and seed must be integers, got '{text}'")
        return synthetic_channel(kappa, int(channels), int(seed), domain)
    raise ValueError(f"Unknown coefficient spec '{text}' (expected trig, raster:, constant: or channel:)")


def parse_constraint(text: str) -> ConstraintSpec:
    """nonneg-mean | box:<a>,<b> | none"""
    text = text.strip()
    if text in ("nonneg-mean", "none"):
        return ConstraintSpec(kind=text)
    if text.startswith("box"):
        lower, upper = _floats(_spec_value(text, "box"), 2, "box constraint")
        return ConstraintSpec(kind="box", lower=lower, upper=upper)
    raise ValueError(f"Unknown constraint spec '{text}' (expected nonneg-mean, box:<a>,<b> or none)")


def parse_desired_state(text: str, domain: Rectangle):
    """sine | zero | constant:<v>"""
    text = text.strip()
    if text == "sine":
        return default_desired_state(domain)
    if text == "zero":
        return 0.0
    if text.startswith("constant"):
        (value,) = _floats(_spec_value(text, "constant"), 1, "constant desired state")
        return value
    raise ValueError(f"Unknown desired-state spec '{text}' (expected sine, zero or constant:<v>)")


class ExperimentConfig(BaseModel):
    """Fully resolved settings of one experiment run."""

    coeff: str = "trig"
    domain: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    nc: List[int] = Field(default_factory=lambda: [8])
    refine: Optional[int] = None
    fine_resolution: Optional[int] = None
    layers: Optional[List[int]] = None
    basis: List[Literal["rps", "grps"]] = Field(default_factory=lambda: ["grps"])
    rho: float = Field(default_factory=lambda: settings.ocp_rho)
    eps: float = Field(default_factory=lambda: settings.ocp_eps)
    max_iter: int = Field(default_factory=lambda: settings.ocp_max_iter)
    constraint: str = "nonneg-mean"
    yd: str = "sine"
    output_dir: str = Field(default_factory=lambda: settings.output_dir)

    @field_validator("coeff")
    @classmethod
    def _check_coeff(cls, value: str) -> str:
        head = value.strip().split(":", 1)[0]
        if head not in COEFFICIENT_KINDS:
            raise ValueError(f"unknown coefficient spec '{value}' (expected one of {', '.join(COEFFICIENT_KINDS)})")
        return value

    @field_validator("nc")
    @classmethod
    def _check_nc(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("at least one Nc is required")
        bad = [n for n in value if n < 2]
        if bad:
            raise ValueError(f"every Nc must be >= 2, got {bad}")
        return value

    @field_validator("layers")
    @classmethod
    def _check_layers(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and any(l < 1 for l in value):
            raise ValueError(f"every layer count must be >= 1, got {value}")
        return value

    @field_validator("basis")
    @classmethod
    def _check_basis(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one basis kind is required")
        return value

    @field_validator("rho", "eps")
    @classmethod
    def _check_positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @field_validator("max_iter")
    @classmethod
    def _check_max_iter(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"must be >= 1, got {value}")
        return value

    @field_validator("constraint")
    @classmethod
    def _check_constraint(cls, value: str) -> str:
        parse_constraint(value)
        return value

    @model_validator(mode="after")
    def _check_levels(self) -> "ExperimentConfig":
        parse_desired_state(self.yd, self.rectangle())
        if self.refine is not None and self.fine_resolution is not None:
            raise ValueError("give either refine or fine_resolution, not both")
        if self.refine is None and self.fine_resolution is None:
            self.refine = 2
        for nc in self.nc:
            self.levels_for(nc)
        return self

    def rectangle(self) -> Rectangle:
        x0, x1, y0, y1 = self.domain
        return Rectangle(x0=x0, x1=x1, y0=y0, y1=y1)

    def levels_for(self, nc: int) -> int:
        """Refinement depth J for a given Nc (J >= 1)."""
        if self.refine is not None:
            if self.refine < 1:
                raise ValueError(f"refine must be >= 1 so the fine mesh strictly refines the coarse one, got {self.refine}")
            return self.refine
        ratio = self.fine_resolution / nc
        levels = int(round(math.log2(ratio))) if ratio > 0 else 0
        if levels < 1 or nc * 2**levels != self.fine_resolution:
            raise ValueError(
                f"fine_resolution={self.fine_resolution} is not Nc={nc} times a power of two >= 2"
            )
        return levels

    def layers_for(self, nc: int) -> List[int]:
        if self.layers is not None:
            return list(self.layers)
        return [default_layers(nc)]

    def constraint_spec(self) -> ConstraintSpec:
        return parse_constraint(self.constraint)

    def coefficient(self) -> CoefficientField:
        return parse_coefficient_spec(self.coeff, self.rectangle())

    def desired_state(self):
        return parse_desired_state(self.yd, self.rectangle())


def parse_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    echo: bool = True,
) -> ExperimentConfig:
    """Merge a JSON config file with overrides (None values ignored), validate and echo it."""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ValueError(f"Config file '{path}' does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"Config file '{path}' is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"Config file '{path}' must hold a JSON object")
    given = {key: value for key, value in (overrides or {}).items() if value is not None}
    # an explicit fine resolution on the command line replaces a file refine and vice versa
    if "fine_resolution" in given:
        data.pop("refine", None)
    if "refine" in given:
        data.pop("fine_resolution", None)
    data.update(given)

    config = ExperimentConfig(**data)
    if echo:
        out = Path(config.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / CONFIG_ECHO).write_text(config.model_dump_json(indent=2) + "\n")
        except OSError as exc:
            raise ValueError(f"Output directory '{out}' is not writable: {exc}") from exc
        logger.info(f"Effective config written to {out / CONFIG_ECHO}")
    return config
