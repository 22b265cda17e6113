"""
YAML run configuration.

A run file is a mapping with top-level run keys and four optional sections.
Every key has a default; unknown keys are rejected.

    run_id: coil20-compare        # output file prefix
    seed: 0                       # parameter init, shuffling, synthetic data
    epochs: 10
    method: pcn_ta                # train only: pcn_ta | pcn | backprop
    inference_iters: 100          # train only: inference budget per frame
    workers: 1                    # compare only: variants run concurrently
    record_wall_time: true        # false writes 0 so CSVs are byte-identical

    train:        TrainConfig knobs (eta_v, eta_theta, convergence_tol, optimizer, ...)
    architecture: full_size: true, or the scaled conv layout (input_size, conv_filters, ...)
    data:         source synthetic | coil20 and its parameters
    compare:      list of {method, inference_iters} variants
"""

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pcnta.core.graph import LayerGraph, build_conv_architecture, build_coil20_architecture
from pcnta.data.frames import COIL20_OBJECTS, COIL20_VIEWS, OrderingMode
from pcnta.engine.config import OptimizerConfig, OptimizerKind, TrainConfig
from pcnta.errors import ConfigError
from pcnta.metrics.records import Method, variant_label

RESOLVED_CONFIG_NAME = "resolved_config.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrainSection(_Section):
    eta_v: float = Field(0.1, gt=0.0)
    eta_theta: float = Field(4e-5, gt=0.0)
    convergence_tol: float = Field(0.0, ge=0.0)
    optimizer: OptimizerKind = OptimizerKind.SGD
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    update_count_threshold: float = Field(0.0, ge=0.0)
    record_vfe: bool = False


class ArchitectureSection(_Section):
    # full_size: true ignores the scaled fields and builds the 1×128×128 network
    full_size: bool = False
    input_size: int = Field(64, ge=1)
    conv_filters: int = Field(8, ge=1)
    kernel: int = Field(5, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [200, 128], min_length=1)
    num_classes: int = Field(20, ge=1)

    @property
    def effective_input_size(self) -> int:
        return 128 if self.full_size else self.input_size

    @property
    def effective_num_classes(self) -> int:
        return COIL20_OBJECTS if self.full_size else self.num_classes


class DataSection(_Section):
    source: Literal["synthetic", "coil20"] = "synthetic"
    coil20_dir: str | None = None
    objects: int = Field(COIL20_OBJECTS, ge=1)
    views_per_object: int = Field(COIL20_VIEWS, ge=1)
    # synthetic stream
    num_classes: int = Field(20, ge=1)
    frames_per_class: int = Field(72, ge=1)
    size: int = Field(64, ge=16)
    drift_step: int = Field(1, ge=0)
    # both sources
    ordering: OrderingMode = OrderingMode.TEMPORAL
    test_every: int = Field(4, ge=0)


class Variant(_Section):
    method: Method
    inference_iters: int = Field(100, ge=1)

    @property
    def label(self) -> str:
        return variant_label(self.method, self.inference_iters)


def _default_variants() -> list[Variant]:
    return [
        Variant(method=Method.PCN_TA, inference_iters=50),
        Variant(method=Method.PCN_TA, inference_iters=100),
        Variant(method=Method.PCN, inference_iters=100),
        Variant(method=Method.BACKPROP),
    ]


class RunConfig(_Section):
    run_id: str = Field("run", pattern=r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,63}$")
    seed: int = Field(0, ge=0, lt=2**64)
    epochs: int = Field(1, ge=1)
    method: Method = Method.PCN_TA
    inference_iters: int = Field(100, ge=1)
    workers: int = Field(1, ge=1)
    record_wall_time: bool = True
    train: TrainSection = Field(default_factory=TrainSection)
    architecture: ArchitectureSection = Field(default_factory=ArchitectureSection)
    data: DataSection = Field(default_factory=DataSection)
    compare: list[Variant] = Field(default_factory=_default_variants, min_length=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if self.data.source == "coil20" and not self.data.coil20_dir:
            raise ValueError("data.source is coil20 but data.coil20_dir is not set")
        if self.data.source == "synthetic":
            if self.architecture.effective_input_size != self.data.size:
                raise ValueError(
                    f"architecture input size {self.architecture.effective_input_size} "
                    f"does not match data.size {self.data.size}"
                )
            if self.architecture.effective_num_classes != self.data.num_classes:
                raise ValueError(
                    f"architecture has {self.architecture.effective_num_classes} classes, "
                    f"data.num_classes is {self.data.num_classes}"
                )
        labels = [v.label for v in self.compare]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"duplicate compare variants: {', '.join(duplicates)}")
        return self

    @property
    def train_variant(self) -> Variant:
        return Variant(method=self.method, inference_iters=self.inference_iters)


# ============================================================================
# Loading
# ============================================================================

def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{where}: {item['msg']}")
    return "; ".join(lines)


def parse_run_config(mapping: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(mapping)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_run_config(path: Path | str | None) -> RunConfig:
    """Read and validate a YAML run file; None yields the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    try:
        mapping = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: YAML parsing error: {e}") from e
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(mapping).__name__}")
    return parse_run_config(mapping)


def apply_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    data_dir: str | None = None,
    synthetic: bool = False,
) -> RunConfig:
    """CLI flags win over the file. The result is re-validated."""
    mapping = cfg.model_dump(mode="json")
    if seed is not None:
        mapping["seed"] = seed
    if data_dir is not None:
        mapping["data"]["source"] = "coil20"
        mapping["data"]["coil20_dir"] = data_dir
    elif synthetic:
        mapping["data"]["source"] = "synthetic"
    return parse_run_config(mapping)


def write_resolved_config(cfg: RunConfig, out_dir: Path) -> Path:
    path = out_dir / RESOLVED_CONFIG_NAME
    path.write_text(yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False), encoding="utf-8")
    return path


# ============================================================================
# Materializing
# ============================================================================

def to_train_config(cfg: RunConfig, variant: Variant) -> TrainConfig:
    section = cfg.train
    return TrainConfig(
        eta_v=section.eta_v,
        eta_theta=section.eta_theta,
        max_inference_iters=variant.inference_iters,
        convergence_tol=section.convergence_tol,
        amortize=variant.method is Method.PCN_TA,
        optimizer=OptimizerConfig(section.optimizer, section.beta1, section.beta2, section.eps),
        update_count_threshold=section.update_count_threshold,
        record_vfe=section.record_vfe,
    )


def build_model(cfg: RunConfig) -> LayerGraph:
    arch = cfg.architecture
    if arch.full_size:
        return build_coil20_architecture(cfg.seed)
    return build_conv_architecture(
        cfg.seed,
        input_size=arch.input_size,
        conv_filters=arch.conv_filters,
        kernel=arch.kernel,
        hidden=tuple(arch.hidden),
        num_classes=arch.num_classes,
    )
