"""
Training configuration and per-frame results shared by the PC and BP engines.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

from pcnta.errors import ConfigError


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"
    ADAGRAD = "adagrad"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.SGD
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0.0:
            raise ConfigError(f"optimizer eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class TrainConfig:
    """
    Knobs of one training run.

    eta_v: inference step size
    eta_theta: weight learning rate
    max_inference_iters: inference budget per frame
    convergence_tol: stop once the max-norm of hidden state gradients is below this
        (0 means budget-only)
    amortize: carry hidden states across frames (PCN-TA) instead of cold starts (PCN)
    update_count_threshold: a parameter counts as updated when |Δθ| exceeds this
    record_vfe: keep the per-iteration VFE trace in every SampleResult
    """
    eta_v: float = 0.1
    eta_theta: float = 4e-5
    max_inference_iters: int = 100
    convergence_tol: float = 0.0
    amortize: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    update_count_threshold: float = 0.0
    record_vfe: bool = False

    def __post_init__(self) -> None:
        if not self.eta_v > 0.0:
            raise ConfigError(f"eta_v must be positive, got {self.eta_v}")
        if not self.eta_theta > 0.0:
            raise ConfigError(f"eta_theta must be positive, got {self.eta_theta}")
        if self.max_inference_iters < 1:
            raise ConfigError(f"max_inference_iters must be at least 1, got {self.max_inference_iters}")
        if not self.convergence_tol >= 0.0:
            raise ConfigError(f"convergence_tol must be non-negative, got {self.convergence_tol}")
        if math.isnan(self.update_count_threshold) or self.update_count_threshold < 0.0:
            raise ConfigError(f"update_count_threshold must be non-negative, got {self.update_count_threshold}")


@dataclass(frozen=True)
class SampleResult:
    iterations_used: int
    final_vfe: float
    nonzero_weight_updates: int
    predicted_class: int
    vfe_trace: tuple[float, ...] = ()
