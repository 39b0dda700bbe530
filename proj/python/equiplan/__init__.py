"""SE(2)-equivariant joint prediction and planning."""

from ._equiplan import (
    AblationFlags,
    Dataset,
    GeneratorConfig,
    IoError,
    ModelConfig,
    ModelParams,
    NumericError,
    Scene,
    ScenarioWeights,
    TrainConfig,
    ValidationError,
    apply_se2,
    baseline_constant_velocity,
    equivariance_sweep,
    evaluate,
    forward,
    generate_synthetic,
    load_checkpoint,
    load_scenes,
    plan,
    resample_route,
    save_checkpoint,
    save_scenes,
    train,
)

__all__ = [
    "AblationFlags",
    "Dataset",
    "GeneratorConfig",
    "IoError",
    "ModelConfig",
    "ModelParams",
    "NumericError",
    "Scene",
    "ScenarioWeights",
    "TrainConfig",
    "ValidationError",
    "apply_se2",
    "baseline_constant_velocity",
    "equivariance_sweep",
    "evaluate",
    "forward",
    "generate_synthetic",
    "load_checkpoint",
    "load_scenes",
    "plan",
    "resample_route",
    "save_checkpoint",
    "save_scenes",
    "train",
]
