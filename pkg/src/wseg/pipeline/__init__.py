"""Dataset management, synthetic data, the two training stages, pretext
baselines, evaluation, and the ablation grid runner."""

from .manifest import DatasetManifest, Sample, Splits, split_dataset, subset_fraction
from .synth import AnnotatorNoise, SynthConfig, synth_dataset
from .train import TrainConfig, finetune, pretrain
from .evaluate import MetricsReport, evaluate
from .ablation import AblationConfig, run_ablation

__all__ = [
    "DatasetManifest",
    "Sample",
    "Splits",
    "split_dataset",
    "subset_fraction",
    "SynthConfig",
    "AnnotatorNoise",
    "synth_dataset",
    "TrainConfig",
    "pretrain",
    "finetune",
    "MetricsReport",
    "evaluate",
    "AblationConfig",
    "run_ablation",
]
