"""Fourier-domain feature attribution and its evaluation games."""

from ._core import (
    DataError,
    Model,
    NumericalError,
    UsageError,
    baseline_scores,
    binarize_high_score,
    conjugate_pair,
    deletion_game,
    dft2,
    excess_kurtosis,
    ffc,
    idft2,
    input_x_gradient,
    integrated_gradients,
    maintain_rate,
    planted_dataset,
    run_cli,
    smoothgrad,
    spearman,
    train,
)

__all__ = [
    "DataError",
    "Model",
    "NumericalError",
    "UsageError",
    "baseline_scores",
    "binarize_high_score",
    "conjugate_pair",
    "deletion_game",
    "dft2",
    "excess_kurtosis",
    "ffc",
    "idft2",
    "input_x_gradient",
    "integrated_gradients",
    "maintain_rate",
    "planted_dataset",
    "run_cli",
    "smoothgrad",
    "spearman",
    "train",
]
