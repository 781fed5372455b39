from .base import FixedPoseSampler, ForwardModel, GaussianPosterior, Observation
from .datasets_io import (
    SimulationDataset,
    dataset_content_hash,
    dataset_to_csv,
    load_dataset,
    save_dataset,
    simulate_dataset,
)
from .gaussian_toy import (
    GaussianToyModel,
    GaussianToyPosteriorOracle,
    GaussianToyTrainedOracle,
    gaussian_toy_posterior,
    gaussian_toy_simulate,
)
from .multichannel import MultichannelModel
from .oscillator import OscillatorApproxModel, OscillatorModel, oscillator_solution

MODEL_REGISTRY = {
    "gaussian-toy": GaussianToyModel,
    "oscillator": OscillatorModel,
    "oscillator-approx": OscillatorApproxModel,
    "multichannel": MultichannelModel,
}


def get_model(name: str, **kwargs) -> ForwardModel:
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}") from None
    return cls(**kwargs)


__all__ = [
    "FixedPoseSampler",
    "ForwardModel",
    "GaussianPosterior",
    "GaussianToyModel",
    "GaussianToyPosteriorOracle",
    "GaussianToyTrainedOracle",
    "MODEL_REGISTRY",
    "MultichannelModel",
    "Observation",
    "OscillatorApproxModel",
    "OscillatorModel",
    "SimulationDataset",
    "dataset_content_hash",
    "dataset_to_csv",
    "gaussian_toy_posterior",
    "gaussian_toy_simulate",
    "get_model",
    "load_dataset",
    "oscillator_solution",
    "save_dataset",
    "simulate_dataset",
]
