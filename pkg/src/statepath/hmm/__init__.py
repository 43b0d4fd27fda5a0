"""Constrained hidden-Markov training, decoding, and model selection."""

from .config import HmmConfig, forward_mask, full_mask, mask_from_name
from .crossval import CvRow, cross_validate
from .decode import DecodedSubject, DecodedVisit, decode, decoded_from_dict, decoded_to_dict
from .grid import GridSequence, discretize, step_of
from .inference import dataset_logliks, loglikelihood
from .model import BernoulliEmission, GaussianEmission, HmmModel
from .synth import generate
from .train import FitResult, train, train_detailed

__all__ = [
    "HmmConfig",
    "HmmModel",
    "BernoulliEmission",
    "GaussianEmission",
    "GridSequence",
    "DecodedSubject",
    "DecodedVisit",
    "CvRow",
    "FitResult",
    "forward_mask",
    "full_mask",
    "mask_from_name",
    "discretize",
    "step_of",
    "train",
    "train_detailed",
    "decode",
    "decoded_to_dict",
    "decoded_from_dict",
    "loglikelihood",
    "dataset_logliks",
    "cross_validate",
    "generate",
]
