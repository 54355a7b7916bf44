"""Uni-modal, joint and layered surrogates trained by stochastic variational inference."""

from .elbo import elbo, elbo_joint, elbo_layered, elbo_unimodal
from .estimators import ESTIMATORS, JointBNN, LayeredBNN, UnimodalBNN
from .predict import PosteriorPredictive, predict
from .state import (JointModelState, LayeredModelState, Modality, UnimodalState, align_modalities,
                    load_checkpoint, save_checkpoint)
from .train import Adam, FitConfig, fit, stop_rule

__all__ = [
    "Adam", "ESTIMATORS", "FitConfig", "JointBNN", "JointModelState", "LayeredBNN",
    "LayeredModelState", "Modality", "PosteriorPredictive", "UnimodalBNN", "UnimodalState",
    "align_modalities", "elbo", "elbo_joint", "elbo_layered", "elbo_unimodal", "fit",
    "load_checkpoint", "predict", "save_checkpoint", "stop_rule",
]
