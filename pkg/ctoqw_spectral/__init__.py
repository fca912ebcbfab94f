"""CTOQW Spectral - weight matrices, transition probabilities and recurrence of continuous-time open quantum walks."""

from .dynamics import DensityOperator, p_direct, p_km, p_line_km, probability_curve
from .lindblad import CTOQWModel, assemble
from .modelfile import load_density, load_model
from .spectral import model_measure, site_transform
from .stieltjes import Verdict, classify_recurrence

__all__ = [
    "CTOQWModel",
    "DensityOperator",
    "Verdict",
    "assemble",
    "classify_recurrence",
    "load_density",
    "load_model",
    "model_measure",
    "p_direct",
    "p_km",
    "p_line_km",
    "probability_curve",
    "site_transform",
]
