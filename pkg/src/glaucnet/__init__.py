"""Optic disc/cup segmentation and glaucoma screening networks on plain numpy.

Everything runs in float64 with hand-written forward/backward passes, so any
layer or model can be checked against finite differences.
"""
from .errors import GlaucnetError
from .models import (Classifier, ClassifierConfig, XUnet, XUnetConfig, build_classifier, build_model, build_xunet,
                     classifier_predict, xunet_forward)

__version__ = "0.1.0"

__all__ = [
    "Classifier", "ClassifierConfig", "GlaucnetError", "XUnet", "XUnetConfig", "build_classifier",
    "build_model", "build_xunet", "classifier_predict", "xunet_forward",
]
