"""Truncated-Fock simulation of heralded quantum-optics experiments.

Submodules: ``fock`` (spaces, operators, states), ``states`` (coherent and
squeezed sources), ``channels`` (beamsplitters, loss, detectors, heralded
operations), ``homodyne`` (quadrature statistics and acquisition),
``tomography`` (maximum-likelihood state and process reconstruction),
``labcalc`` (closed-form crystal and laser estimators) and ``cli``.
"""
from importlib import metadata as _metadata

from . import channels, fock, homodyne, labcalc, states, tomography
from .fock import DensityOperator, FockSpace, StateVector, fidelity, log_negativity, partial_trace

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["channels", "fock", "homodyne", "labcalc", "states", "tomography", "DensityOperator", "FockSpace",
           "StateVector", "fidelity", "log_negativity", "partial_trace", "__version__"]
