"""Symmetry-protected braiding of edge states in coupled SSH chains."""

__version__ = "0.1.0"

from .model import Chains, ModelParams, Orientation  # noqa: E402

__all__ = ["Chains", "ModelParams", "Orientation", "__version__"]
