"""Hybrid cloud simulator with a one-step state-space feedback loop."""

__version__ = "0.1.0"

from .model import BoxConstraints, LinearModel, StateSemantics, project, spectral_radius, step  # noqa: E402
from .sim import Simulation, run  # noqa: E402

__all__ = ["BoxConstraints", "LinearModel", "StateSemantics", "Simulation",
           "project", "run", "spectral_radius", "step"]
