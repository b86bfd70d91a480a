"""Solvers for semilinear reaction-diffusion problems on thin star-shaped junctions.

The package covers the full desk-scale pipeline: the metric-graph limit with
Kirchhoff-type vertex coupling, the inner-layer cell problems on the truncated
fast-variable domain, a full 3D implicit reference solver, the blended
approximations with their predicted error scales, and a study harness.
"""
from __future__ import annotations

from . import assembly, cells, config, graph, io, mesh, model, reference, scheduler

__version__ = "0.1.0"

__all__ = ["assembly", "cells", "config", "graph", "io", "mesh", "model",
           "reference", "scheduler", "__version__"]
