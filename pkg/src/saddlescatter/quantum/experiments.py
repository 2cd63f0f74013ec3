"""Composite quantum experiments built from the grid solvers."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..potentials import PotentialModel
from .grid import Grid, absorbing_mask, coherent_state, propagate
from .husimi import husimi_wavefront, mass_near

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransitResult:
    """Husimi mass near a target manifold after propagation."""

    near: float
    escaping: float
    fraction: float
    total: float
    absorbed: float
    norm_drift: float
    steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def wavefront_transit(model: PotentialModel, h: float, grid: Grid, x0, xi0, T: float,
                      target_points: np.ndarray, delta: float, r_escape: float, dt: float = 0.02,
                      absorber_width: float = 1.0, stride: int = 4,
                      snapshot: str | Path | None = None) -> TransitResult:
    """Propagate a coherent state for time ``T`` and measure Husimi mass near ``target_points``.

    The escaping mass is the Husimi mass at ``|x| >= r_escape``; ``fraction``
    is the part of it within ``delta`` (product metric) of the target sample.
    With ``snapshot`` the final state is written as a binary snapshot.
    """
    st = coherent_state(x0, xi0, h, grid)
    mask = absorbing_mask(grid, absorber_width, 0.05)
    out, rep = propagate(st, model, T, dt, absorber=mask)
    if snapshot is not None:
        out.save(snapshot)
    field = husimi_wavefront(out, stride=stride)
    near, esc = mass_near(field, target_points, delta,
                          mask=lambda P: np.linalg.norm(P[:, :grid.ndim], axis=1) >= r_escape)
    frac = near / esc if esc > 0 else float("nan")
    logger.info("transit: near %.4g of escaping %.4g (fraction %.4g)", near, esc, frac)
    return TransitResult(near, esc, frac, field.total(), out.absorbed, rep.norm_drift, rep.steps)
