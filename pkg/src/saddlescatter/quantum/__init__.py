"""Exact quantum reference solvers."""

from .grid import Grid, GridState, absorbing_mask, coherent_state, propagate
from .husimi import HusimiField, husimi_wavefront, mass_near
from .numerov import numerov_scattering_1d
from .partial_waves import partial_wave_amplitude, phase_shifts

__all__ = ["Grid", "GridState", "absorbing_mask", "coherent_state", "propagate", "HusimiField",
           "husimi_wavefront", "mass_near", "numerov_scattering_1d", "partial_wave_amplitude",
           "phase_shifts"]
