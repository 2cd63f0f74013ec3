"""Grid wavefunctions, coherent states and split-step propagation.

The Hamiltonian is ``P = -h^2/2 Laplacian + V``; a plane wave ``exp(i xi.x/h)``
has kinetic energy ``|xi|^2/2``.  Grids are periodic with ``N`` points on
``[lo, hi)`` per axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from ..errors import PrecisionError, ResolutionError
from ..io import read_snapshot, write_snapshot
from ..potentials import PotentialModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    shape: tuple
    extents: tuple

    def __post_init__(self) -> None:
        if len(self.shape) != len(self.extents):
            raise ValueError("shape and extents differ in dimension")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / n for n, (lo, hi) in zip(self.shape, self.extents)])

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [lo + np.arange(n) * d for n, (lo, hi), d in zip(self.shape, self.extents, self.spacing)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def wavenumbers(self) -> list[np.ndarray]:
        return [2 * np.pi * sfft.fftfreq(n, d) for n, d in zip(self.shape, self.spacing)]

    def nyquist_momentum(self, h: float) -> float:
        """Largest representable ``|xi_k|`` per axis, ``pi h / dx``."""
        return float(np.min(np.pi * h / self.spacing))


@dataclass
class GridState:
    """Wavefunction samples on a periodic grid (``|psi|^2`` integrates with ``grid.cell``)."""

    grid: Grid
    psi: np.ndarray
    h: float
    t: float = 0.0
    absorbed: float = 0.0
    meta: dict = field(default_factory=dict)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.cell)

    def expectation_x(self) -> np.ndarray:
        rho = np.abs(self.psi) ** 2
        tot = rho.sum()
        return np.array([np.sum(m * rho) / tot for m in self.grid.mesh()])

    def expectation_xi(self) -> np.ndarray:
        ph = np.abs(sfft.fftn(self.psi)) ** 2
        tot = ph.sum()
        ks = np.meshgrid(*self.grid.wavenumbers(), indexing="ij")
        return np.array([self.h * np.sum(k * ph) / tot for k in ks])

    def overlap(self, other: "GridState") -> complex:
        return complex(np.vdot(self.psi, other.psi) * self.grid.cell)

    def save(self, path: str | Path) -> None:
        write_snapshot(path, self.psi, list(self.grid.extents), self.h)

    @classmethod
    def load(cls, path: str | Path) -> "GridState":
        psi, ext, h = read_snapshot(path)
        return cls(Grid(tuple(psi.shape), tuple(tuple(e) for e in ext)), psi, h)


def check_resolution(grid: Grid, h: float, xi_max: float) -> None:
    """Check that momenta up to ``xi_max`` are represented with a Nyquist margin.

    Spectral derivatives are exact below the Nyquist momentum ``pi h / dx``, so
    a margin of 20% replaces a points-per-wavelength rule.

    Raises
    ------
    ResolutionError
        If ``xi_max`` exceeds 0.8 of the grid Nyquist momentum.
    """
    if xi_max > 0.8 * grid.nyquist_momentum(h):
        raise ResolutionError(f"momentum {xi_max:.3g} beyond grid Nyquist {grid.nyquist_momentum(h):.3g}")


def coherent_state(x0, xi0, h: float, grid: Grid) -> GridState:
    """Normalized Gaussian of width ``sqrt(h)`` centred at ``(x0, xi0)``.

    Raises
    ------
    ResolutionError
        If the momentum content (``|xi0| + 6 sqrt(h)``) aliases on the grid.
    """
    x0 = np.asarray(x0, float)
    xi0 = np.asarray(xi0, float)
    check_resolution(grid, h, float(np.max(np.abs(xi0))) + 6 * np.sqrt(h))
    mesh = grid.mesh()
    arg = np.zeros(grid.shape, dtype=complex)
    for m, a, b in zip(mesh, x0, xi0):
        arg += -((m - a) ** 2) / (2 * h) + 1j * b * (m - a) / h
    psi = np.exp(arg)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell)
    return GridState(grid, psi, h, meta={"x0": x0.tolist(), "xi0": xi0.tolist()})


def absorbing_mask(grid: Grid, width: float, strength: float = 1.0) -> np.ndarray:
    """Smooth mask equal to 1 inside and decaying to ``exp(-strength)`` per step at the edges."""
    mask = np.ones(grid.shape)
    for ax, (m, (lo, hi)) in enumerate(zip(grid.mesh(), grid.extents)):
        d = np.minimum(m - lo, hi - m)
        s = np.clip(1.0 - d / width, 0.0, 1.0)
        mask *= np.exp(-strength * s**2 * (3 - 2 * s))
    return mask


@dataclass(frozen=True)
class PropagationReport:
    steps: int
    dt: float
    norm_drift: float
    absorbed: float
    dt_convergence: float = np.nan


def propagate(state: GridState, model: PotentialModel, t: float, dt: float = 0.01,
              absorber: np.ndarray | None = None, dtype=np.complex128, convergence_check: bool = False,
              callback=None, callback_every: int = 0) -> tuple[GridState, PropagationReport]:
    """Strang split-step evolution ``exp(-i t P / h)``.

    Parameters
    ----------
    absorber : ndarray, optional
        Per-step multiplicative mask; the removed mass is accumulated in
        ``state.absorbed``.
    convergence_check : bool
        Repeat with ``dt/2`` and report the L2 difference of the final states.

    Raises
    ------
    PrecisionError
        If the norm (plus absorbed mass) drifts by more than 1e-8.
    """
    g = state.grid
    h = state.h
    nsteps = max(1, int(np.ceil(abs(t) / dt - 1e-9)))
    dt = t / nsteps
    V = model.potential(g.points()).reshape(g.shape)
    halfV = np.exp(-0.5j * dt * V / h).astype(dtype)
    fullV = (halfV * halfV).astype(dtype)
    ks = np.meshgrid(*g.wavenumbers(), indexing="ij", sparse=True)
    k2 = sum(k * k for k in ks)
    kin = np.exp(-0.5j * dt * h * k2).astype(dtype)
    psi = state.psi.astype(dtype, copy=True)
    n0 = state.norm2()
    absorbed = 0.0
    psi *= halfV
    for s in range(nsteps):
        psi = sfft.ifftn(sfft.fftn(psi, overwrite_x=True) * kin, overwrite_x=True)
        if s < nsteps - 1:
            psi *= fullV
        else:
            psi *= halfV
        if absorber is not None:
            before = np.sum(np.abs(psi) ** 2)
            psi *= absorber
            absorbed += float(before - np.sum(np.abs(psi) ** 2)) * g.cell
        if callback is not None and callback_every and (s + 1) % callback_every == 0:
            callback(state.t + (s + 1) * dt, psi)
    out = replace(state, psi=psi.astype(np.complex128), t=state.t + t, absorbed=state.absorbed + absorbed)
    drift = abs(out.norm2() + absorbed - n0)
    tol = 1e-8 if dtype == np.complex128 else 1e-4
    if drift > tol:
        raise PrecisionError(f"norm drift {drift:.2e} in split-step propagation")
    conv = np.nan
    if convergence_check:
        half, _ = propagate(state, model, t, dt / 2, absorber=None if absorber is None else np.sqrt(absorber),
                            dtype=dtype)
        conv = float(np.sqrt(np.sum(np.abs(half.psi - out.psi) ** 2) * g.cell))
    return out, PropagationReport(nsteps, dt, drift, absorbed, conv)
