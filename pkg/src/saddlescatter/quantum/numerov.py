"""1D stationary scattering by the Numerov method.

Solves ``-h^2/2 psi'' + V psi = E psi`` for a plane wave incident from the
left.  Integration runs from the transmitted side (``psi = exp(i kappa x)``)
towards the incident side, where the solution is split into
``A exp(i kappa x) + B exp(-i kappa x)``.  ``kappa`` is the wave number of
the *discrete* free Numerov recursion, so the split is exact for the
computed grid function and ``|T|^2 + |R|^2 = 1`` holds up to rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ResolutionError
from ..potentials import PotentialModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scattering1D:
    """Transmission and reflection amplitudes (arrays over the requested energies)."""

    E: np.ndarray
    T: np.ndarray
    R: np.ndarray
    unitarity_defect: np.ndarray
    error_estimate: np.ndarray
    dx: float
    X: float

    @property
    def transmission(self) -> np.ndarray:
        return np.abs(self.T) ** 2


def potential_support(model: PotentialModel, level: float, start: float | None = None) -> float:
    """Smallest doubling ``X`` of ``start`` with ``|V| < level`` on ``[X, 2X]`` in every direction sampled."""
    X = start or model.length_scale
    dirs = np.array([[1.0], [-1.0]]) if model.n == 1 else None
    for _ in range(60):
        r = np.linspace(X, 2 * X, 257)
        if model.n == 1:
            pts = (r[:, None, None] * dirs[None]).reshape(-1, 1)
        else:
            ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
            u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            if model.n > 2:
                u = np.hstack([u, np.zeros((64, model.n - 2))])
            pts = (r[:, None, None] * u[None]).reshape(-1, model.n)
        if np.max(np.abs(model.potential(pts))) < level:
            return X
        X *= 1.25
    raise ConfigError("potential does not decay to the requested level")


def _sweep(V: np.ndarray, E: np.ndarray, h: float, dx: float):
    """Backward Numerov sweep; returns (A, B) of the left-side decomposition."""
    K = 2.0 * (E[:, None] - V[None, :]) / h**2  # (nE, N)
    c = 1.0 + dx * dx * K / 12.0
    d = 1.0 - 5.0 * dx * dx * K / 12.0
    K0 = 2.0 * E / h**2
    cosk = (1.0 - 5.0 * dx * dx * K0 / 12.0) / (1.0 + dx * dx * K0 / 12.0)
    if np.any(np.abs(cosk) >= 1):
        raise ResolutionError("grid step too coarse for the Numerov free dispersion")
    kap = np.arccos(cosk) / dx
    N = V.size
    x_last = (N - 1) * dx
    psi_next = np.exp(1j * kap * x_last)  # index N-1
    psi = np.exp(1j * kap * (x_last - dx))  # index N-2
    scale = np.zeros(E.size)
    for j in range(N - 2, 0, -1):
        prev = (2.0 * d[:, j] * psi - c[:, j + 1] * psi_next) / c[:, j - 1]
        psi_next, psi = psi, prev
        m = np.abs(psi)
        big = m > 1e100
        if np.any(big):
            s = np.where(big, m, 1.0)
            psi = psi / s
            psi_next = psi_next / s
            scale += np.log(s)
    # psi -> index 0, psi_next -> index 1; positions 0 and dx (origin shifted)
    e1 = np.exp(1j * kap * dx)
    den = e1 - 1.0 / e1
    A = (psi_next - psi / e1) / den
    B = (psi * e1 - psi_next) / den
    return A, B, kap, scale


def numerov_scattering_1d(model: PotentialModel, E, h: float, kdx: float = 0.1,
                          X: float | None = None, check: bool = True) -> Scattering1D:
    """Transmission/reflection amplitudes of a 1D model.

    Parameters
    ----------
    E : float or array
        Energies (> 0).
    kdx : float
        Grid step in units of the largest local wave number.
    X : float, optional
        Half-width of the domain; by default the smallest range where
        ``|V| < 1e-12 min(E)``.
    check : bool
        Repeat at half the step and report the difference as the error estimate.

    Returns
    -------
    Scattering1D
        ``T`` and ``R`` carry the phases of ``psi = e^{ikx} + R e^{-ikx}`` on the
        left and ``T e^{ikx}`` on the right with respect to the domain ends.
    """
    if model.n != 1:
        raise ConfigError("numerov_scattering_1d needs a 1D model")
    E = np.atleast_1d(np.asarray(E, float))
    if np.any(E <= 0):
        raise ConfigError("energies must be positive")
    if X is None:
        X = potential_support(model, 1e-12 * float(E.min()))
    xs = np.linspace(-X, X, 4097)
    vmin = float(min(0.0, model.potential(xs[:, None]).min()))
    kmax = np.sqrt(2 * (E.max() - vmin)) / h
    out = []
    for refine in ((1, 2) if check else (1,)):
        dx0 = kdx / kmax / refine
        N = int(np.ceil(2 * X / dx0)) + 1
        dx = 2 * X / (N - 1)
        x = np.linspace(-X, X, N)
        V = model.potential(x[:, None])
        A, B, kap, scale = _sweep(V, E, h, dx)
        logA = np.log(np.abs(A)) + scale
        T = np.exp(-logA) * np.exp(-1j * np.angle(A))
        R = B / A
        out.append((T, R, dx))
    T, R, dx = out[-1]
    defect = np.abs(np.abs(T) ** 2 + np.abs(R) ** 2 - 1.0)
    err = np.abs(np.abs(out[-1][0]) ** 2 - np.abs(out[0][0]) ** 2) if check else np.full(E.size, np.nan)
    if np.any(defect > 1e-6):
        raise ResolutionError(f"unitarity defect {defect.max():.2e}")
    return Scattering1D(E, T, R, defect, err, dx, X)
