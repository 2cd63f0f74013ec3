"""2D partial-wave scattering amplitude for radial potentials.

With ``psi ~ exp(i k x) + f(theta) exp(i k r) / sqrt(r)`` and
``k = sqrt(2E)/h`` the amplitude is

    f(theta) = sqrt(2/(pi k)) exp(i pi/4) sum_m exp(i delta_m) sin(delta_m) exp(i m theta)

so that ``|f|^2`` is the differential cross-section per unit angle.  The
radial functions ``u_m = sqrt(r) R_m`` solve
``u'' + (k^2 - (m^2 - 1/4)/r^2 - 2V/h^2) u = 0``; they are integrated
outwards by Numerov in ratio form (``u_j / u_{j-1}``, no overflow) for all
channels at once.  The same sweep with ``V = 0`` gives the discretization
phase of the free problem, which is subtracted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..errors import ConfigError, TruncationError
from ..potentials import PotentialModel
from .numerov import potential_support

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartialWaveResult:
    theta: np.ndarray
    f: np.ndarray
    deltas: np.ndarray
    k: float
    m_max: int
    error_estimate: np.ndarray
    dx: float
    R_match: float

    def total_cross_section(self) -> float:
        return float(4.0 / self.k * (np.sin(self.deltas[0]) ** 2 + 2 * np.sum(np.sin(self.deltas[1:]) ** 2)))

    def optical_theorem_defect(self) -> float:
        """Relative mismatch of ``sqrt(8 pi / k) Im(exp(-i pi/4) f(0))`` and the total cross-section."""
        f0 = amplitude_from_deltas(self.deltas, self.k, np.array([0.0]))[0]
        s = self.total_cross_section()
        return abs(np.sqrt(8 * np.pi / self.k) * np.imag(np.exp(-1j * np.pi / 4) * f0) - s) / max(s, 1e-300)


def radial_profile(model: PotentialModel, n_angles: int = 16, tol: float = 1e-12):
    """Return ``V(r)`` for an isotropic 2D model, checking isotropy on a few rings."""
    if model.n != 2:
        raise ConfigError("partial waves need a 2D model")
    ang = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    for r in (0.3, 1.0, 2.5):
        v = model.potential(r * model.length_scale * u)
        if np.ptp(v) > tol * max(1.0, np.max(np.abs(v))):
            raise ConfigError("model is not radial")
    return lambda r: model.potential(np.stack([np.asarray(r, float), np.zeros_like(r, dtype=float)], axis=-1))


def _sweep(Vr: np.ndarray, r: np.ndarray, dx: float, k: float, h: float, ms: np.ndarray, V0: float) -> np.ndarray:
    """Ratio ``u_N / u_{N-1}`` at the last two grid points for every channel in ``ms``."""
    N = r.size
    nu2 = ms.astype(float) ** 2 - 0.25
    start = np.maximum(2, ms)
    kl2 = k * k - 2.0 * V0 / h**2
    small = ms < 20

    def seed(j):
        # only channels starting at j use this value; others may overflow harmlessly
        with np.errstate(over="ignore"):
            q = (r[j] / r[j - 1]) ** (ms + 0.5)
        if np.any(small):
            msm = ms[small]
            if kl2 > 0:
                kl = np.sqrt(kl2)
                a = special.jv(msm, kl * r[j])
                b = special.jv(msm, kl * r[j - 1])
            else:
                kl = np.sqrt(-kl2) if kl2 < 0 else 0.0
                a = special.iv(msm, kl * r[j]) if kl > 0 else r[j] ** msm
                b = special.iv(msm, kl * r[j - 1]) if kl > 0 else r[j - 1] ** msm
            with np.errstate(invalid="ignore", divide="ignore"):
                qs = np.sqrt(r[j] / r[j - 1]) * a / b
            q[small] = np.where(np.isfinite(qs), qs, q[small])
        return q

    def coef(j):
        return k * k - nu2 / r[j] ** 2 - 2.0 * Vr[j] / h**2

    h12 = dx * dx / 12.0
    Q = seed(2)
    Kprev, Kcur = coef(1), coef(2)
    for j in range(2, N - 1):
        Knext = coef(j + 1)
        active = j >= start
        newQ = (2.0 * (1.0 - 5.0 * h12 * Kcur) - (1.0 + h12 * Kprev) / Q) / (1.0 + h12 * Knext)
        Q = np.where(active, newQ, seed(j + 1))
        Kprev, Kcur = Kcur, Knext
    return Q


def _deltas_from_ratio(Q: np.ndarray, ms: np.ndarray, k: float, r1: float, r2: float) -> np.ndarray:
    F1 = np.sqrt(r1) * special.jv(ms, k * r1)
    F2 = np.sqrt(r2) * special.jv(ms, k * r2)
    G1 = np.sqrt(r1) * special.yv(ms, k * r1)
    G2 = np.sqrt(r2) * special.yv(ms, k * r2)
    t = (F2 - Q * F1) / (Q * G1 - G2)
    return -np.arctan(t)


def _wrap(d: np.ndarray) -> np.ndarray:
    return (d + np.pi / 2) % np.pi - np.pi / 2


def phase_shifts(model: PotentialModel, E: float, h: float, kdx: float = 0.1, m_max: int | None = None,
                 cutoff: float = 1e-10, level: float = 1e-13):
    """Phase shifts ``delta_m`` for ``m = 0 .. m_max`` (``delta_{-m} = delta_m``)."""
    Vfun = radial_profile(model)
    k = np.sqrt(2.0 * E) / h
    R_V = potential_support(model, level * E)
    if m_max is None:
        m_max = int(np.ceil(k * R_V)) + 20
    ms = np.arange(m_max + 1)
    R_match = max(R_V, 1.25 * (m_max + 1) / k) + 4 * 2 * np.pi / k
    rr = np.linspace(0, R_V, 2001)
    vmin = min(0.0, float(np.min(Vfun(rr))))
    kmax = np.sqrt(2 * (E - vmin)) / h
    N = int(np.ceil(R_match / (kdx / kmax))) + 1
    r = np.linspace(0.0, R_match, N)
    dx = r[1]
    Vr = Vfun(r)
    Q = _sweep(Vr, r, dx, k, h, ms, float(Vr[0]))
    Q0 = _sweep(np.zeros_like(Vr), r, dx, k, h, ms, 0.0)
    d = _deltas_from_ratio(Q, ms, k, r[-2], r[-1])
    d0 = _deltas_from_ratio(Q0, ms, k, r[-2], r[-1])
    deltas = _wrap(d - d0)
    tail = np.abs(deltas[-10:])
    if np.any(tail > cutoff):
        raise TruncationError(f"|delta_m| = {tail.max():.2e} at m_max = {m_max}")
    return deltas, k, dx, R_match


def amplitude_from_deltas(deltas: np.ndarray, k: float, theta: np.ndarray) -> np.ndarray:
    a = np.exp(1j * deltas) * np.sin(deltas)
    ms = np.arange(deltas.size)
    w = np.where(ms == 0, 1.0, 2.0)
    s = (w * a) @ np.cos(np.outer(ms, theta))
    return np.sqrt(2.0 / (np.pi * k)) * np.exp(1j * np.pi / 4) * s


def partial_wave_amplitude(model: PotentialModel, E: float, h: float, theta, kdx: float = 0.1,
                           check: bool = True, m_max: int | None = None) -> PartialWaveResult:
    """``f(theta)`` for a radial 2D model; ``theta`` is measured from the incident direction.

    With ``check=True`` the computation is repeated at half the grid step and
    the difference is reported as ``error_estimate``.
    """
    theta = np.atleast_1d(np.asarray(theta, float))
    deltas, k, dx, Rm = phase_shifts(model, E, h, kdx, m_max)
    f = amplitude_from_deltas(deltas, k, theta)
    err = np.full(theta.shape, np.nan)
    if check:
        d2, *_ = phase_shifts(model, E, h, kdx / 2, deltas.size - 1)
        err = np.abs(amplitude_from_deltas(d2, k, theta) - f)
    return PartialWaveResult(theta, f, deltas, float(k), deltas.size - 1, err, dx, Rm)
