"""Leading-order semiclassical scattering amplitude.

For an incoming direction ``omega``, outgoing direction ``theta`` and energy
``E`` the classical branches are the impact parameters ``z_j`` with
``xi_inf(omega, z_j, E) = sqrt(2E) theta``.  Each contributes

    sigma_hat_j ** (-1/2) * exp(i S_j / h - i mu_j pi / 2)

where ``sigma_hat = |det(xi_inf, d_z1 xi_inf, ...)|``, ``S_j`` is the modified
action and ``mu_j`` the number of caustics along the branch.

Normalization: with ``sigma_hat`` built from the unnormalized ``xi_inf``, the
classical cross-section is ``|db/dchi| = (2E)^(n/2) / sigma_hat`` so the
standard flux-normalized amplitude ``f`` (``|f|^2 = dsigma/dOmega``) satisfies
``|f| ~ (2E)^(n/4) |A|`` at leading order; :func:`flux_normalized` applies
this factor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .asymptotics import AsymptoticOptions, perp_basis, scatter_batch, unit
from .errors import (ConfigurationError, NonRegularDirectionError, PrecisionError,
                     SaddleScatterError)
from .potentials import PotentialModel

logger = logging.getLogger(__name__)


class ConsistencyError(SaddleScatterError):
    """Variational and finite-difference derivatives disagree."""


class UndecidableError(SaddleScatterError):
    """Caustic determinant vanishes in an endpoint window."""


@dataclass(frozen=True)
class SearchSpec:
    """Multistart Newton search over the impact disc (radius in length-scale units)."""

    R_impact: float = 4.0
    n_starts: int = 64
    dedup_radius: float = 1e-4
    branch_tol: float = 1e-6
    newton_tol: float = 1e-12
    max_iter: int = 40
    seed: int = 0
    extra_starts: tuple = ()


@dataclass
class ScatteringBranch:
    index: int
    z: np.ndarray
    theta: np.ndarray
    sigma_hat: float
    action: float
    maslov: int
    sigma_hat_fd: float = np.nan
    action_dual: float = np.nan
    trajectory: dict | None = None

    def to_dict(self) -> dict:
        return {"z": self.z.tolist(), "sigma_hat": self.sigma_hat, "action": self.action,
                "maslov": self.maslov}


@dataclass
class AmplitudeResult:
    omega: np.ndarray
    theta: np.ndarray
    E: float
    h: float
    branches: list[ScatteringBranch]
    status: str = "ok"
    conventions: dict = field(default_factory=dict)

    @property
    def value(self) -> complex:
        return assemble(self.branches, self.h)

    def at_h(self, h: float) -> complex:
        """Amplitude at another ``h`` with the same branches (only the phases change)."""
        return assemble(self.branches, h)

    def to_dict(self) -> dict:
        a = self.value
        return {"omega": self.omega.tolist(), "theta": self.theta.tolist(), "E": self.E, "h": self.h,
                "branches": [b.to_dict() for b in self.branches],
                "amplitude": {"re": a.real, "im": a.imag}, "status": self.status,
                "conventions": self.conventions}


def assemble(branches: Sequence[ScatteringBranch], h: float) -> complex:
    """``sum_j sigma_hat_j^(-1/2) exp(i S_j / h - i mu_j pi / 2)``."""
    total = 0j
    for b in branches:
        total += b.sigma_hat ** -0.5 * np.exp(1j * (b.action / h - b.maslov * np.pi / 2))
    return complex(total)


def flux_normalized(amplitude: complex, E: float, n: int) -> complex:
    """Convert the branch sum to the flux-normalized amplitude (``|f|^2 = dsigma/dOmega``)."""
    return amplitude * (2.0 * E) ** (n / 4.0)


# ---------------------------------------------------------------------------
# branch search
# ---------------------------------------------------------------------------


def _starts(n: int, spec: SearchSpec, L: float) -> np.ndarray:
    d = n - 1
    R = spec.R_impact * L
    if d == 0:
        return np.zeros((1, 0))
    pts = qmc.Sobol(d, scramble=False).random(spec.n_starts)
    if d == 1:
        w = R * (2 * pts - 1)
        # Sobol starts at 0; shift by half a cell so the grid is symmetric
        w = w + R / spec.n_starts
        return np.clip(w, -R, R)
    w = R * (2 * pts - 1)
    return w[np.linalg.norm(w, axis=1) <= R]


def _residual(xi_inf: np.ndarray, dxi: np.ndarray, theta: np.ndarray, Bt: np.ndarray):
    """Equations ``Bt^T xi_hat = 0`` and their Jacobian in the impact coordinates."""
    nrm = np.linalg.norm(xi_inf, axis=1, keepdims=True)
    xh = xi_inf / nrm
    F = xh @ Bt  # (B, n-1)
    P = np.eye(xi_inf.shape[1])[None] - xh[:, :, None] * xh[:, None, :]
    Jm = np.einsum("in,bnm,bmk->bik", Bt.T, P, dxi) / nrm[:, :, None]
    return F, Jm


def find_branches(model: PotentialModel, omega: Sequence[float], theta: Sequence[float], E: float,
                  spec: SearchSpec | None = None, opts: AsymptoticOptions | None = None) -> tuple[list[np.ndarray], dict]:
    """All impact parameters ``z`` with outgoing direction ``theta``.

    Returns the roots (sorted by ``|z|`` then lexicographically) and a
    diagnostics dict (``boundary_warning``, per-start outcomes).
    """
    spec = spec or SearchSpec()
    omega = unit(omega)
    theta = unit(theta)
    n = model.n
    L = model.length_scale
    B = perp_basis(omega)
    Bt = perp_basis(theta)
    w = _starts(n, spec, L)
    if spec.extra_starts:
        w = np.vstack([w, np.atleast_2d(np.asarray(spec.extra_starts, float)).reshape(-1, n - 1)])
    R = spec.R_impact * L
    active = np.ones(len(w), dtype=bool)
    converged = np.zeros(len(w), dtype=bool)
    for it in range(spec.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zs = w[idx] @ B.T
        res = scatter_batch(model, np.tile(omega, (idx.size, 1)), zs, E, opts, variational=True)
        ok = res.status == "ok"
        active[idx[~ok]] = False
        if not np.any(ok):
            break
        ii = idx[ok]
        F, Jm = _residual(res.xi_inf[ok], res.dxi_dz[ok], theta, Bt)
        dots = res.theta[ok] @ theta
        step = np.full((ii.size, n - 1), np.nan)
        for j in range(ii.size):
            try:
                step[j] = -np.linalg.solve(Jm[j], F[j])
            except np.linalg.LinAlgError:
                pass
        bad = ~np.all(np.isfinite(step), axis=1)
        active[ii[bad]] = False
        sn = np.linalg.norm(step, axis=1)
        done = (~bad) & (np.linalg.norm(F, axis=1) < spec.newton_tol) & (dots > 0)
        converged[ii[done]] = True
        active[ii[done]] = False
        mv = (~bad) & (~done)
        damp = np.minimum(1.0, (R / 8) / np.maximum(sn, 1e-300))
        w[ii[mv]] = w[ii[mv]] + (damp[mv, None] * step[mv])
        # leave the disc generously before giving up
        out = np.linalg.norm(w[ii], axis=1) > 2 * R
        active[ii[out]] = False
        # tiny steps count as converged; verification below decides
        small = mv & (sn < 1e-13 * max(1.0, R))
        converged[ii[small]] = True
        active[ii[small]] = False
    cand = w[converged]
    roots: list[np.ndarray] = []
    if len(cand):
        zs = cand @ B.T
        res = scatter_batch(model, np.tile(omega, (len(cand), 1)), zs, E, opts)
        target = np.sqrt(2 * E) * theta
        for k in range(len(cand)):
            if res.status[k] != "ok":
                continue
            if np.linalg.norm(res.xi_inf[k] - target) > spec.branch_tol * np.sqrt(2 * E):
                continue
            if any(np.linalg.norm(zs[k] - r) < spec.dedup_radius * L for r in roots):
                continue
            roots.append(zs[k])
    roots.sort(key=lambda r: (round(float(np.linalg.norm(r)), 12), tuple(np.round(r, 12))))
    boundary = [r.tolist() for r in roots if np.linalg.norm(r) > 0.98 * R]
    if boundary:
        logger.warning("branch root(s) near the search boundary: %s", boundary)
    diag = {"n_starts": int(len(w)), "n_converged": int(converged.sum()), "boundary_warning": bool(boundary)}
    return roots, diag


# ---------------------------------------------------------------------------
# branch quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaHat:
    value: float
    value_fd: float

    @property
    def rel_diff(self) -> float:
        return abs(self.value - self.value_fd) / max(abs(self.value), 1e-300)


def sigma_hat(model: PotentialModel, omega: Sequence[float], z: Sequence[float], E: float,
              opts: AsymptoticOptions | None = None, fd_step: float = 1e-4, check: bool = True) -> SigmaHat:
    """``|det(xi_inf, d_z xi_inf)|`` by variational transport and by central differences.

    Raises
    ------
    ConsistencyError
        If the two disagree by more than 1e-3 relative (non-degenerate points
        only, ``check=True``).
    """
    omega = unit(omega)
    z = np.asarray(z, float)
    n = model.n
    B = perp_basis(omega)
    L = model.length_scale
    d = fd_step * L
    zs = [z]
    for k in range(n - 1):
        zs += [z + d * B[:, k], z - d * B[:, k]]
    zs = np.array(zs)
    res = scatter_batch(model, np.tile(omega, (len(zs), 1)), zs, E, opts, variational=True)
    if np.any(res.status != "ok"):
        raise PrecisionError("trajectory for sigma_hat did not escape")
    sv = float(res.sigma_hat()[0])
    cols = [(res.xi_inf[1 + 2 * k] - res.xi_inf[2 + 2 * k]) / (2 * d) for k in range(n - 1)]
    sfd = float(abs(np.linalg.det(np.column_stack([res.xi_inf[0], *cols]))))
    out = SigmaHat(sv, sfd)
    scale = 2 * E * max(1.0, 1.0 / L)
    if check and sv > 1e-6 * scale and out.rel_diff > 1e-3:
        raise ConsistencyError(f"sigma_hat variational {sv} vs finite difference {sfd}")
    return out


@dataclass(frozen=True)
class ActionResult:
    value: float
    dual_value: float
    theta: np.ndarray
    x_inf: np.ndarray

    @property
    def error(self) -> float:
        return abs(self.value - self.dual_value)


def modified_action(model: PotentialModel, omega: Sequence[float], z: Sequence[float], E: float,
                    theta: np.ndarray | None = None, x_inf: np.ndarray | None = None,
                    opts: AsymptoticOptions | None = None, tol: float = 1e-8) -> ActionResult:
    """``S = int (|xi|^2 - 2E) dt - <x_inf, sqrt(2E) theta>``.

    The integral is accumulated along the orbit both as ``|xi|^2 - 2E`` and as
    ``-2V`` (equal on the energy shell); both values are returned.  The
    portions beyond the integration window are added as free-line integrals
    of ``-2V``.

    Raises
    ------
    PrecisionError
        If the two forms differ by more than ``tol`` (relative to ``max(1, |S|)``).
    """
    omega = unit(omega)
    res = scatter_batch(model, omega[None], np.asarray(z, float)[None], E, opts, action=True)
    if res.status[0] != "ok":
        raise PrecisionError("orbit did not escape; action undefined")
    th = res.theta[0] if theta is None else unit(theta)
    xi = res.x_inf[0] if x_inf is None else np.asarray(x_inf, float)
    k = np.sqrt(2 * E)
    S = res.action[0] + k * (res.x_inf[0] @ res.theta[0]) - k * (xi @ th)
    # action_error is |int(|xi|^2 - 2E) - int(-2V)| over the integrated window
    out = ActionResult(float(S), float(S + res.action_error[0]), th, xi)
    if out.error > tol * max(1.0, abs(S)):
        raise PrecisionError(f"action integrands disagree by {out.error:.3g}")
    return out


def caustic_determinant(y: np.ndarray, M: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """``det[xi(t), d_z x(t)]`` along recorded states ``y (K, 2n)`` and matrices ``M (K, 2n, 2n)``."""
    n = y.shape[1] // 2
    dx = M[:, :n, :n] @ basis
    mats = np.concatenate([y[:, n:, None], dx], axis=2)
    return np.linalg.det(mats)


def maslov_from_record(record: dict, basis: np.ndarray, xi_inf: np.ndarray, dxi: np.ndarray,
                       x_inf: np.ndarray, dx: np.ndarray, rel_window: float = 1e-6) -> int:
    """Caustic count from a recorded orbit plus the analytic free tail.

    Sign changes of ``D(t) = det[xi, d_z x]`` are counted on the recorded
    steps.  Beyond the last step the orbit is free and
    ``D(t) = det[xi_inf, d_z x_inf + t d_z xi_inf]`` is a polynomial in ``t``
    whose real roots past the last step are added.

    Raises
    ------
    UndecidableError
        If ``D`` is (relatively) zero at either end of the record.
    """
    t = record["t"]
    D = caustic_determinant(record["y"], record["M"], basis)
    scale = np.max(np.abs(D))
    if abs(D[0]) <= rel_window * scale or abs(D[-1]) <= rel_window * scale:
        raise UndecidableError("caustic determinant vanishes at an endpoint")
    nz = D[np.abs(D) > 1e-14 * scale]
    count = int(np.sum(np.sign(nz[1:]) != np.sign(nz[:-1])))
    n = len(xi_inf)
    # free tail: sample the degree n-1 polynomial and find its roots
    T = t[-1]
    k = max(n - 1, 1)
    ts = T + np.arange(k + 1) * max(1.0, abs(T))
    vals = np.array([np.linalg.det(np.column_stack([xi_inf, dx + s * dxi])) for s in ts])
    coef = np.polyfit(ts - T, vals, k)
    # drop leading coefficients that are round-off over the sampled span
    span = ts[-1] - T
    mag = np.abs(coef) * span ** np.arange(k, -1, -1)
    keep = np.flatnonzero(mag > 1e-10 * max(np.max(np.abs(vals)), 1e-300))
    coef = coef[keep[0]:] if keep.size else np.zeros(1)
    roots = np.roots(coef) if coef.size > 1 else np.array([])
    tail = [r.real for r in roots if abs(r.imag) < 1e-9 * max(1.0, abs(r)) and r.real > 0]
    count += len(tail)
    return count


def maslov_index(model: PotentialModel, omega: Sequence[float], z: Sequence[float], E: float,
                 opts: AsymptoticOptions | None = None) -> int:
    """Number of caustics (sign changes of ``det dx/d(t, z)``) along the branch orbit."""
    omega = unit(omega)
    res = scatter_batch(model, omega[None], np.asarray(z, float)[None], E, opts,
                        variational=True, record=True)
    if res.status[0] != "ok":
        raise PrecisionError("orbit did not escape")
    return maslov_from_record(res.records[0], res.basis[0], res.xi_inf[0], res.dxi_dz[0],
                              res.x_inf[0], res.dx_dz[0])


def branch_data(model: PotentialModel, omega: np.ndarray, zs: Sequence[np.ndarray], E: float,
                opts: AsymptoticOptions | None = None, fd_check: bool = True,
                keep_trajectory: bool = False) -> list[ScatteringBranch]:
    """``sigma_hat``, action and Maslov index for a list of branch impact parameters."""
    omega = unit(omega)
    if not len(zs):
        return []
    zs = np.array(zs)
    res = scatter_batch(model, np.tile(omega, (len(zs), 1)), zs, E, opts, variational=True,
                        action=True, record=True)
    out = []
    sig = res.sigma_hat()
    for j in range(len(zs)):
        if res.status[j] != "ok":
            raise PrecisionError(f"branch {j} no longer escapes")
        mu = maslov_from_record(res.records[j], res.basis[j], res.xi_inf[j], res.dxi_dz[j],
                                res.x_inf[j], res.dx_dz[j])
        sfd = np.nan
        if fd_check:
            sfd = sigma_hat(model, omega, zs[j], E, opts, check=True).value_fd
        out.append(ScatteringBranch(j, zs[j], res.theta[j], float(sig[j]), float(res.action[j]), mu,
                                    sfd, float(res.action[j]),
                                    res.records[j] if keep_trajectory else None))
    return out


def semiclassical_leading_amplitude(model: PotentialModel, omega: Sequence[float], theta: Sequence[float],
                                    E: float, h: float, spec: SearchSpec | None = None,
                                    opts: AsymptoticOptions | None = None, sigma_floor: float = 1e-8,
                                    fd_check: bool = False) -> AmplitudeResult:
    """Assemble ``sum_j sigma_hat_j^(-1/2) exp(i S_j/h - i mu_j pi/2)``.

    Raises
    ------
    ConfigurationError
        If ``theta == omega`` (forward direction excluded).
    NonRegularDirectionError
        If some branch has ``sigma_hat <= sigma_floor``.
    """
    omega = unit(omega)
    theta = unit(theta)
    if np.linalg.norm(theta - omega) < 1e-12:
        raise ConfigurationError("the forward direction theta = omega is excluded")
    roots, diag = find_branches(model, omega, theta, E, spec, opts)
    branches = branch_data(model, omega, roots, E, opts, fd_check=fd_check)
    for b in branches:
        if b.sigma_hat <= sigma_floor:
            raise NonRegularDirectionError(f"sigma_hat = {b.sigma_hat:.3g} at z = {b.z}")
    conv = {"normalization": "branch sum without prefactor; multiply by (2E)^(n/4) for |f|^2 = dsigma/dOmega",
            "maslov": "count of sign changes of det[xi, d_z x] along the orbit",
            "search": diag}
    return AmplitudeResult(omega, theta, float(E), float(h), branches, "ok", conv)


# ---------------------------------------------------------------------------
# scattering relation and exponents
# ---------------------------------------------------------------------------


def scattering_relation_table(model: PotentialModel, E: float, omegas: np.ndarray, zs: np.ndarray,
                              opts: AsymptoticOptions | None = None) -> list[dict]:
    """Rows ``(theta, -sqrt(2E) z_plus, omega, -sqrt(2E) z_minus)`` with a status per row."""
    omegas = np.atleast_2d(omegas)
    zs = np.atleast_2d(zs)
    res = scatter_batch(model, omegas, zs, E, opts)
    k = np.sqrt(2 * E)
    th, zp = res.theta, res.zplus
    rows = []
    for b in range(len(omegas)):
        rows.append({"theta": th[b], "eta_plus": -k * zp[b], "omega": omegas[b], "eta_minus": -k * zs[b],
                     "status": res.status[b]})
    return rows


@dataclass(frozen=True)
class CriticalOrderData:
    lambdas: tuple
    resolvent_order: object
    scattering_order: object


def critical_order_exponents(model_or_lambdas) -> CriticalOrderData:
    """``1 - sum(lambda) / (2 lambda_1)`` and ``1/2 - sum(lambda) / (2 lambda_1)``.

    Integer or :class:`fractions.Fraction` curvatures give exact rational
    results; floats give floats.
    """
    lam = model_or_lambdas.lambdas if hasattr(model_or_lambdas, "lambdas") else model_or_lambdas
    lam = tuple(sorted(lam))
    if not lam or min(lam) <= 0:
        raise ValueError("curvatures must be positive")
    if hasattr(model_or_lambdas, "lambdas"):
        # model curvatures are floats; recover small rationals exactly
        fr = [Fraction(v).limit_denominator(1000) for v in lam]
        if all(float(f) == v for f, v in zip(fr, lam)):
            lam = tuple(fr)
    exact = all(isinstance(v, (int, Fraction)) for v in lam)
    if exact:
        lam = tuple(Fraction(v) for v in lam)
        r = sum(lam, Fraction(0)) / (2 * lam[0])
        return CriticalOrderData(lam, 1 - r, Fraction(1, 2) - r)
    r = float(sum(lam)) / (2 * lam[0])
    return CriticalOrderData(lam, 1.0 - r, 0.5 - r)


def interference_frequency(inv_h: np.ndarray, values: np.ndarray, n_phase: int = 8) -> float:
    """Angular frequency of the two-branch beat in ``values`` sampled on a uniform ``1/h`` grid.

    A Hann-windowed, zero-padded FFT gives the starting frequency, refined by
    least squares on ``(c0 + c1 h) + (d0 + d1 h) cos(w / h + phase)``; the
    ``h`` terms absorb the next order of the expansion.  For two branches the
    result estimates ``|S_1 - S_2|``.
    """
    u = np.asarray(inv_h, float)
    y = np.asarray(values, float)
    du = np.diff(u)
    if u.size < 8 or np.ptp(du) > 1e-9 * abs(du[0]):
        raise ValueError("need at least 8 samples on a uniform 1/h grid")
    nfft = 1 << int(np.ceil(np.log2(64 * u.size)))
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(u.size), nfft))
    w = 2 * np.pi * np.fft.rfftfreq(nfft, du[0])
    w0 = w[1 + int(np.argmax(spec[1:]))]

    def resid(p):
        c0, c1, d0, d1, om, ph = p
        return c0 + c1 / u + (d0 + d1 / u) * np.cos(om * u + ph) - y

    best = None
    for ph in np.linspace(0, 2 * np.pi, n_phase, endpoint=False):
        r = optimize.least_squares(resid, [y.mean(), 0.0, 0.5 * np.ptp(y), 0.0, w0, ph])
        if best is None or r.cost < best.cost:
            best = r
    return float(best.x[4])
