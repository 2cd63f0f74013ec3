"""Free-asymptote parametrization of scattering trajectories.

An incoming trajectory is labelled by a direction ``omega``, an impact
parameter ``z`` orthogonal to it and the energy ``E``: it is the orbit with
``x(t) - sqrt(2E) omega t - z -> 0`` as ``t -> -inf``.  The outgoing data
``(xi_inf, x_inf)`` come from a weighted least-squares fit of
``x(t) = xi_inf t + x_inf`` over a window far from the potential.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import CapturedError, IntegrationFailure, NoAsymptoteError
from .flow import (CaptureSpec, FlowOptions, PhasePoint, TrajectorySegment,
                   integrate_batch)
from .potentials import FreeModel, PotentialModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AsymptoticOptions:
    """Numerical choices for the asymptotic region.

    Radii are in units of ``model.length_scale``; the capture horizon is in
    units of ``1 / lambda_1``.
    """

    R0: float = 12.0
    R_fit: float = 30.0
    n_fit: int = 16
    window_factor: float = 2.0
    asymptote_tol: float = 1e-8
    max_corrections: int = 20
    capture_threshold: float = 1e-6
    capture_horizon: float = 50.0
    flow: FlowOptions = field(default_factory=FlowOptions)


@dataclass(frozen=True)
class ImpactCoordinates:
    """Direction ``alpha``, impact parameter ``z`` (orthogonal to ``alpha``), energy and side."""

    alpha: np.ndarray
    z: np.ndarray
    E: float
    side: str = "-"

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if a.shape != z.shape or a.ndim != 1:
            raise ValueError("alpha and z must be n-vectors")
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("alpha must be a unit vector")
        if abs(a @ z) > 1e-12 * max(1.0, np.linalg.norm(z)):
            raise ValueError("z must be orthogonal to alpha")
        if self.side not in ("-", "+"):
            raise ValueError("side must be '-' (incoming) or '+' (outgoing)")
        if not self.E > 0:
            raise ValueError("E must be positive")
        object.__setattr__(self, "alpha", a.copy())
        object.__setattr__(self, "z", z.copy())


@dataclass(frozen=True)
class AsymptoticData:
    xi_inf: np.ndarray
    x_inf: np.ndarray
    residual: float
    window: tuple[float, float]

    @property
    def theta(self) -> np.ndarray:
        return self.xi_inf / np.linalg.norm(self.xi_inf)

    @property
    def Z(self) -> np.ndarray:
        xi = self.xi_inf
        return self.x_inf - (self.x_inf @ xi) / (xi @ xi) * xi


def unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def perp_basis(omega: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``omega^perp`` as columns, shape ``(n, n-1)``.

    In 2D the basis vector is ``omega`` rotated by +90 degrees.
    """
    omega = unit(omega)
    n = omega.size
    if n == 1:
        return np.zeros((1, 0))
    if n == 2:
        return np.array([[-omega[1]], [omega[0]]])
    Q, _ = np.linalg.qr(np.column_stack([omega, np.eye(n)]))
    Q = Q[:, :n]
    Q[:, 0] *= np.sign(Q[:, 0] @ omega)
    B = Q[:, 1:]
    idx = np.argmax(np.abs(B), axis=0)
    return B * np.sign(B[idx, np.arange(n - 1)])


def _weights(t: np.ndarray, rho: float) -> np.ndarray:
    r = min(rho, 8.0) if np.isfinite(rho) else 8.0
    return np.abs(t) ** (r - 1.0)


def fit_asymptote(t: np.ndarray, x: np.ndarray, rho: float, extra: np.ndarray | None = None):
    """Weighted least squares ``x(t) = slope * t + intercept``.

    ``x`` has shape ``(K, ...)``.  Returns ``(slope, intercept, residual)``
    with the weighted RMS residual of the first ``n`` columns; ``extra``
    arrays of the same leading length are fitted with the same weights.
    """
    t = np.asarray(t, dtype=float)
    w = np.sqrt(_weights(t, rho))
    A = np.column_stack([t, np.ones_like(t)]) * w[:, None]
    shape = x.shape[1:]
    Y = x.reshape(len(t), -1) * w[:, None]
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    rms = float(np.sqrt(np.sum(resid**2) / np.sum(w**2)))
    slope = coef[0].reshape(shape)
    icpt = coef[1].reshape(shape)
    if extra is None:
        return slope, icpt, rms
    Ye = extra.reshape(len(t), -1) * w[:, None]
    ce, *_ = np.linalg.lstsq(A, Ye, rcond=None)
    return slope, icpt, rms, ce[0].reshape(extra.shape[1:]), ce[1].reshape(extra.shape[1:])


def extract_asymptotics(traj: TrajectorySegment, R_fit: float = 30.0, rho: float = 4.0,
                        window_factor: float = 2.0) -> AsymptoticData:
    """Outgoing asymptote of a sampled trajectory.

    The window is ``[T_fit, window_factor * T_fit]`` where ``T_fit`` is the
    first sample time with ``|x| >= R_fit`` (absolute length units).

    Raises
    ------
    NoAsymptoteError
        If the trajectory does not escape past ``R_fit`` with growing
        ``|x|`` or the window holds fewer than three samples.
    """
    r = np.linalg.norm(traj.x, axis=1)
    hit = np.flatnonzero(r >= R_fit)
    if hit.size == 0:
        raise NoAsymptoteError(f"trajectory never reaches |x| = {R_fit}")
    k0 = hit[0]
    T = traj.t[k0]
    T2 = window_factor * T if T > 0 else T + (window_factor - 1.0) * max(abs(T), 1.0)
    sel = (traj.t >= T) & (traj.t <= T2 * (1 + 1e-12))
    if np.count_nonzero(sel) < 3:
        raise NoAsymptoteError("fewer than three samples in the fit window")
    rs = r[sel]
    if np.any(np.diff(rs) <= 0):
        raise NoAsymptoteError("|x| is not increasing in the fit window")
    slope, icpt, res = fit_asymptote(traj.t[sel], traj.x[sel], rho)
    return AsymptoticData(slope, icpt, res, (float(T), float(T2)))


# ---------------------------------------------------------------------------
# batched incoming -> outgoing map
# ---------------------------------------------------------------------------


@dataclass
class ScatterBatch:
    """Per-member outcome of :func:`scatter_batch`.

    ``status`` is ``"ok"``, ``"captured"`` or ``"failed"``.  Arrays carry
    ``nan`` for members that did not escape.
    """

    omega: np.ndarray
    z: np.ndarray
    E: np.ndarray
    status: np.ndarray
    xi_inf: np.ndarray
    x_inf: np.ndarray
    residual: np.ndarray
    y_at_zero: np.ndarray
    basis: np.ndarray
    window: np.ndarray
    dxi_dz: np.ndarray | None = None
    dx_dz: np.ndarray | None = None
    action: np.ndarray | None = None
    action_error: np.ndarray | None = None
    records: list | None = None
    max_drift: np.ndarray | None = None
    max_defect: np.ndarray | None = None

    @property
    def theta(self) -> np.ndarray:
        return self.xi_inf / np.linalg.norm(self.xi_inf, axis=1, keepdims=True)

    @property
    def zplus(self) -> np.ndarray:
        xi = self.xi_inf
        c = np.sum(self.x_inf * xi, axis=1) / np.sum(xi * xi, axis=1)
        return self.x_inf - c[:, None] * xi

    def sigma_hat(self) -> np.ndarray:
        """``|det(xi_inf, d_z1 xi_inf, ...)|`` with ``z`` in orthonormal coordinates."""
        if self.dxi_dz is None:
            raise ValueError("variational data were not computed")
        mats = np.concatenate([self.xi_inf[:, :, None], self.dxi_dz], axis=2)
        return np.abs(np.linalg.det(mats))

    def asymptotic(self, b: int) -> AsymptoticData:
        return AsymptoticData(self.xi_inf[b], self.x_inf[b], float(self.residual[b]),
                              tuple(self.window[b]))


def _free_line_integral(model: PotentialModel, x0: np.ndarray, v: np.ndarray) -> float:
    """``int_0^inf V(x0 + v s) ds`` by adaptive quadrature."""
    if isinstance(model, FreeModel):
        return 0.0
    val, _ = integrate.quad(lambda s: float(model.potential(x0 + v * s)), 0.0, np.inf,
                            limit=200, epsabs=1e-14, epsrel=1e-10)
    return val


def _free_line_force(model: PotentialModel, x0: np.ndarray, v: np.ndarray, smax: float) -> float:
    """Crude bound on the momentum change beyond ``x0`` along the free line."""
    s = np.linspace(0.0, smax, 64)
    g = np.linalg.norm(model.gradient(x0[None, :] + s[:, None] * v), axis=1)
    return float(integrate.trapezoid(g, s) + g[-1] * smax)


def _start_points(model, omega, z, E, opts, side):
    """Free-line start points at radius R0 on the asymptote, with backward corrections."""
    L = model.length_scale
    R0 = opts.R0 * L
    speed = np.sqrt(2.0 * E)
    b = speed[:, None] * omega
    sgn = -1.0 if side == "-" else 1.0
    t_s = sgn * R0 / speed
    x_s = z + b * t_s[:, None]
    q = np.concatenate([x_s, b], axis=1)
    # far-field correction only when the tail force is not negligible
    need = np.array([
        _free_line_force(model, x_s[k], sgn * b[k], 10.0 * R0 / speed[k]) > 1e-3 * opts.asymptote_tol * speed[k]
        for k in range(len(E))
    ])
    if not np.any(need):
        return q, t_s
    idx = np.flatnonzero(need)
    Rf = opts.R_fit * L
    for it in range(opts.max_corrections):
        qa = q[idx]
        # continue away from the barrier to the fit window and read off the asymptote
        T1 = t_s[idx] + sgn * Rf / speed[idx]
        T2 = t_s[idx] + sgn * opts.window_factor * Rf / speed[idx]
        te = np.linspace(T1, T2, opts.n_fit, axis=1)
        res = integrate_batch(model, qa, T2, t0=t_s[idx], t_eval=te, opts=opts.flow)
        n = model.n
        delta_a = np.empty((len(idx), n))
        delta_b = np.empty((len(idx), n))
        for j in range(len(idx)):
            slope, icpt, _ = fit_asymptote(te[j], res.y_eval[j, :, :n], model.rho)
            delta_b[j] = slope - b[idx[j]]
            delta_a[j] = icpt - z[idx[j]]
        err = np.max(np.abs(np.concatenate([delta_a, delta_b], axis=1)), axis=1)
        q[idx, n:] -= delta_b
        q[idx, :n] -= delta_a + delta_b * t_s[idx, None]
        if np.all(err < opts.asymptote_tol):
            break
        idx = idx[err >= opts.asymptote_tol]
    else:
        raise NoAsymptoteError("asymptote correction did not converge")
    return q, t_s


def scatter_batch(model: PotentialModel, omega: np.ndarray, z: np.ndarray, E: float | np.ndarray,
                  opts: AsymptoticOptions | None = None, variational: bool = False,
                  action: bool = False, record: bool = False) -> ScatterBatch:
    """Follow incoming trajectories ``(omega, z, E)`` to their outgoing asymptotes.

    Parameters
    ----------
    omega, z : (B, n) arrays
        Incoming directions (unit) and impact parameters (``z . omega = 0``).
    variational : bool
        Also propagate derivatives with respect to ``z`` (in the basis
        :func:`perp_basis`), giving ``dxi_dz`` and ``dx_dz`` of the asymptote.
    action : bool
        Accumulate the modified action
        ``int (|xi|^2 - 2E) dt - <x_inf, sqrt(2E) theta>`` with free-line tails.
    record : bool
        Keep all accepted steps (for caustic counting).
    """
    opts = opts or AsymptoticOptions()
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    B, n = omega.shape
    E = np.broadcast_to(np.asarray(E, dtype=float), (B,)).copy()
    if np.any(E <= 0):
        raise ValueError("E must be positive")
    omega = omega / np.linalg.norm(omega, axis=1, keepdims=True)
    if np.any(np.abs(np.sum(omega * z, axis=1)) > 1e-10 * np.maximum(1.0, np.linalg.norm(z, axis=1))):
        raise ValueError("z must be orthogonal to omega")
    basis = np.stack([perp_basis(w) for w in omega])  # (B, n, n-1)
    L = model.length_scale
    speed = np.sqrt(2.0 * E)

    q, t_s = _start_points(model, omega, z, E, opts, "-")

    capture = None
    lam1 = 1.0
    if model.lambdas and model.E0 > 0:
        capture = CaptureSpec.for_model(model, opts.capture_threshold)
        lam1 = min(model.lambdas)
    R_eff = np.maximum(opts.R_fit * L, np.linalg.norm(z, axis=1) + opts.R0 * L)
    t_hor = t_s + (opts.R0 * L + R_eff) / speed * 2.0 + opts.capture_horizon / lam1

    M0 = None
    if variational:
        M0 = np.zeros((B, 2 * n, 2 * n))
        M0[:] = np.eye(2 * n)
    res1 = integrate_batch(model, q, t_hor, t0=t_s, opts=opts.flow, variational=variational,
                           M0=M0, quadratures=action, t_eval=np.zeros((B, 1)),
                           escape_radius=R_eff, capture=capture, record=record,
                           raise_on_failure=False)
    status = np.where(res1.status == "escaped", "ok",
                      np.where(res1.status == "captured", "captured", "failed")).astype(object)
    xi_inf = np.full((B, n), np.nan)
    x_inf = np.full((B, n), np.nan)
    resid = np.full(B, np.nan)
    window = np.full((B, 2), np.nan)
    dxi = np.full((B, n, n - 1), np.nan) if variational else None
    dx = np.full((B, n, n - 1), np.nan) if variational else None
    act = np.full(B, np.nan) if action else None
    act_err = np.full(B, np.nan) if action else None
    max_drift = res1.max_drift.copy()
    max_defect = res1.max_defect.copy() if variational else None
    records = res1.records

    ok = np.flatnonzero(status == "ok")
    if ok.size:
        T1 = res1.t[ok]
        span = np.where(T1 > 0, (opts.window_factor - 1.0) * T1, R_eff[ok] / speed[ok])
        T2 = T1 + span
        te = np.linspace(T1, T2, opts.n_fit, axis=1)
        res2 = integrate_batch(model, res1.y[ok], T2, t0=T1, opts=opts.flow, variational=variational,
                               M0=res1.M[ok] if variational else None, quadratures=action,
                               t_eval=te, record=record, raise_on_failure=False)
        if action:
            # continue the quadratures from phase one
            res2.q_eval += res1.q[ok][:, None, :]
            res2.q = res2.q + res1.q[ok]
        max_drift[ok] = np.maximum(max_drift[ok], res2.max_drift)
        if variational:
            max_defect[ok] = np.maximum(max_defect[ok], res2.max_defect)
        for j, b in enumerate(ok):
            if res2.status[j] == "failed":
                status[b] = "failed"
                continue
            xs = res2.y_eval[j, :, :n]
            extra = None
            if variational:
                extra = res2.M_eval[j, :, :n, :n] @ basis[b]  # (K, n, n-1)
                s, c, r, ds, dc = fit_asymptote(te[j], xs, model.rho, extra)
                dxi[b], dx[b] = ds, dc
            else:
                s, c, r = fit_asymptote(te[j], xs, model.rho)
            xi_inf[b], x_inf[b], resid[b] = s, c, r
            window[b] = (T1[j], T2[j])
            if action:
                theta = s / np.linalg.norm(s)
                q0, q1 = res2.q[j]
                dt = T2[j] - t_s[b]
                tail_in = _free_line_integral(model, q[b, :n], -q[b, n:])
                tail_out = _free_line_integral(model, c + s * T2[j], s)
                main = q0 - 2.0 * E[b] * dt
                alt = -2.0 * q1
                act[b] = main - 2.0 * (tail_in + tail_out) - speed[b] * (c @ theta)
                act_err[b] = abs(main - alt)
            if record:
                r2 = res2.records[j]
                r1 = records[b]
                records[b] = {k: (None if r1[k] is None else np.concatenate([r1[k], r2[k][1:]]))
                              for k in r1}
    y0 = res1.y_eval[:, 0, :] if res1.y_eval is not None else np.full((B, 2 * n), np.nan)
    return ScatterBatch(omega, z, E, status.astype(str), xi_inf, x_inf, resid, y0, basis, window,
                        dxi, dx, act, act_err, records, max_drift, max_defect)


# ---------------------------------------------------------------------------
# single-trajectory API
# ---------------------------------------------------------------------------


def init_from_asymptote(model: PotentialModel, ic: ImpactCoordinates,
                        opts: AsymptoticOptions | None = None) -> PhasePoint:
    """Point ``gamma_{side}(0, alpha, z, E)`` on the orbit with the given free asymptote.

    For the incoming side the asymptote holds as ``t -> -inf``, for the
    outgoing side as ``t -> +inf``.

    Raises
    ------
    NoAsymptoteError
        If the far-field correction does not converge.
    """
    opts = opts or AsymptoticOptions()
    E = np.array([ic.E])
    q, t_s = _start_points(model, ic.alpha[None], ic.z[None], E, opts, ic.side)
    try:
        res = integrate_batch(model, q, 0.0, t0=t_s, opts=opts.flow)
    except IntegrationFailure as exc:
        raise NoAsymptoteError(f"flow to t=0 failed: {exc}") from exc
    return PhasePoint.from_array(res.y[0])


def scattering_data(model: PotentialModel, omega: Sequence[float], z_minus: Sequence[float], E: float,
                    opts: AsymptoticOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Outgoing direction and impact parameter ``(theta, z_plus)``.

    Raises
    ------
    CapturedError
        If the incoming orbit converges to the fixed point.
    NoAsymptoteError
        If it neither escapes nor is captured within the horizon.
    """
    res = scatter_batch(model, np.asarray(omega, float)[None], np.asarray(z_minus, float)[None], E, opts)
    if res.status[0] == "captured":
        raise CapturedError("incoming trajectory converges to the fixed point")
    if res.status[0] != "ok":
        raise NoAsymptoteError("incoming trajectory did not reach the fit window")
    return res.theta[0], res.zplus[0]


def deflection_angle(omega: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Signed 2D angle from ``omega`` to ``theta`` in ``(-pi, pi]``."""
    omega = np.atleast_2d(omega)
    theta = np.atleast_2d(theta)
    cross = omega[:, 0] * theta[:, 1] - omega[:, 1] * theta[:, 0]
    dot = np.sum(omega * theta, axis=1)
    return np.arctan2(cross, dot)


def batch_csv(model: PotentialModel, rows: np.ndarray, opts: AsymptoticOptions | None = None) -> tuple[list[str], list[list]]:
    """Batch scattering for rows ``omega..., z..., E``.

    Returns the header ``theta..., zplus..., residual, status`` and rows.
    Captured or failed rows carry ``nan``.
    """
    n = model.n
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != 2 * n + 1:
        raise ValueError(f"expected {2 * n + 1} columns")
    res = scatter_batch(model, rows[:, :n], rows[:, n:2 * n], rows[:, 2 * n], opts)
    header = [f"theta{i + 1}" for i in range(n)] + [f"zplus{i + 1}" for i in range(n)] + ["residual", "status"]
    out = []
    th, zp = res.theta, res.zplus
    for b in range(len(rows)):
        out.append([*th[b], *zp[b], res.residual[b], res.status[b]])
    return header, out
