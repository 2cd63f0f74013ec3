"""Hamiltonian flow of ``p(x, xi) = |xi|**2 / 2 + V(x)`` and its linearization.

The workhorse is :func:`integrate_batch`, a vectorized Dormand-Prince 8(5,3)
integrator that advances a batch of phase points with individual step sizes.
Each member may carry the variational matrix ``M = d exp(tH_p)`` and two
quadratures, ``int |xi|**2 dt`` and ``int V dt``, used for action integrals.
Steps are rejected both on the embedded error estimate and when the energy
drift budget would be exceeded.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import IntegrationFailure
from .potentials import PotentialModel

logger = logging.getLogger(__name__)

_NS = _dop.N_STAGES
_A = _dop.A[:_NS, :_NS]
_B = _dop.B
_C = _dop.C[:_NS]
_E3 = _dop.E3
_E5 = _dop.E5
_SAFETY, _MIN_FACTOR, _MAX_FACTOR = 0.9, 0.2, 10.0


@dataclass(frozen=True)
class FlowOptions:
    """Integrator settings.

    Attributes
    ----------
    rtol, atol : float
        Local error tolerances of the embedded pair.
    energy_drift_tol : float
        Bound on ``|p - E| / E`` along every trajectory.
    symplectic_tol : float
        Bound on ``||M^T J M - J||`` (max norm), checked by callers.
    horizon : float
        Largest admissible ``|t|``.
    max_steps : int
        Step budget per call.
    min_step : float
        Smallest admissible step relative to ``max(1, |t|)``.
    """

    rtol: float = 1e-10
    atol: float = 1e-10
    energy_drift_tol: float = 1e-9
    symplectic_tol: float = 1e-7
    horizon: float = 1e5
    max_steps: int = 200_000
    min_step: float = 1e-13

    def scaled(self, factor: float) -> "FlowOptions":
        """Copy with all tolerances multiplied by ``factor``."""
        return FlowOptions(self.rtol * factor, self.atol * factor, self.energy_drift_tol * factor,
                           self.symplectic_tol * factor, self.horizon, self.max_steps, self.min_step)


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).copy())
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).copy())
        if self.x.shape != self.xi.shape or self.x.ndim != 1:
            raise ValueError("x and xi must be n-vectors of equal length")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.xi))):
            raise ValueError("phase point must be finite")

    @property
    def n(self) -> int:
        return self.x.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_array(cls, y: np.ndarray) -> "PhasePoint":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n], y[n:])

    def energy(self, model: PotentialModel) -> float:
        return float(model.energy(self.x, self.xi))


def symplectic_form(n: int) -> np.ndarray:
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def symplectic_defect(M: np.ndarray) -> np.ndarray:
    """``max |M^T J M - J|`` for one matrix or a stack of matrices."""
    M = np.asarray(M)
    n = M.shape[-1] // 2
    J = symplectic_form(n)
    D = np.swapaxes(M, -1, -2) @ J @ M - J
    return np.max(np.abs(D), axis=(-2, -1))


def vector_field(model: PotentialModel, point: PhasePoint) -> np.ndarray:
    """Hamiltonian vector field ``(xi, -grad V(x))``."""
    return np.concatenate([point.xi, -model.gradient(point.x)])


# ---------------------------------------------------------------------------
# batched integrator
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    """Outcome of :func:`integrate_batch` for ``B`` members.

    ``status`` is one of ``"done"``, ``"escaped"``, ``"captured"`` or
    ``"failed"``.  Sampled arrays are ``nan`` where a member stopped before
    the requested time.
    """

    t: np.ndarray
    y: np.ndarray
    status: np.ndarray
    M: np.ndarray | None = None
    q: np.ndarray | None = None
    t_eval: np.ndarray | None = None
    y_eval: np.ndarray | None = None
    M_eval: np.ndarray | None = None
    q_eval: np.ndarray | None = None
    energy0: np.ndarray | None = None
    max_drift: np.ndarray | None = None
    max_defect: np.ndarray | None = None
    min_norm: np.ndarray | None = None
    steps: np.ndarray | None = None
    rejected: np.ndarray | None = None
    records: list | None = None


class _Layout:
    def __init__(self, n: int, variational: bool, quadratures: bool):
        self.n = n
        self.var = variational
        self.quad = quadratures
        self.m0 = 2 * n
        self.m1 = self.m0 + (4 * n * n if variational else 0)
        self.size = self.m1 + (2 if quadratures else 0)


def _rhs(model: PotentialModel, lay: _Layout, z: np.ndarray) -> np.ndarray:
    n = lay.n
    x = z[:, :n]
    xi = z[:, n:2 * n]
    dz = np.empty_like(z)
    dz[:, :n] = xi
    if lay.var:
        v, g, H = model.vgh(x)
        M = z[:, lay.m0:lay.m1].reshape(-1, 2 * n, 2 * n)
        dM = np.empty_like(M)
        dM[:, :n, :] = M[:, n:, :]
        dM[:, n:, :] = -H @ M[:, :n, :]
        dz[:, lay.m0:lay.m1] = dM.reshape(len(z), -1)
    elif lay.quad:
        v, g = model.potential(x), model.gradient(x)
    else:
        g = model.gradient(x)
    dz[:, n:2 * n] = -g
    if lay.quad:
        dz[:, lay.m1] = np.sum(xi * xi, axis=1)
        dz[:, lay.m1 + 1] = v
    return dz


def _dop_step(model, lay, z, f, h):
    """One DOP853 step for every row; returns new state, new rhs and error norm."""
    B, d = z.shape
    K = np.empty((_NS + 1, B, d))
    K[0] = f
    hc = h[:, None]
    for s in range(1, _NS):
        dz = np.tensordot(_A[s, :s], K[:s], axes=(0, 0))
        K[s] = _rhs(model, lay, z + hc * dz)
    z_new = z + hc * np.tensordot(_B, K[:_NS], axes=(0, 0))
    f_new = _rhs(model, lay, z_new)
    K[_NS] = f_new
    return z_new, f_new, K


def _error_norm(K, h, scale):
    err5 = np.tensordot(_E5, K, axes=(0, 0)) / scale
    err3 = np.tensordot(_E3, K, axes=(0, 0)) / scale
    e5 = np.sum(err5**2, axis=1)
    e3 = np.sum(err3**2, axis=1)
    denom = e5 + 0.01 * e3
    d = scale.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(h) * e5 / np.sqrt(denom * d)
    return np.where(denom > 0, out, 0.0)


def _energy(model, n, z):
    return 0.5 * np.sum(z[:, n:2 * n] ** 2, axis=1) + model.potential(z[:, :n])


def _hermite_x(x0, v0, x1, v1, h, s):
    """Cubic Hermite position at fraction ``s`` of a step of length ``h``."""
    s = s[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    hh = h[:, None]
    return h00 * x0 + h10 * hh * v0 + h01 * x1 + h11 * hh * v1


def integrate_batch(
    model: PotentialModel,
    y0: np.ndarray,
    t_end: float | np.ndarray,
    *,
    t0: float | np.ndarray = 0.0,
    opts: FlowOptions | None = None,
    variational: bool = False,
    M0: np.ndarray | None = None,
    quadratures: bool = False,
    t_eval: np.ndarray | None = None,
    escape_radius: float | np.ndarray | None = None,
    capture: "CaptureSpec | None" = None,
    record: bool = False,
    raise_on_failure: bool = True,
) -> BatchResult:
    """Integrate a batch of phase points from ``t0`` to ``t_end``.

    Parameters
    ----------
    y0 : (B, 2n) array
        Initial points ``(x, xi)``.
    t_end, t0 : float or (B,) array
        Final and initial times; each member may run in its own direction.
    variational : bool
        Also integrate ``M`` starting from ``M0`` (identity by default).
    quadratures : bool
        Also integrate ``int |xi|**2 dt`` and ``int V dt``.
    t_eval : (K,) or (B, K) array, optional
        Output times, monotone in the direction of integration.  Steps are
        clipped to land on them exactly.
    escape_radius : float or (B,) array, optional
        Stop a member when ``|x|`` first exceeds this radius.
    capture : CaptureSpec, optional
        Stop a member when it is judged to converge to the fixed point.
    record : bool
        Keep every accepted step (returned per member in ``records``).
    """
    opts = opts or FlowOptions()
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    Bn, n2 = y0.shape
    n = n2 // 2
    if n != model.n:
        raise ValueError("phase point dimension does not match the model")
    lay = _Layout(n, variational, quadratures)
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (Bn,)).copy()
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (Bn,)).copy()
    if np.any(np.abs(t_end) > opts.horizon) or np.any(np.abs(t0) > opts.horizon):
        raise ValueError(f"|t| exceeds the configured horizon {opts.horizon}")
    direction = np.where(t_end >= t0, 1.0, -1.0)

    z = np.zeros((Bn, lay.size))
    z[:, :n2] = y0
    if variational:
        Mi = np.eye(2 * n) if M0 is None else np.asarray(M0, dtype=float)
        z[:, lay.m0:lay.m1] = np.broadcast_to(Mi, (Bn, 2 * n, 2 * n)).reshape(Bn, -1)

    if t_eval is not None:
        te = np.asarray(t_eval, dtype=float)
        te = np.broadcast_to(te, (Bn, te.shape[-1])).copy()
        K_out = te.shape[1]
        y_eval = np.full((Bn, K_out, n2), np.nan)
        M_eval = np.full((Bn, K_out, 2 * n, 2 * n), np.nan) if variational else None
        q_eval = np.full((Bn, K_out, 2), np.nan) if quadratures else None
        ptr = np.zeros(Bn, dtype=int)
        # outputs at t0 itself
        for b in range(Bn):
            while ptr[b] < K_out and te[b, ptr[b]] == t0[b]:
                _store(lay, z[b], y_eval, M_eval, q_eval, b, ptr[b])
                ptr[b] += 1
    else:
        te = None
        K_out = 0
        ptr = np.zeros(Bn, dtype=int)
        y_eval = M_eval = q_eval = None

    esc = None if escape_radius is None else np.broadcast_to(np.asarray(escape_radius, float), (Bn,))
    energy0 = _energy(model, n, z)
    e_scale = np.maximum(np.abs(energy0), np.maximum(abs(model.E0), 1e-12))
    drift_budget = 0.5 * opts.energy_drift_tol * e_scale
    status = np.array(["running"] * Bn, dtype=object)
    t = t0.copy()
    f = _rhs(model, lay, z)
    # initial step guess
    speed = np.linalg.norm(z[:, :n2], axis=1) + np.linalg.norm(f[:, :n2], axis=1)
    L = model.length_scale
    h = direction * np.minimum(np.abs(t_end - t0), 1e-2 * L / np.maximum(speed, 1e-3) + 1e-6)
    h = np.where(h == 0, direction * 1e-6, h)
    max_drift = np.zeros(Bn)
    max_defect = np.zeros(Bn) if variational else None
    min_norm = np.linalg.norm(z[:, :n2], axis=1)
    steps = np.zeros(Bn, dtype=int)
    rejected = np.zeros(Bn, dtype=int)
    active = t != t_end
    status[~active] = "done"
    rec = [] if record else None
    if record:
        rec.append((np.arange(Bn), t.copy(), z.copy()))
    J = symplectic_form(n)
    it = 0

    while np.any(active):
        it += 1
        if it > opts.max_steps:
            bad = np.flatnonzero(active)
            if raise_on_failure:
                raise IntegrationFailure("step budget exhausted", z[bad[0], :n2].copy(), t[bad[0]])
            status[bad] = "failed"
            break
        idx = np.flatnonzero(active)
        za, fa, ta, ha = z[idx], f[idx], t[idx], h[idx]
        dirn = direction[idx]
        # next stop: final time or next output time
        target = t_end[idx].copy()
        if te is not None:
            has = ptr[idx] < K_out
            nxt = np.where(has, te[idx, np.minimum(ptr[idx], K_out - 1)], target)
            target = np.where(dirn * (nxt - target) < 0, nxt, target)
        remaining = target - ta
        clip = np.abs(ha) >= np.abs(remaining) * (1 - 1e-12)
        hs = np.where(clip, remaining, ha)
        z_new, f_new, K = _dop_step(model, lay, za, fa, hs)
        scale = opts.atol + opts.rtol * np.maximum(np.abs(za), np.abs(z_new))
        err = _error_norm(K, hs, scale)
        e_new = _energy(model, n, z_new)
        drift = np.abs(e_new - energy0[idx])
        finite = np.all(np.isfinite(z_new), axis=1)
        ok = (err <= 1.0) & (drift <= drift_budget[idx]) & finite
        # step size control
        with np.errstate(divide="ignore"):
            fac = np.where(err == 0, _MAX_FACTOR,
                           np.clip(_SAFETY * err ** (-1.0 / 8.0), _MIN_FACTOR, _MAX_FACTOR))
        fac = np.where(ok, fac, np.minimum(fac, 0.5))
        fac = np.where(finite, fac, 0.1)
        h_next = hs * fac
        # when a clipped step was accepted keep the unclipped proposal
        h_next = np.where(ok & clip, np.sign(hs) * np.maximum(np.abs(ha), np.abs(h_next)), h_next)
        h_next = np.where(ok & clip & (np.abs(hs) < np.abs(ha)), ha, h_next)
        tiny = np.abs(h_next) < opts.min_step * np.maximum(1.0, np.abs(ta))
        if np.any(tiny & ~ok):
            bad = idx[tiny & ~ok]
            if raise_on_failure:
                raise IntegrationFailure("step size underflow", z[bad[0], :n2].copy(), t[bad[0]])
            status[bad] = "failed"
            active[bad] = False
        h[idx] = np.where(h_next == 0, hs, h_next)
        rejected[idx[~ok]] += 1
        if not np.any(ok):
            continue

        acc = idx[ok]
        z_old = za[ok]
        f_old = fa[ok]
        hs_ok = hs[ok]
        t_new = np.where(clip[ok], target[ok], ta[ok] + hs_ok)
        zn = z_new[ok]
        fn = f_new[ok]

        # escape events: refine crossing time and redo the partial step
        if esc is not None:
            r_new = np.linalg.norm(zn[:, :n], axis=1)
            r_old = np.linalg.norm(z_old[:, :n], axis=1)
            R = esc[acc]
            cross = (r_new >= R) & (r_old < R)
            if np.any(cross):
                ci = np.flatnonzero(cross)
                lo = np.zeros(ci.size)
                hi = np.ones(ci.size)
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    xm = _hermite_x(z_old[ci, :n], f_old[ci, :n], zn[ci, :n], fn[ci, :n], hs_ok[ci], mid)
                    out = np.linalg.norm(xm, axis=1) >= R[ci]
                    hi = np.where(out, mid, hi)
                    lo = np.where(out, lo, mid)
                hp = hs_ok[ci] * hi
                zp, fp, _ = _dop_step(model, lay, z_old[ci], f_old[ci], hp)
                zn[ci] = zp
                fn[ci] = fp
                t_new[ci] = ta[ok][ci] + hp
                status[acc[ci]] = "escaped"

        z[acc] = zn
        f[acc] = fn
        t[acc] = t_new
        steps[acc] += 1
        max_drift[acc] = np.maximum(max_drift[acc], np.abs(_energy(model, n, zn) - energy0[acc]) / e_scale[acc])
        nrm = np.linalg.norm(zn[:, :n2], axis=1)
        min_norm[acc] = np.minimum(min_norm[acc], nrm)
        if variational:
            M = zn[:, lay.m0:lay.m1].reshape(-1, 2 * n, 2 * n)
            D = np.swapaxes(M, 1, 2) @ J @ M - J
            max_defect[acc] = np.maximum(max_defect[acc], np.max(np.abs(D), axis=(1, 2)))
        if record:
            rec.append((acc.copy(), t_new.copy(), zn.copy()))

        # outputs
        if te is not None:
            for j, b in enumerate(acc):
                while ptr[b] < K_out and direction[b] * (te[b, ptr[b]] - t[b]) <= 0:
                    if te[b, ptr[b]] == t[b]:
                        _store(lay, zn[j], y_eval, M_eval, q_eval, b, ptr[b])
                    ptr[b] += 1

        # capture
        if capture is not None:
            cap = capture.test(model, zn[:, :n2], fn[:, :n2])
            cap &= status[acc] == "running"
            status[acc[cap]] = "captured"

        finished = (t[acc] == t_end[acc]) | (status[acc] != "running")
        done_idx = acc[finished]
        status[done_idx] = np.where(status[done_idx] == "running", "done", status[done_idx])
        active[done_idx] = False

    res = BatchResult(
        t=t, y=z[:, :n2].copy(), status=status.astype(str),
        M=z[:, lay.m0:lay.m1].reshape(Bn, 2 * n, 2 * n).copy() if variational else None,
        q=z[:, lay.m1:].copy() if quadratures else None,
        t_eval=te, y_eval=y_eval, M_eval=M_eval, q_eval=q_eval,
        energy0=energy0, max_drift=max_drift, max_defect=max_defect, min_norm=min_norm,
        steps=steps, rejected=rejected,
    )
    if record:
        ids = np.concatenate([r[0] for r in rec])
        ts = np.concatenate([r[1] for r in rec])
        zs = np.concatenate([r[2] for r in rec])
        order = np.argsort(ids, kind="stable")
        ids, ts, zs = ids[order], ts[order], zs[order]
        bounds = np.searchsorted(ids, np.arange(Bn + 1))
        res.records = []
        for b in range(Bn):
            sl = slice(bounds[b], bounds[b + 1])
            zz = zs[sl]
            res.records.append({
                "t": ts[sl],
                "y": zz[:, :n2],
                "M": zz[:, lay.m0:lay.m1].reshape(-1, 2 * n, 2 * n) if variational else None,
                "q": zz[:, lay.m1:] if quadratures else None,
            })
    return res


def _store(lay, zrow, y_eval, M_eval, q_eval, b, k):
    n2 = 2 * lay.n
    y_eval[b, k] = zrow[:n2]
    if M_eval is not None:
        M_eval[b, k] = zrow[lay.m0:lay.m1].reshape(n2, n2)
    if q_eval is not None:
        q_eval[b, k] = zrow[lay.m1:]


@dataclass(frozen=True)
class CaptureSpec:
    """Criterion for convergence to the fixed point ``(0, 0)``.

    A member is captured when ``||(x, xi)|| < threshold`` while the norm is
    decreasing.  Inside the linear zone ``||(x, xi)|| < linear_radius`` the
    closest approach predicted by the linearized flow is also used: with
    unstable coordinates ``a`` the predicted minimum is of order
    ``sqrt(|a| ||(x, xi)||)``, so ``|a| ||(x, xi)|| < threshold**2`` counts as
    capture.  This keeps the criterion meaningful when round-off pushes an
    exactly captured orbit off the stable manifold before it gets closer than
    ``threshold``.
    """

    threshold: float = 1e-6
    linear_radius: float = 1e-2
    lambdas: tuple[float, ...] = ()
    axes: tuple[tuple[float, ...], ...] | None = None

    @classmethod
    def for_model(cls, model: PotentialModel, threshold: float = 1e-6, linear_radius: float | None = None) -> "CaptureSpec":
        from .potentials import linearization

        lin = linearization(model)
        L = model.length_scale
        return cls(threshold * L, (linear_radius if linear_radius is not None else 1e-2) * L,
                   tuple(lin.lambdas), tuple(map(tuple, lin.axes)))

    def test(self, model: PotentialModel, y: np.ndarray, f: np.ndarray) -> np.ndarray:
        n = y.shape[1] // 2
        nrm = np.linalg.norm(y, axis=1)
        decreasing = np.sum(y * f, axis=1) < 0
        cap = (nrm < self.threshold) & decreasing
        if self.lambdas:
            U = np.asarray(self.axes)
            lam = np.asarray(self.lambdas)
            px = y[:, :n] @ U
            pxi = y[:, n:] @ U
            a = np.linalg.norm(0.5 * (pxi + lam * px), axis=1)
            near = nrm < self.linear_radius
            cap |= near & decreasing & (a * nrm < self.threshold**2)
        return cap


# ---------------------------------------------------------------------------
# single-trajectory API
# ---------------------------------------------------------------------------


def flow(model: PotentialModel, point: PhasePoint, t: float, opts: FlowOptions | None = None) -> PhasePoint:
    """``exp(t H_p)(point)``."""
    if t == 0:
        return PhasePoint(point.x, point.xi)
    res = integrate_batch(model, point.as_array()[None], t, opts=opts)
    return PhasePoint.from_array(res.y[0])


def flow_with_variational(model: PotentialModel, point: PhasePoint, t: float,
                          opts: FlowOptions | None = None) -> tuple[PhasePoint, np.ndarray]:
    """Flow together with ``M = d exp(t H_p)`` at ``point``."""
    if t == 0:
        return PhasePoint(point.x, point.xi), np.eye(2 * point.n)
    res = integrate_batch(model, point.as_array()[None], t, opts=opts, variational=True)
    return PhasePoint.from_array(res.y[0]), res.M[0]


@dataclass
class TrajectorySegment:
    """Sampled trajectory with optional variational matrices."""

    t: np.ndarray
    y: np.ndarray
    energy: float
    M: np.ndarray | None = None
    q: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.shape[1] // 2

    @property
    def x(self) -> np.ndarray:
        return self.y[:, :self.n]

    @property
    def xi(self) -> np.ndarray:
        return self.y[:, self.n:]

    def points(self) -> list[PhasePoint]:
        return [PhasePoint.from_array(r) for r in self.y]

    def energies(self, model: PotentialModel) -> np.ndarray:
        return model.energy(self.x, self.xi)

    def check_invariants(self, model: PotentialModel, opts: FlowOptions | None = None) -> dict:
        opts = opts or FlowOptions()
        drift = float(np.max(np.abs(self.energies(model) - self.energy)) / max(abs(self.energy), 1e-300))
        out = {"energy_drift": drift, "energy_ok": drift <= opts.energy_drift_tol}
        if self.M is not None:
            d = float(np.max(symplectic_defect(self.M)))
            out.update(symplectic_defect=d, symplectic_ok=d <= opts.symplectic_tol)
        return out

    def write_csv(self, path: str | Path, model: PotentialModel, opts: FlowOptions | None = None) -> None:
        """Write ``t, x1..xn, xi1..xin, energy`` plus a JSON sidecar."""
        from .io import atomic_write_text

        n = self.n
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"xi{i + 1}" for i in range(n)] + ["energy"]
        en = self.energies(model)
        lines = [",".join(header)]
        for k in range(len(self.t)):
            row = [self.t[k], *self.y[k], en[k]]
            lines.append(",".join(repr(float(v)) for v in row))
        atomic_write_text(path, "\n".join(lines) + "\n")
        side = {"model_hash": model.config_hash(), "model": model.to_config(),
                "tolerances": asdict(opts or FlowOptions()),
                "integrator": "DOP853 (batched, energy-guarded)", **self.meta}
        atomic_write_text(Path(str(path) + ".json"), json.dumps(side, indent=2, sort_keys=True) + "\n")


def read_trajectory_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def trajectory(model: PotentialModel, point: PhasePoint, t_samples: Sequence[float],
               opts: FlowOptions | None = None, variational: bool = False) -> TrajectorySegment:
    """Sample the orbit of ``point`` at times ``t_samples`` (monotone, starting anywhere)."""
    ts = np.asarray(t_samples, dtype=float)
    if ts.size == 0:
        raise ValueError("need at least one sample time")
    mono = np.all(np.diff(ts) >= 0) or np.all(np.diff(ts) <= 0)
    if not mono:
        raise ValueError("sample times must be monotone")
    y0 = point.as_array()[None]
    # integrate from 0 to the last sample; samples on the other side of 0 are
    # obtained in a second pass
    out_y = np.empty((ts.size, 2 * point.n))
    out_M = np.empty((ts.size, 2 * point.n, 2 * point.n)) if variational else None
    for sgn in (1.0, -1.0):
        sel = np.flatnonzero(sgn * ts >= 0) if sgn > 0 else np.flatnonzero(ts < 0)
        if sel.size == 0:
            continue
        order = sel[np.argsort(sgn * ts[sel])]
        res = integrate_batch(model, y0, ts[order][-1], opts=opts, variational=variational,
                              t_eval=ts[order])
        out_y[order] = res.y_eval[0]
        if variational:
            out_M[order] = res.M_eval[0]
    E = float(model.energy(point.x, point.xi))
    return TrajectorySegment(ts, out_y, E, out_M, meta={"opts": asdict(opts or FlowOptions())})


# ---------------------------------------------------------------------------
# escape classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EscapeOutcome:
    kind: str  # "escaped", "converged" or "undecided"
    t: float


def escape_time_batch(model: PotentialModel, y0: np.ndarray, R: float, T_max: float,
                      opts: FlowOptions | None = None, capture: CaptureSpec | None = None) -> list[EscapeOutcome]:
    """Classify each initial point by escape through ``|x| = R`` within ``T_max``.

    ``T_max`` may be negative for backward time.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    y0 = np.atleast_2d(y0)
    if capture is None and model.lambdas and model.E0 > 0:
        try:
            capture = CaptureSpec.for_model(model)
        except Exception:  # no non-degenerate maximum: no capture test
            capture = None
    res = integrate_batch(model, y0, T_max, opts=opts, escape_radius=R, capture=capture,
                          raise_on_failure=False)
    out = []
    for s, t in zip(res.status, res.t):
        if s == "escaped":
            out.append(EscapeOutcome("escaped", float(t)))
        elif s == "captured":
            out.append(EscapeOutcome("converged", float(t)))
        else:
            out.append(EscapeOutcome("undecided", float(t)))
    # points starting outside the ball are already escaped
    r0 = np.linalg.norm(y0[:, :model.n], axis=1)
    return [EscapeOutcome("escaped", 0.0) if r > R else o for o, r in zip(out, r0)]


def escape_time(model: PotentialModel, point: PhasePoint, R: float, T_max: float,
                opts: FlowOptions | None = None, capture: CaptureSpec | None = None) -> EscapeOutcome:
    """Escaped / converged / undecided classification of a single point."""
    return escape_time_batch(model, point.as_array()[None], R, T_max, opts, capture)[0]


# ---------------------------------------------------------------------------
# fixed-step symplectic integrator
# ---------------------------------------------------------------------------

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1
_YOSHIDA = (_W1, _W0, _W1)


def symplectic_flow(model: PotentialModel, y0: np.ndarray, t: float, dt: float) -> np.ndarray:
    """Fourth-order Yoshida composition of leapfrog; ``y0`` may be batched.

    Intended for long manifold runs where bounded energy error matters more
    than local accuracy.
    """
    y = np.atleast_2d(np.asarray(y0, dtype=float)).copy()
    n = model.n
    steps = max(1, int(np.ceil(abs(t) / dt)))
    h = t / steps
    x, xi = y[:, :n], y[:, n:]
    for _ in range(steps):
        for w in _YOSHIDA:
            xi = xi - 0.5 * w * h * model.gradient(x)
            x = x + w * h * xi
            xi = xi - 0.5 * w * h * model.gradient(x)
    return np.concatenate([x, xi], axis=1)
