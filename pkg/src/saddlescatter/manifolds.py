"""Stable and unstable Lagrangian manifolds of the barrier top.

``Lambda_+`` (``side = "+"``) consists of the energy-``E0`` orbits that leave
the fixed point ``(0, 0)``; ``Lambda_-`` of those that converge to it.  Both
are sampled by seeding on the linearized subspaces ``xi = +/- lambda x`` at a
small radius, projecting the seeds onto the energy shell and flowing them
away from the origin.  Tangent frames are transported with the variational
flow, so they stay exactly Lagrangian up to integration error.

Below the seed radius the orbit is continued by the linearized flow.  This
continuation supplies the leading coefficients ``g`` of
``x(t) ~ g exp(+/- lambda_1 t)`` and the near-origin tail of action
integrals in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .asymptotics import AsymptoticOptions, fit_asymptote, perp_basis, _free_line_integral
from .errors import AssumptionViolation, NotFoundError, PrecisionError, ProjectionError
from .flow import FlowOptions, integrate_batch, symplectic_form
from .potentials import PotentialModel, linearization

logger = logging.getLogger(__name__)


def _sign(side: str) -> float:
    if side not in ("+", "-"):
        raise ValueError("side must be '+' (unstable) or '-' (stable)")
    return 1.0 if side == "+" else -1.0


def linearized_splitting(model: PotentialModel) -> tuple[np.ndarray, np.ndarray]:
    """Unstable and stable subspaces of the linearized field, as ``(2n, n)`` column frames.

    Column ``j`` is ``(e_j, +/- lambda_j e_j)`` with ``e_j`` the ``j``-th
    principal axis in lab coordinates.
    """
    lin = linearization(model)
    U = lin.axes
    unstable = np.vstack([U, U * lin.lambdas])
    stable = np.vstack([U, -U * lin.lambdas])
    return unstable, stable


@dataclass(frozen=True)
class ManifoldOptions:
    """Sampling options; ``eps`` and ``R_patch`` are in units of ``model.length_scale``."""

    eps: float = 1e-3
    n_seeds: int = 64
    n_times: int = 41
    R_patch: float = 4.0
    g_window: tuple[float, float] = (1e-7, 1e-4)
    rate_tol: float = 1e-2
    lagrangian_tol: float = 1e-6
    flow: FlowOptions = field(default_factory=FlowOptions)


def sphere_points(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in ``R^n``."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        a = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(a), np.sin(a)])
    if n == 3:
        k = np.arange(count) + 0.5
        zc = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        r = np.sqrt(1 - zc**2)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), zc])
    from scipy.stats import qmc

    pts = qmc.Sobol(n, scramble=True, seed=0).random(count)
    g = np.sqrt(2) * __import__("scipy.special", fromlist=["erfinv"]).erfinv(2 * pts - 1)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class _Seeder:
    """Seeds on the linearized subspace, projected onto ``p = E0``.

    A seed direction ``u`` (unit vector, principal coordinates) is mapped to
    ``y = L exp(-Lambda s0) u`` with ``s0 = log(L / eps) / lambda_1``: the
    backward linear flow, for a common time ``s0``, of the sphere of radius
    ``L``.  Every seed therefore reaches the scale of the potential after the
    same flow time, which spreads the outgoing orbits evenly even for strongly
    anisotropic curvatures.  The seed radius is ``eps`` along the slowest
    axis and smaller along the others.
    """

    def __init__(self, model: PotentialModel, side: str, eps: float):
        self.model = model
        self.s = _sign(side)
        lin = linearization(model)
        self.lam = lin.lambdas
        self.U = lin.axes
        self.eps = eps
        self.n = model.n
        self.L = model.length_scale
        self.s0 = np.log(self.L / eps) / self.lam[0]
        self.shrink = self.L * np.exp(-self.lam * self.s0)

    def base(self, phi: np.ndarray) -> np.ndarray:
        y = self.shrink * phi
        return np.concatenate([y @ self.U.T, self.s * (self.lam * y) @ self.U.T], axis=-1)

    def y_seed(self, phi: np.ndarray, c: np.ndarray | None = None) -> np.ndarray:
        """Seed positions in principal coordinates (independent of the momentum factor)."""
        return self.shrink * np.atleast_2d(phi)

    def scale(self, P: np.ndarray) -> np.ndarray:
        """Momentum factor ``c`` with ``p(x, c xi) = E0``.

        Only the momentum is rescaled: scaling the whole point would move it
        along the (nearly radial) flow and leave the energy almost unchanged.
        """
        n = self.n
        x, xi = P[:, :n], P[:, n:]
        k2 = np.sum(xi * xi, axis=1)
        kin = 2.0 * (self.model.E0 - self.model.potential(x))
        if np.any(kin <= 0) or np.any(k2 <= 0):
            raise AssumptionViolation("seed cannot be projected onto the energy shell")
        return np.sqrt(kin / k2)

    def seeds(self, phi: np.ndarray, tangents: np.ndarray | None = None):
        """Seeds ``(S, 2n)``, momentum factors and seed tangents ``(S, 2n, k)``.

        ``tangents`` are directions ``(S, n, k)`` in the ``phi`` space; the
        seed tangent is the derivative of the projected seed along them.
        """
        phi = np.atleast_2d(phi)
        n = self.n
        P = self.base(phi)
        c = self.scale(P)
        seeds = P.copy()
        seeds[:, n:] *= c[:, None]
        if tangents is None:
            return seeds, c, None
        x, xib = P[:, :n], P[:, n:]
        gV = self.model.gradient(x)
        dP = np.stack([self.base(tangents[:, :, k]) for k in range(tangents.shape[2])], axis=2)
        dx, dxi = dP[:, :n, :], dP[:, n:, :]
        k2 = np.sum(xib * xib, axis=1)
        num = np.einsum("si,sik->sk", gV, dx) + (c**2)[:, None] * np.einsum("si,sik->sk", xib, dxi)
        dc = -num / (c * k2)[:, None]
        dseed = np.concatenate([dx, c[:, None, None] * dxi + xib[:, :, None] * dc[:, None, :]], axis=1)
        return seeds, c, dseed


@dataclass
class ManifoldPatch:
    """Sampled ``Lambda_+`` or ``Lambda_-``.

    Arrays are indexed ``[seed, time]``; ``valid`` marks samples inside the
    patch radius.  ``times`` are non-negative flow times away from the seed
    (forward for ``Lambda_+``, backward for ``Lambda_-``).
    """

    side: str
    eps: float
    phi: np.ndarray          # (S, n) seed directions, principal coordinates
    scale: np.ndarray        # (S,) energy projection factors
    yseed: np.ndarray        # (S, n) seed positions in principal coordinates
    seeds: np.ndarray        # (S, 2n)
    dseeds: np.ndarray       # (S, 2n, n-1)
    times: np.ndarray        # (S, K)
    points: np.ndarray       # (S, K, 2n)
    frames: np.ndarray       # (S, K, 2n, n)
    quad: np.ndarray         # (S, K, 2) int |xi|^2, int V from the seed
    valid: np.ndarray        # (S, K)
    lambdas: np.ndarray
    axes: np.ndarray
    E0: float
    R_patch: float
    length_scale: float = 1.0
    model_hash: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.seeds.shape[1] // 2

    def flat(self):
        """Valid samples as flat arrays ``(points, frames, seed index, time index)``."""
        si, ki = np.nonzero(self.valid)
        return self.points[si, ki], self.frames[si, ki], si, ki

    def g_vectors(self) -> np.ndarray:
        """``g`` for every sample, shape ``(S, K, n)``."""
        return np.stack([[g_vector(self, s, k).g for k in range(self.times.shape[1])]
                         for s in range(len(self.seeds))])

    def lagrangian_defect(self) -> float:
        """Largest ``|omega(v_i, v_j)|`` over frame pairs, relative to ``|v_i| |v_j|``."""
        pts, F, _, _ = self.flat()
        J = symplectic_form(self.n)
        W = np.swapaxes(F, 1, 2) @ J @ F
        nrm = np.linalg.norm(F, axis=1)
        rel = np.abs(W) / (nrm[:, :, None] * nrm[:, None, :])
        return float(np.max(rel)) if rel.size else 0.0

    def energy_defect(self) -> float:
        return float(self.diagnostics.get("energy_defect", np.nan))

    def to_dict(self, include_frames: bool = True) -> dict:
        pts, F, si, ki = self.flat()
        g = np.array([g_vector(self, s, k).g for s, k in zip(si, ki)]) if len(si) else np.zeros((0, self.n))
        d = {"side": self.side, "eps": self.eps, "E0": self.E0, "R_patch": self.R_patch,
             "lambdas": self.lambdas, "axes": self.axes, "model_hash": self.model_hash,
             "samples": [{"seed": int(s), "time": float(self.times[s, k]), "x": pts[j, :self.n],
                          "xi": pts[j, self.n:], "g": g[j],
                          **({"frame": F[j]} if include_frames else {})}
                         for j, (s, k) in enumerate(zip(si, ki))],
             "diagnostics": self.diagnostics}
        return d

    def csv_rows(self) -> tuple[list[str], list[list[float]]]:
        n = self.n
        pts, _, si, ki = self.flat()
        header = (["seed", "time"] + [f"x{i + 1}" for i in range(n)] + [f"xi{i + 1}" for i in range(n)]
                  + [f"g{i + 1}" for i in range(n)])
        rows = []
        for j, (s, k) in enumerate(zip(si, ki)):
            g = g_vector(self, s, k).g
            rows.append([int(s), float(self.times[s, k]), *pts[j], *g])
        return header, rows


def _seed_tangents(phi: np.ndarray) -> np.ndarray:
    return np.stack([perp_basis(p) for p in phi])  # (S, n, n-1)


def sample_manifold(model: PotentialModel, side: str, eps: float | None = None,
                    resolution: int | None = None, opts: ManifoldOptions | None = None,
                    phi: np.ndarray | None = None, t_max: float | None = None) -> ManifoldPatch:
    """Sample ``Lambda_+`` (side ``"+"``) or ``Lambda_-`` (side ``"-"``).

    Parameters
    ----------
    eps : float, optional
        Seed radius in length-scale units (default ``opts.eps``).
    resolution : int, optional
        Number of seed directions (default ``opts.n_seeds``).
    phi : (S, n) array, optional
        Explicit seed directions in principal coordinates.
    t_max : float, optional
        Flow time per seed; by default long enough to reach ``R_patch``.
    """
    opts = opts or ManifoldOptions()
    s = _sign(side)
    L = model.length_scale
    eps_abs = (opts.eps if eps is None else eps) * L
    seeder = _Seeder(model, side, eps_abs)
    n = model.n
    if phi is None:
        phi = sphere_points(n, resolution or opts.n_seeds)
    phi = np.atleast_2d(phi) / np.linalg.norm(np.atleast_2d(phi), axis=1, keepdims=True)
    T = _seed_tangents(phi) if n > 1 else np.zeros((len(phi), 1, 0))
    seeds, c, dseeds = seeder.seeds(phi, T)
    lam1 = seeder.lam[0]
    R_patch = opts.R_patch * L
    if t_max is None:
        t_max = seeder.s0 + (np.log(opts.R_patch) + 3.0) / lam1
    K = opts.n_times
    te = s * np.linspace(0.0, t_max, K)
    res = integrate_batch(model, seeds, s * t_max, opts=opts.flow, variational=True,
                          quadratures=True, t_eval=te, escape_radius=R_patch,
                          raise_on_failure=False)
    pts = res.y_eval
    valid = np.all(np.isfinite(pts), axis=2)
    M = res.M_eval  # (S, K, 2n, 2n)
    hp = np.concatenate([pts[..., n:], -model.gradient(np.nan_to_num(pts[..., :n]))], axis=-1)
    tang = np.einsum("skij,sjm->skim", M, dseeds)
    frames = np.concatenate([hp[..., None], tang], axis=-1)
    energy_defect = np.nanmax(np.abs(model.energy(pts[..., :n], pts[..., n:]) - model.E0)) / model.E0
    patch = ManifoldPatch(side, eps_abs, phi, c, seeder.y_seed(phi, c), seeds, dseeds, np.broadcast_to(np.abs(te), valid.shape).copy(),
                          pts, frames, res.q_eval, valid, seeder.lam, seeder.U, model.E0, R_patch,
                          L, model.config_hash(),
                          {"energy_defect": float(energy_defect),
                           "max_energy_drift": float(np.max(res.max_drift))})
    patch.diagnostics["lagrangian_defect"] = patch.lagrangian_defect()
    if patch.diagnostics["lagrangian_defect"] > opts.lagrangian_tol:
        logger.warning("Lagrangian defect %.3g exceeds tolerance", patch.diagnostics["lagrangian_defect"])
    return patch


# ---------------------------------------------------------------------------
# leading coefficients g and their pairing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GVector:
    g: np.ndarray
    rate: float
    residual: float
    low_confidence: bool


def _linear_history(patch: ManifoldPatch, s: int, tau: float, t: np.ndarray) -> np.ndarray:
    """Positions of the linearized continuation below the seed, ``|t|`` from the sample."""
    y = patch.yseed[s]
    lam = patch.lambdas
    # t is measured from the sample towards the origin (t >= 0)
    return (y[None, :] * np.exp(-lam[None, :] * (t[:, None] - tau))) @ patch.axes.T


def g_vector(patch: ManifoldPatch, seed: int, k: int, window: tuple[float, float] = (1e-7, 1e-4),
             rate_tol: float = 1e-2) -> GVector:
    """Leading coefficient ``g`` for sample ``(seed, k)`` of a patch.

    ``x(t) ~ g exp(lambda_1 t)`` as ``t -> -inf`` on ``Lambda_+``
    (``exp(-lambda_1 t)``, ``t -> +inf`` on ``Lambda_-``), with time measured
    from the sample.  The coefficient is read off the linearized continuation
    below the seed: ``g = exp(lambda_1 tau) P_1 y_seed``, where ``P_1`` projects
    on the ``lambda_1`` eigenspace.  A log-linear regression of ``|x|`` over
    the window ``|x| in window * length`` checks that the decay rate really is
    ``lambda_1``; otherwise the result is flagged low confidence.
    """
    tau = float(patch.times[seed, k])
    lam = patch.lambdas
    lam1 = lam[0]
    y = patch.yseed[seed]
    lead = np.abs(lam - lam1) <= 1e-9 * lam1
    g = np.exp(lam1 * tau) * (patch.axes[:, lead] @ y[lead])
    # regression on the reconstructed history
    L = patch.length_scale
    lo, hi = window[0] * L, window[1] * L
    ts = np.linspace(0.0, 40.0 / lam1, 4000) + tau
    xs = _linear_history(patch, seed, tau, ts)
    r = np.linalg.norm(xs, axis=1)
    sel = (r >= lo) & (r <= hi)
    if np.count_nonzero(sel) >= 3:
        A = np.column_stack([ts[sel], np.ones(np.count_nonzero(sel))])
        coef, res, *_ = np.linalg.lstsq(A, np.log(r[sel]), rcond=None)
        rate = -coef[0]
        resid = float(np.sqrt(res[0] / np.count_nonzero(sel))) if res.size else 0.0
    else:
        rate, resid = np.nan, np.nan
    low = not np.isfinite(rate) or abs(rate - lam1) > rate_tol * lam1
    return GVector(g, float(rate), resid, bool(low))


def pairing(g_plus: np.ndarray, g_minus: np.ndarray, pairing_tol: float = 1e-4) -> tuple[float, bool]:
    """``<g+, g->`` and membership ``|<g+, g->| > pairing_tol |g+| |g-|``."""
    g_plus = np.asarray(g_plus, float)
    g_minus = np.asarray(g_minus, float)
    val = float(g_plus @ g_minus)
    scale = np.linalg.norm(g_plus) * np.linalg.norm(g_minus)
    return val, bool(scale > 0 and abs(val) > pairing_tol * scale)


# ---------------------------------------------------------------------------
# half-trajectory actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifoldPoint:
    """Point of a patch over ``z`` with its action and generating data."""

    z: np.ndarray
    xi: np.ndarray
    action: float
    phi: np.ndarray
    tau: float
    jacobian_cond: float


def _tail_action(lam: np.ndarray, y: np.ndarray) -> float:
    """``int |xi|^2 dt`` of the linearized orbit from the origin to ``(y, lambda y)``."""
    return float(0.5 * np.sum(lam * y * y))


def _orbit_from(model, seeder, phi, tau, sgn, flow_opts, want_jac=True):
    n = model.n
    T = perp_basis(phi)[None] if n > 1 else np.zeros((1, 1, 0))
    seeds, c, dseed = seeder.seeds(phi[None], T)
    if tau == 0:
        M = np.eye(2 * n)[None]
        y = seeds
        q = np.zeros((1, 2))
    else:
        res = integrate_batch(model, seeds, sgn * tau, opts=flow_opts, variational=want_jac, quadratures=True)
        y, q = res.y, res.q
        M = res.M if want_jac else None
    return y[0], q[0], c[0], (None if M is None else M[0] @ dseed[0]), T[0]


def manifold_action(model: PotentialModel, patch: ManifoldPatch, z: np.ndarray,
                    opts: ManifoldOptions | None = None, tol: float = 1e-12,
                    max_iter: int = 40, accept_tol: float = 1e-8) -> ManifoldPoint:
    """``S_+/-(z)``: action of the half-trajectory on the patch through ``x = z``.

    ``S(z) = int (|xi|^2/2 + E0 - V) dt`` from the fixed point to ``z`` (for
    ``Lambda_+``) or from ``z`` to the fixed point (``Lambda_-``), so that
    ``grad S_+(z) = xi_+(z)`` and ``grad S_-(z) = -xi_-(z)``.  The orbit through
    ``z`` is located by Newton iteration on the seed direction and the flow
    time, started from the nearest patch sample.

    Iteration stops at ``tol``; when the residual stops decreasing (the flow
    tolerance limits the attainable accuracy) the best iterate is accepted if
    it is within ``accept_tol``.

    Raises
    ------
    ProjectionError
        If the projection to ``x`` is singular at the solution (caustic).
    NotFoundError
        If Newton iteration fails.
    """
    opts = opts or ManifoldOptions()
    z = np.asarray(z, dtype=float)
    n = model.n
    sgn = _sign(patch.side)
    lam = patch.lambdas
    U = patch.axes
    seeder = _Seeder(model, patch.side, patch.eps)
    # inside the seed radius the linearized graph is used directly
    yz = U.T @ z
    if np.linalg.norm(yz) <= 1e-3 * patch.eps:
        xi = sgn * U @ (lam * yz)
        return ManifoldPoint(z, xi, _tail_action(lam, yz), yz / max(np.linalg.norm(yz), 1e-300), 0.0, 1.0)

    pts, _, si, ki = patch.flat()
    j = int(np.argmin(np.linalg.norm(pts[:, :n] - z, axis=1)))
    phi = patch.phi[si[j]].copy()
    tau = float(patch.times[si[j], ki[j]])
    scale = max(1.0, np.linalg.norm(z))
    best = None
    stall = 0
    for it in range(max_iter):
        y, q, c, dx_dphi, T = _orbit_from(model, seeder, phi, tau, sgn, opts.flow)
        resid = z - y[:n]
        Jm = np.column_stack([dx_dphi[:n, :], sgn * y[n:]]) if n > 1 else (sgn * y[n:])[:, None]
        sv = np.linalg.svd(Jm, compute_uv=False)
        cond = sv[0] / max(sv[-1], 1e-300)
        rn = float(np.linalg.norm(resid))
        if best is None or rn < 0.5 * best[0]:
            stall = 0
        else:
            stall += 1
        if best is None or rn < best[0]:
            best = (rn, y, q, c, phi.copy(), tau, cond)
        if rn <= tol * scale:
            break
        # the flow tolerance sets a noise floor; accept the best iterate once progress stalls
        if stall >= 3 and best[0] <= accept_tol * scale:
            rn, y, q, c, phi, tau, cond = best
            break
        if cond > 1e10:
            raise ProjectionError(f"projection to x is singular near z={z} (cond {cond:.3g})")
        du = np.linalg.solve(Jm, resid)
        # damp large steps in the seed direction
        step = np.linalg.norm(du[:-1]) if n > 1 else 0.0
        damp = min(1.0, 0.5 / step) if step > 0 else 1.0
        if n > 1:
            phi = phi + T @ (damp * du[:-1])
            phi /= np.linalg.norm(phi)
        tau = tau + damp * du[-1]
        if tau < 0:
            tau = 0.0
    else:
        if best is not None and best[0] <= accept_tol * scale:
            rn, y, q, c, phi, tau, cond = best
        else:
            raise NotFoundError(f"Newton iteration for the orbit through z={z} did not converge")
    if cond > 1e10:
        raise ProjectionError(f"caustic at z={z}")
    ys = seeder.y_seed(phi, c)[0]
    q0, q1 = q
    body = sgn * (0.5 * q0 - q1) + model.E0 * tau
    S = body + _tail_action(lam, ys)
    return ManifoldPoint(z, y[n:].copy(), float(S), phi, float(tau), float(cond))


# ---------------------------------------------------------------------------
# spherical traces and critical actions
# ---------------------------------------------------------------------------


@dataclass
class TraceOrbits:
    """Asymptotic data of the orbits generated by a set of seed directions."""

    side: str
    phi: np.ndarray          # (S, n)
    direction: np.ndarray    # (S, n) theta for Lambda_+, omega for Lambda_-
    Z: np.ndarray            # (S, n)
    action: np.ndarray       # (S,) critical actions
    status: np.ndarray
    residual: np.ndarray
    E0: float

    @property
    def cotangent(self) -> np.ndarray:
        return -np.sqrt(2 * self.E0) * self.Z


def trace_orbits(model: PotentialModel, side: str, phi: np.ndarray, eps: float = 1e-5,
                 aopts: AsymptoticOptions | None = None) -> TraceOrbits:
    """Follow manifold orbits to infinity and record direction, impact parameter and action.

    The action is ``int (|xi|^2 - 2 E0 1_{+/- t > 0}) dt`` with the time
    origin fixed by the asymptote ``x(t) ~ xi_inf t + Z``, ``Z . xi_inf = 0``.
    """
    aopts = aopts or AsymptoticOptions()
    sgn = _sign(side)
    L = model.length_scale
    seeder = _Seeder(model, side, eps * L)
    phi = np.atleast_2d(phi)
    phi = phi / np.linalg.norm(phi, axis=1, keepdims=True)
    seeds, c, _ = seeder.seeds(phi)
    S = len(seeds)
    n = model.n
    E0 = model.E0
    speed = np.sqrt(2 * E0)
    R_fit = aopts.R_fit * L
    t_hor = (np.log(R_fit / (eps * L)) + 5.0) / seeder.lam[0] + 4.0 * R_fit / speed
    res1 = integrate_batch(model, seeds, sgn * t_hor, opts=aopts.flow, quadratures=True,
                           escape_radius=R_fit, raise_on_failure=False)
    direction = np.full((S, n), np.nan)
    Z = np.full((S, n), np.nan)
    act = np.full(S, np.nan)
    resid = np.full(S, np.nan)
    status = np.where(res1.status == "escaped", "ok", "failed").astype(object)
    ok = np.flatnonzero(status == "ok")
    if ok.size:
        T1 = res1.t[ok]
        T2 = aopts.window_factor * T1
        te = np.linspace(T1, T2, aopts.n_fit, axis=1)
        res2 = integrate_batch(model, res1.y[ok], T2, t0=T1, opts=aopts.flow, quadratures=True,
                               t_eval=te, raise_on_failure=False)
        for j, b in enumerate(ok):
            slope, icpt, r = fit_asymptote(te[j], res2.y_eval[j, :, :n], model.rho)
            xi_inf = slope
            u0 = -(icpt @ xi_inf) / (xi_inf @ xi_inf)
            Zb = icpt + u0 * xi_inf
            q0 = sgn * (res1.q[b, 0] + res2.q[j, 0])  # positive duration integral of |xi|^2
            y = seeder.y_seed(phi[b], c[b])[0]
            tail_lin = 2.0 * _tail_action(seeder.lam, y)
            tail_far = _free_line_integral(model, icpt + slope * T2[j], sgn * slope)
            dur = sgn * (T2[j] - u0)  # time spent on the "outer" side of the origin
            act[b] = tail_lin + q0 - 2 * E0 * dur - 2 * tail_far
            direction[b] = xi_inf / np.linalg.norm(xi_inf)
            Z[b] = Zb
            resid[b] = r
    return TraceOrbits(side, phi, direction, Z, act, status.astype(str), resid, E0)


@dataclass(frozen=True)
class SphericalTracePoint:
    direction: np.ndarray
    cotangent: np.ndarray
    seed: int


def spherical_trace(model: PotentialModel, patch: ManifoldPatch,
                    aopts: AsymptoticOptions | None = None) -> tuple[list[SphericalTracePoint], int]:
    """Points ``(theta, -sqrt(2 E0) Z)`` of the trace at infinity, one per seed orbit.

    Returns the points and the numerical rank of the sampled differential of
    ``phi -> (direction, cotangent)``, expected to be ``n - 1``.
    """
    L = model.length_scale
    orb = trace_orbits(model, patch.side, patch.phi, patch.eps / L, aopts)
    pts = [SphericalTracePoint(orb.direction[s], orb.cotangent[s], s)
           for s in range(len(patch.phi)) if orb.status[s] == "ok"]
    for p in pts:
        if abs(p.direction @ p.cotangent) > 1e-10 * max(1.0, np.linalg.norm(p.cotangent)):
            raise PrecisionError("trace cotangent not orthogonal to its base direction")
    rank = _trace_rank(model, patch, aopts)
    return pts, rank


def _trace_rank(model, patch, aopts, h=1e-5) -> int:
    n = model.n
    if n == 1:
        return 0
    L = model.length_scale
    phi0 = patch.phi[0]
    T = perp_basis(phi0)
    cols = []
    for k in range(n - 1):
        ph = np.stack([phi0 + h * T[:, k], phi0 - h * T[:, k]])
        o = trace_orbits(model, patch.side, ph, patch.eps / L, aopts)
        v = np.concatenate([o.direction, o.cotangent], axis=1)
        cols.append((v[0] - v[1]) / (2 * h))
    Jm = np.column_stack(cols)
    sv = np.linalg.svd(Jm, compute_uv=False)
    return int(np.sum(sv > 1e-6 * max(1.0, sv[0])))


@dataclass(frozen=True)
class CriticalBranch:
    phi: np.ndarray
    direction: np.ndarray
    Z: np.ndarray
    action: float
    jacobian_sv: float


def _angle(v: np.ndarray) -> np.ndarray:
    return np.arctan2(v[..., 1], v[..., 0])


def critical_actions(model: PotentialModel, side: str, direction: np.ndarray, eps: float = 1e-5,
                     n_scan: int = 256, aopts: AsymptoticOptions | None = None,
                     rank_tol: float = 1e-8, tol: float = 1e-11) -> list[CriticalBranch]:
    """All manifold orbits with asymptotic direction ``direction`` and their critical actions.

    For ``Lambda_+`` the direction is the outgoing ``theta``; for ``Lambda_-``
    it is the incoming ``omega``.  Currently implemented for ``n = 2``, where
    the orbits form a one-parameter family in the seed angle: the direction
    map is scanned and its roots are polished with Brent's method.

    Raises
    ------
    AssumptionViolation
        If the direction map is degenerate at a root (transversality fails).
    """
    if model.n != 2:
        raise NotImplementedError("critical_actions is implemented for n = 2")
    direction = np.asarray(direction, float)
    target = _angle(direction / np.linalg.norm(direction))
    a = 2 * np.pi * (np.arange(n_scan) + 0.5) / n_scan
    phis = np.column_stack([np.cos(a), np.sin(a)])
    orb = trace_orbits(model, side, phis, eps, aopts)
    d = np.angle(np.exp(1j * (_angle(orb.direction) - target)))
    ok = orb.status == "ok"

    def F(angle: float) -> float:
        o = trace_orbits(model, side, np.array([[np.cos(angle), np.sin(angle)]]), eps, aopts)
        if o.status[0] != "ok":
            raise NotFoundError("orbit did not escape")
        return float(np.angle(np.exp(1j * (_angle(o.direction[0]) - target))))

    branches = []
    for i in range(n_scan):
        j = (i + 1) % n_scan
        if not (ok[i] and ok[j]):
            continue
        if d[i] == 0 or (np.sign(d[i]) != np.sign(d[j]) and abs(d[i] - d[j]) < np.pi):
            lo, hi = a[i], a[j] if j > i else a[j] + 2 * np.pi
            root = lo if d[i] == 0 else optimize.brentq(F, lo, hi, xtol=tol, rtol=1e-15)
            hstep = 1e-6
            dth = (F(root + hstep) - F(root - hstep)) / (2 * hstep)
            if abs(dth) <= rank_tol:
                raise AssumptionViolation(f"direction map degenerate at seed angle {root}")
            o = trace_orbits(model, side, np.array([[np.cos(root), np.sin(root)]]), eps, aopts)
            branches.append(CriticalBranch(o.phi[0], o.direction[0], o.Z[0], float(o.action[0]), abs(dth)))
    return branches
