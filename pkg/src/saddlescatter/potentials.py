"""Short-range potentials with a non-degenerate global maximum at the origin.

Every model exposes ``V``, ``grad V`` and ``Hess V`` evaluated on arrays of
points with shape ``(..., n)``.  Models are immutable; rotated variants are
built with :meth:`PotentialModel.rotated`.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import AssumptionViolation, ConfigError, ModelEvaluationError

logger = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EnergySpec:
    """Energy ``E = E0 + h * E1`` near the barrier top."""

    E0: float
    E1: float
    h: float
    C0: float = 10.0

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("h must be positive")
        if abs(self.E1) >= self.C0:
            raise ValueError(f"|E1| = {abs(self.E1)} exceeds the window C0 = {self.C0}")
        if not self.E > 0:
            raise ValueError("E must be positive")

    @property
    def E(self) -> float:
        return self.E0 + self.h * self.E1


class PotentialModel:
    """Base class for analytic potentials.

    Subclasses implement :meth:`_vgh` in their own (principal) coordinates.
    A rotation ``R`` maps principal coordinates to lab coordinates, so that
    ``V_lab(x) = V(R.T @ x)``.

    Attributes
    ----------
    n : int
        Configuration-space dimension.
    E0 : float
        Barrier energy ``V(0)``.
    lambdas : tuple of float
        Curvatures with ``Hess V(0) = -diag(lambda**2)``; empty for models
        without a barrier.
    rho : float
        Decay exponent used for validation and asymptotic fits.
    """

    family: str = "abstract"

    def __init__(
        self,
        n: int,
        E0: float,
        lambdas: Sequence[float],
        rho: float,
        params: Mapping[str, Any] | None = None,
        rotation: np.ndarray | None = None,
        decay_constants: Sequence[float] | None = None,
    ) -> None:
        if n < 1:
            raise ValueError("dimension must be >= 1")
        self.n = int(n)
        self.E0 = float(E0)
        self.lambdas = tuple(float(v) for v in lambdas)
        self.rho = float(rho)
        self.params = dict(params or {})
        self.rotation = None if rotation is None else np.asarray(rotation, dtype=float)
        self.decay_constants = None if decay_constants is None else tuple(decay_constants)
        if self.rotation is not None and self.rotation.shape != (n, n):
            raise ValueError("rotation must be n x n")

    # -- to be provided by subclasses -------------------------------------
    def _vgh(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def length_scale(self) -> float:
        """Characteristic length of the potential."""
        lam = min(self.lambdas) if self.lambdas else 1.0
        return float(np.sqrt(2.0 * max(self.E0, 1e-300)) / lam) if self.E0 > 0 else 1.0

    # -- public evaluation --------------------------------------------------
    def vgh(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian at points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        if self.rotation is None:
            return self._vgh(x)
        R = self.rotation
        v, g, H = self._vgh(x @ R)
        return v, g @ R.T, np.einsum("ij,...jk,lk->...il", R, H, R)

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.vgh(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.rotation is None:
            return self._grad(x)
        return self._grad(x @ self.rotation) @ self.rotation.T

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.vgh(x)[2]

    def _grad(self, y: np.ndarray) -> np.ndarray:
        return self._vgh(y)[1]

    def _value(self, y: np.ndarray) -> np.ndarray:
        return self._vgh(y)[0]

    def potential(self, x: np.ndarray) -> np.ndarray:
        """Value only, cheaper than :meth:`vgh` for grids."""
        x = np.asarray(x, dtype=float)
        return self._value(x if self.rotation is None else x @ self.rotation)

    def energy(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return 0.5 * np.sum(np.asarray(xi) ** 2, axis=-1) + self.potential(x)

    def rotated(self, R: np.ndarray) -> "PotentialModel":
        """Model composed with rotation ``R`` (principal -> lab coordinates)."""
        R = np.asarray(R, dtype=float)
        if not np.allclose(R.T @ R, np.eye(self.n), atol=1e-12):
            raise ValueError("rotation must be orthogonal")
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.rotation = R if self.rotation is None else R @ self.rotation
        return new

    # -- config -------------------------------------------------------------
    def to_config(self) -> dict[str, Any]:
        cfg = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "family": self.family,
            "n": self.n,
            "E0": self.E0,
            "lambda": list(self.lambdas),
            "rho": self.rho,
            "params": dict(self.params),
        }
        if self.rotation is not None:
            cfg["params"]["rotation"] = self.rotation.tolist()
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __repr__(self) -> str:
        return (f"{type(self).__name__}(n={self.n}, E0={self.E0}, "
                f"lambdas={self.lambdas}, rho={self.rho})")


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ModelEvaluationError("potential evaluation produced non-finite values")


def evaluate(model: PotentialModel, x: Sequence[float] | np.ndarray):
    """Return ``(V, grad V, Hess V)`` at ``x``.

    Raises
    ------
    ModelEvaluationError
        If the input or any output is non-finite.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ModelEvaluationError("non-finite evaluation point")
    v, g, H = model.vgh(x)
    _check_finite(v, g, H)
    return v, g, H


# ---------------------------------------------------------------------------
# bundled families
# ---------------------------------------------------------------------------


class GaussianBarrier(PotentialModel):
    """``V(x) = E0 * exp(-sum(lambda_j**2 x_j**2) / (2 E0))``."""

    family = "gaussian"

    def __init__(self, E0: float, lambdas: Sequence[float], rho: float = 4.0, **kw: Any) -> None:
        super().__init__(len(lambdas), E0, lambdas, rho, **kw)
        self._a = np.asarray(self.lambdas) ** 2 / self.E0

    def _value(self, y):
        return self.E0 * np.exp(-0.5 * np.sum(self._a * y * y, axis=-1))

    def _grad(self, y):
        v = self._value(y)
        return -v[..., None] * self._a * y

    def _vgh(self, y):
        v = self._value(y)
        ay = self._a * y
        g = -v[..., None] * ay
        H = v[..., None, None] * (ay[..., :, None] * ay[..., None, :] - np.diag(self._a))
        return v, g, H


class RationalBarrier(PotentialModel):
    """``V(x) = E0 / (1 + q)**p`` with ``q = sum(lambda_j**2 x_j**2) / (2 p E0)``.

    The factor ``p`` in ``q`` keeps ``Hess V(0) = -diag(lambda**2)``.  The decay
    exponent is ``rho = 2 p``.
    """

    family = "rational"

    def __init__(self, E0: float, lambdas: Sequence[float], power: float = 1.0, **kw: Any) -> None:
        params = dict(kw.pop("params", {}) or {})
        params["power"] = float(power)
        super().__init__(len(lambdas), E0, lambdas, 2.0 * power, params=params, **kw)
        self.power = float(power)
        self._a = np.asarray(self.lambdas) ** 2 / (self.power * self.E0)

    def _value(self, y):
        q = 0.5 * np.sum(self._a * y * y, axis=-1)
        return self.E0 * (1.0 + q) ** (-self.power)

    def _vgh(self, y):
        p = self.power
        q = 0.5 * np.sum(self._a * y * y, axis=-1)
        base = 1.0 + q
        v = self.E0 * base ** (-p)
        dv = -p * self.E0 * base ** (-p - 1.0)  # dV/dq
        d2v = p * (p + 1.0) * self.E0 * base ** (-p - 2.0)
        ay = self._a * y
        g = dv[..., None] * ay
        H = d2v[..., None, None] * ay[..., :, None] * ay[..., None, :] + dv[..., None, None] * np.diag(self._a)
        return v, g, H

    @property
    def length_scale(self) -> float:
        return float(np.sqrt(2.0 * self.power * self.E0) / min(self.lambdas))


class EckartBarrier(PotentialModel):
    """One-dimensional ``V(x) = E0 * sech(a x)**2`` with ``a = lambda / sqrt(2 E0)``."""

    family = "eckart"

    def __init__(self, E0: float, lam: float | Sequence[float], rho: float = 4.0, **kw: Any) -> None:
        lam = float(np.atleast_1d(lam)[0])
        super().__init__(1, E0, (lam,), rho, **kw)
        self.a = lam / np.sqrt(2.0 * self.E0)

    def _value(self, y):
        return self.E0 / np.cosh(self.a * y[..., 0]) ** 2

    def _vgh(self, y):
        u = self.a * y[..., 0]
        s = 1.0 / np.cosh(u)
        t = np.tanh(u)
        v = self.E0 * s * s
        g = (-2.0 * self.a * v * t)[..., None]
        H = (2.0 * self.a**2 * v * (3.0 * t * t - 1.0))[..., None, None]
        return v, g, H


class QuadraticBarrier(PotentialModel):
    """Exact inverted oscillator ``E0 - sum(lambda_j**2 x_j**2) / 2``.

    Not short range; useful only for linear-flow checks.
    """

    family = "quadratic"

    def __init__(self, E0: float, lambdas: Sequence[float], **kw: Any) -> None:
        super().__init__(len(lambdas), E0, lambdas, 0.0, **kw)
        self._l2 = np.asarray(self.lambdas) ** 2

    def _vgh(self, y):
        v = self.E0 - 0.5 * np.sum(self._l2 * y * y, axis=-1)
        g = -self._l2 * y
        H = np.broadcast_to(-np.diag(self._l2), y.shape[:-1] + (self.n, self.n)).copy()
        return v, g, H


class FreeModel(PotentialModel):
    """``V = 0``: no barrier, used for trivial checks."""

    family = "free"

    def __init__(self, n: int, **kw: Any) -> None:
        super().__init__(n, 0.0, (), np.inf, **kw)

    def _vgh(self, y):
        return (np.zeros(y.shape[:-1]), np.zeros_like(y),
                np.zeros(y.shape[:-1] + (self.n, self.n)))

    @property
    def length_scale(self) -> float:
        return 1.0


class HarmonicWell(PotentialModel):
    """``V = omega**2 |x|**2 / 2``: a confining sanity model for propagation checks."""

    family = "harmonic"

    def __init__(self, omega: float, n: int, **kw: Any) -> None:
        super().__init__(n, 0.0, (), 0.0, params={"omega": float(omega)}, **kw)
        self.omega = float(omega)

    def _vgh(self, y):
        w2 = self.omega**2
        H = np.broadcast_to(w2 * np.eye(self.n), y.shape[:-1] + (self.n, self.n)).copy()
        return 0.5 * w2 * np.sum(y * y, axis=-1), w2 * y, H

    @property
    def length_scale(self) -> float:
        return 1.0


class SumOfGaussians(PotentialModel):
    """``V(x) = sum_k A_k exp(-|x - c_k|**2 / (2 s_k**2))``.

    With a single centred bump this is an isotropic barrier; a second bump of
    height at least ``E0`` gives the double-bump counterexample, and a negative
    amplitude gives an attractive well.
    """

    family = "gaussian_sum"

    def __init__(self, amplitudes: Sequence[float], centers: Sequence[Sequence[float]],
                 widths: Sequence[float], rho: float = 4.0, **kw: Any) -> None:
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        amps = np.asarray(amplitudes, dtype=float)
        widths = np.asarray(widths, dtype=float)
        n = centers.shape[1]
        E0 = float(np.sum(amps * np.exp(-np.sum(centers**2, axis=1) / (2 * widths**2))))
        params = {"amplitudes": amps.tolist(), "centers": centers.tolist(), "widths": widths.tolist()}
        self._amps, self._centers, self._widths = amps, centers, widths
        super().__init__(n, E0, self._curvatures(), rho, params=params, **kw)

    def _curvatures(self) -> tuple[float, ...]:
        _, g, H = self._vgh(np.zeros(self._centers.shape[1]))
        w = np.linalg.eigvalsh(-H)
        if np.linalg.norm(g) > 1e-12 or np.any(w <= 0):
            return ()
        return tuple(np.sqrt(np.sort(w)))

    def _vgh(self, y):
        d = y[..., None, :] - self._centers  # (..., K, n)
        s2 = self._widths**2
        e = self._amps * np.exp(-np.sum(d * d, axis=-1) / (2 * s2))  # (..., K)
        v = e.sum(-1)
        g = -np.einsum("...k,...ki->...i", e / s2, d)
        H = (np.einsum("...k,...ki,...kj->...ij", e / s2**2, d, d)
             - np.einsum("...k,ij->...ij", e / s2, np.eye(y.shape[-1])))
        return v, g, H

    @property
    def length_scale(self) -> float:
        return float(np.max(self._widths))


_FAMILIES = {
    "gaussian": GaussianBarrier,
    "rational": RationalBarrier,
    "eckart": EckartBarrier,
    "quadratic": QuadraticBarrier,
    "free": FreeModel,
    "gaussian_sum": SumOfGaussians,
    "harmonic": HarmonicWell,
}


def model_from_config(cfg: Mapping[str, Any]) -> PotentialModel:
    """Build a model from a config mapping.

    Keys: ``schema_version`` (optional, must equal the current version),
    ``family``, ``n``, ``E0``, ``lambda``, ``rho`` and ``params``.
    """
    version = cfg.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    family = cfg.get("family")
    if family not in _FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {sorted(_FAMILIES)}")
    if family in ("gaussian", "rational", "eckart", "quadratic") and "lambda" not in cfg:
        raise ConfigError(f"family {family!r} needs 'lambda'")
    params = dict(cfg.get("params") or {})
    rotation = params.pop("rotation", None)
    try:
        n = int(cfg["n"]) if "n" in cfg else None
        lambdas = [float(v) for v in cfg.get("lambda", [])]
        E0 = float(cfg.get("E0", 0.0))
        rho = cfg.get("rho")
        if family == "gaussian":
            model = GaussianBarrier(E0, lambdas, rho=float(rho or 4.0))
        elif family == "rational":
            power = float(params.get("power", float(rho) / 2 if rho else 1.0))
            model = RationalBarrier(E0, lambdas, power=power)
        elif family == "eckart":
            model = EckartBarrier(E0, lambdas, rho=float(rho or 4.0))
        elif family == "quadratic":
            model = QuadraticBarrier(E0, lambdas)
        elif family == "free":
            model = FreeModel(n or 1)
        elif family == "harmonic":
            model = HarmonicWell(float(params["omega"]), n or 1)
        else:
            model = SumOfGaussians(params["amplitudes"], params["centers"], params["widths"],
                                   rho=float(rho or 4.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc
    if n is not None and n != model.n:
        raise ConfigError(f"n={n} inconsistent with lambda of length {model.n}")
    if rotation is not None:
        model = model.rotated(np.asarray(rotation, dtype=float))
    return model


def load_model(path: str | Path) -> PotentialModel:
    """Load a model config from JSON or YAML."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix in (".yaml", ".yml"):
            import yaml

            cfg = yaml.safe_load(text)
        else:
            cfg = json.loads(text)
    except Exception as exc:  # parser-specific exception types
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    return model_from_config(cfg.get("model", cfg))


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# linearization and validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Linearization:
    lambdas: np.ndarray
    axes: np.ndarray  # columns are principal axes in lab coordinates
    matrix: np.ndarray  # [[0, I], [diag(lambda**2), 0]] in principal coordinates

    def __iter__(self):
        return iter((self.lambdas, self.axes, self.matrix))


def linearization(model: PotentialModel) -> Linearization:
    """Curvatures, principal axes and the linearized Hamiltonian field at 0.

    Raises
    ------
    AssumptionViolation
        If ``Hess V(0)`` is not negative definite.
    """
    n = model.n
    _, g, H = evaluate(model, np.zeros(n))
    w, U = np.linalg.eigh(-0.5 * (H + H.T))
    if np.any(w <= 0):
        raise AssumptionViolation(f"Hess V(0) is not negative definite (eigenvalues {-w})")
    if np.linalg.norm(g) > 1e-8 * max(1.0, abs(model.E0)):
        raise AssumptionViolation("grad V(0) does not vanish")
    order = np.argsort(w)
    lam = np.sqrt(w[order])
    U = U[:, order]
    # deterministic sign: largest component of each axis positive
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(n)])
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = np.diag(lam**2)
    return Linearization(lam, U, A)


@dataclass
class GridSpec:
    """Sampling spec for :func:`validate_assumptions` (lengths in model scale)."""

    ball_radius: float = 3.0
    annulus: tuple[float, float] = (8.0, 20.0)
    points_per_axis: int = 41
    annulus_points: int = 400
    probe_count: int = 64
    seed: int = 0


@dataclass
class ValidationReport:
    a1_ok: bool
    decay_ok: bool
    unique_max_ok: bool
    trapped_ok: bool
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.a1_ok and self.decay_ok and self.unique_max_ok and self.trapped_ok

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "a1_ok": self.a1_ok, "decay_ok": self.decay_ok,
                "unique_max_ok": self.unique_max_ok, "trapped_ok": self.trapped_ok,
                "details": self.details}


def _weighted_derivative_sup(model: PotentialModel, pts: np.ndarray) -> np.ndarray:
    v, g, H = model.vgh(pts)
    jx = np.sqrt(1.0 + np.sum(pts**2, axis=-1))
    rho = model.rho if np.isfinite(model.rho) else 0.0
    w0 = np.abs(v) * jx**rho
    w1 = np.linalg.norm(g, axis=-1) * jx ** (rho + 1)
    w2 = np.linalg.norm(H, axis=(-2, -1), ord=2) * jx ** (rho + 2)
    return np.stack([w0, w1, w2], axis=-1)


def validate_assumptions(model: PotentialModel, grid: GridSpec | None = None) -> ValidationReport:
    """Sampled checks of the barrier hypotheses.

    * barrier at the origin: ``V(0) = E0 > 0``, ``grad V(0) = 0``, negative
      definite Hessian;
    * decay: ``|d^a V| <x>^(rho+|a|)`` on the far annulus stays below the
      constants ``C_a`` (declared, or the sup over the inner ball);
    * unique maximum: no grid point away from the origin reaches ``E0`` and no
      other grid local maximum exists;
    * trapped set: energy-``E0`` samples escape or converge both ways.
    """
    from .flow import escape_time_batch, FlowOptions

    grid = grid or GridSpec()
    L = model.length_scale
    n = model.n
    rng = np.random.default_rng(grid.seed)
    details: dict[str, Any] = {}

    # (A1)
    a1_ok = True
    try:
        v0, g0, _ = evaluate(model, np.zeros(n))
        lin = linearization(model)
        a1_ok = model.E0 > 0 and abs(v0 - model.E0) <= 1e-10 * max(1.0, abs(model.E0))
        if model.lambdas:
            a1_ok = a1_ok and np.allclose(lin.lambdas, np.sort(model.lambdas), rtol=1e-6)
        details["lambdas"] = lin.lambdas.tolist()
    except AssumptionViolation as exc:
        a1_ok = False
        details["a1_error"] = str(exc)
    if model.E0 <= 0:
        a1_ok = False
        details["a1_error"] = details.get("a1_error", "E0 <= 0: no positive maximum")

    # decay
    m = grid.points_per_axis if n <= 2 else max(9, int(round(grid.points_per_axis ** (2 / n))))
    axis = np.linspace(-grid.ball_radius * L, grid.ball_radius * L, m)
    ball = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    dirs = rng.normal(size=(grid.annulus_points, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = L * rng.uniform(grid.annulus[0], grid.annulus[1], size=grid.annulus_points)
    annulus = dirs * radii[:, None]
    if np.isfinite(model.rho) and model.rho > 1:
        inner = _weighted_derivative_sup(model, ball).max(axis=0)
        C = np.asarray(model.decay_constants, float) if model.decay_constants else 1.5 * inner + 1e-300
        outer = _weighted_derivative_sup(model, annulus).max(axis=0)
        decay_ok = bool(np.all(outer <= C))
        details["decay_sup_outer"] = outer.tolist()
        details["decay_constants"] = C.tolist()
    elif isinstance(model, FreeModel):
        decay_ok = True
    else:
        decay_ok = False
        details["decay_error"] = "decay exponent must exceed 1"

    # unique maximum on the grid
    vals = model.potential(ball)
    r = np.linalg.norm(ball, axis=1)
    away = r > 0.25 * L
    vmax_away = float(vals[away].max()) if np.any(away) else -np.inf
    field_vals = vals.reshape((m,) * n)
    is_max = np.ones(field_vals.shape, dtype=bool)
    for ax in range(n):
        for shift in (1, -1):
            is_max &= field_vals >= np.roll(field_vals, shift, axis=ax)
    interior = np.zeros_like(is_max)
    interior[(slice(1, -1),) * n] = True
    maxima = ball[(is_max & interior).ravel()]
    others = maxima[np.linalg.norm(maxima, axis=1) > 0.25 * L]
    unique_max_ok = bool(model.E0 > 0 and vmax_away < model.E0 and len(others) == 0)
    details["max_away_from_origin"] = vmax_away
    details["other_local_maxima"] = others.tolist()

    # trapped-set probe
    trapped_ok = True
    if a1_ok and unique_max_ok:
        lam1 = min(model.lambdas)
        pts = []
        while len(pts) < grid.probe_count:
            x = rng.uniform(-2 * L, 2 * L, size=n)
            kin = model.E0 - float(model.potential(x))
            if kin <= 1e-3 * model.E0:
                continue
            d = rng.normal(size=n)
            pts.append(np.concatenate([x, np.sqrt(2 * kin) * d / np.linalg.norm(d)]))
        y0 = np.array(pts)
        R_esc = 20.0 * L
        opts = FlowOptions()
        flags = []
        for sign in (1.0, -1.0):
            out = escape_time_batch(model, y0, R_esc, sign * 200.0 / lam1, opts)
            flags.append([o.kind for o in out])
        flags = np.array(flags)
        bad = np.any(flags == "undecided", axis=0)
        trapped_ok = not bool(np.any(bad))
        details["probe_outcomes"] = {k: int(np.sum(flags == k)) for k in ("escaped", "converged", "undecided")}
        details["flagged_points"] = y0[bad].tolist()
    else:
        trapped_ok = False
        details["trapped_error"] = "skipped: barrier assumptions failed"

    report = ValidationReport(a1_ok, decay_ok, unique_max_ok, trapped_ok, details)
    logger.info("validation of %r: %s", model, report.to_dict()["ok"])
    return report
