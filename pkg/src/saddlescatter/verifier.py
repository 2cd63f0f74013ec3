"""Symplectic linear algebra on sampled frames.

Vectors of a product phase space ``T*R^{n_1} x ... x T*R^{n_k}`` are stored
factor by factor as ``(x_1, xi_1, x_2, xi_2, ...)``.  The form on one factor
is ``sigma(u, v) = <u_x, v_xi> - <u_xi, v_x>`` (so ``sigma(d/dx_1, d/dxi_1) = 1``);
on a product it is ``sum_k s_k sigma_k`` with signs ``s_k = +-1`` (``-1`` on the
second factor gives the twisted form used for canonical relations).

Clean-intersection excess of ``Y`` and ``Z`` in an ambient ``X`` is
``e = dim X + dim(TY cap TZ) - dim Y - dim Z = dim X - rank[TY | TZ]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import IndeterminateRankError, SaddleScatterError
from .flow import FlowOptions, PhasePoint, flow_with_variational
from .potentials import PotentialModel

logger = logging.getLogger(__name__)


class DimensionError(SaddleScatterError):
    """Vectors or frames of incompatible dimension."""


@dataclass(frozen=True)
class SpaceSpec:
    """Product of cotangent spaces ``T*R^{d}`` with per-factor signs."""

    dims: tuple
    signs: tuple = ()

    def __post_init__(self) -> None:
        if not self.signs:
            object.__setattr__(self, "signs", tuple(1 for _ in self.dims))
        if len(self.signs) != len(self.dims) or any(s not in (1, -1) for s in self.signs):
            raise DimensionError("signs must be +-1, one per factor")

    @property
    def size(self) -> int:
        return 2 * sum(self.dims)

    @classmethod
    def single(cls, n: int) -> "SpaceSpec":
        return cls((n,))

    def matrix(self) -> np.ndarray:
        """Matrix ``W`` with ``sigma(u, v) = u @ W @ v``."""
        W = np.zeros((self.size, self.size))
        o = 0
        for d, s in zip(self.dims, self.signs):
            I = np.eye(d)
            W[o:o + d, o + d:o + 2 * d] = s * I
            W[o + d:o + 2 * d, o:o + d] = -s * I
            o += 2 * d
        return W

    def product(self, other: "SpaceSpec") -> "SpaceSpec":
        return SpaceSpec(self.dims + other.dims, self.signs + other.signs)


def symplectic_form(u, v, spec: SpaceSpec | None = None) -> float:
    """``sigma(u, v)`` for vectors of the space ``spec`` (default: one factor)."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    if u.shape != v.shape or u.ndim != 1 or u.size % 2:
        raise DimensionError(f"incompatible vectors {u.shape} and {v.shape}")
    spec = spec or SpaceSpec.single(u.size // 2)
    if spec.size != u.size:
        raise DimensionError(f"space of size {spec.size} but vectors of size {u.size}")
    return float(u @ spec.matrix() @ v)


@dataclass
class TangentFrame:
    """Tangent vectors (columns of ``vectors``) at ``base`` in the space ``spec``."""

    base: np.ndarray
    vectors: np.ndarray
    spec: SpaceSpec
    label: str = ""

    def __post_init__(self) -> None:
        self.base = np.asarray(self.base, float)
        self.vectors = np.atleast_2d(np.asarray(self.vectors, float))
        if self.vectors.shape[0] != self.spec.size or self.base.shape != (self.spec.size,):
            raise DimensionError("frame does not match its space")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def orthonormal(self, rank_tol: float = 1e-8) -> np.ndarray:
        """Orthonormal basis of the span; raises if the vectors are (near) dependent."""
        U, s, _ = np.linalg.svd(self.vectors, full_matrices=False)
        if s.size and s[-1] < rank_tol * s[0]:
            raise IndeterminateRankError(f"frame {self.label!r} is not independent (s_min/s_max = {s[-1] / s[0]:.2e})")
        return U

    def product(self, other: "TangentFrame") -> "TangentFrame":
        n1, n2 = self.spec.size, other.spec.size
        V = np.zeros((n1 + n2, self.dim + other.dim))
        V[:n1, :self.dim] = self.vectors
        V[n1:, self.dim:] = other.vectors
        return TangentFrame(np.concatenate([self.base, other.base]), V, self.spec.product(other.spec),
                            f"{self.label}x{other.label}")


def lagrangian_defect(frame: TangentFrame) -> float:
    """``max |sigma(u_i, u_j)| / (|u_i| |u_j|)`` over pairs of frame vectors.

    Raises
    ------
    DimensionError
        If the frame does not have half the ambient dimension.
    """
    if 2 * frame.dim != frame.spec.size:
        raise DimensionError(f"{frame.dim} vectors in a {frame.spec.size}-dimensional space")
    V = frame.vectors
    G = V.T @ frame.spec.matrix() @ V
    nrm = np.linalg.norm(V, axis=0)
    return float(np.max(np.abs(G) / np.outer(nrm, nrm)))


@dataclass
class ExcessReport:
    excess: int
    dim_ambient: int
    dim_Y: int
    dim_Z: int
    rank: int
    dim_intersection: int
    singular_values: np.ndarray
    rank_tol: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"excess": self.excess, "dim_ambient": self.dim_ambient, "dim_Y": self.dim_Y,
                "dim_Z": self.dim_Z, "rank": self.rank, "dim_intersection": self.dim_intersection,
                "singular_values": [float(s) for s in self.singular_values], "rank_tol": self.rank_tol,
                **self.meta}


def clean_intersection_excess(Y: TangentFrame, Z: TangentFrame, point_tol: float = 1e-8,
                              rank_tol: float = 1e-8, band: tuple = (1e-9, 1e-7)) -> ExcessReport:
    """Excess ``e = dim X - rank[TY | TZ]`` at a common base point.

    Both frames are orthonormalized first, so the result does not depend on
    the choice of spanning vectors.  Relative singular values inside ``band``
    make the rank ambiguous.

    Raises
    ------
    DimensionError
        Frames in different spaces or base points further apart than ``point_tol``.
    IndeterminateRankError
        A singular value falls in the ambiguity band.
    """
    if Y.spec.size != Z.spec.size:
        raise DimensionError("frames live in different spaces")
    gap = float(np.max(np.abs(Y.base - Z.base)))
    if gap > point_tol * max(1.0, float(np.max(np.abs(Y.base)))):
        raise DimensionError(f"base points differ by {gap:.2e}")
    QY = Y.orthonormal(rank_tol)
    QZ = Z.orthonormal(rank_tol)
    s = np.linalg.svd(np.hstack([QY, QZ]), compute_uv=False)
    rel = s / s[0]
    amb = [v for v in rel if band[0] <= v <= band[1]]
    if amb:
        raise IndeterminateRankError(f"singular value(s) {amb} inside the ambiguity band {band}")
    rank = int(np.sum(rel > rank_tol))
    dimX = Y.spec.size
    e = dimX - rank
    return ExcessReport(e, dimX, Y.dim, Z.dim, rank, Y.dim + Z.dim - rank, rel, rank_tol)


# ---------------------------------------------------------------------------
# frame builders
# ---------------------------------------------------------------------------


def graph_frame(M: np.ndarray, base_in: np.ndarray, base_out: np.ndarray) -> TangentFrame:
    """Tangent space of the graph ``{(F(rho), rho)}`` of a map with differential ``M``."""
    d = M.shape[0]
    V = np.vstack([M, np.eye(d)])
    n = d // 2
    return TangentFrame(np.concatenate([base_out, base_in]), V, SpaceSpec((n, n), (1, -1)), "graph")


def diagonal_frame(n: int, base: np.ndarray) -> TangentFrame:
    """``T*R^n x diag(T*R^n x T*R^n) x T*R^n`` at ``base`` (size ``8n``)."""
    d = 2 * n
    V = np.zeros((4 * d, 3 * d))
    V[:d, :d] = np.eye(d)
    V[d:2 * d, d:2 * d] = np.eye(d)
    V[2 * d:3 * d, d:2 * d] = np.eye(d)
    V[3 * d:, 2 * d:] = np.eye(d)
    return TangentFrame(base, V, SpaceSpec((n, n, n, n), (1, -1, 1, -1)), "diag")


def energy_flowout_frame(model: PotentialModel, rho: np.ndarray, s: float,
                         opts: FlowOptions | None = None) -> TangentFrame:
    """Tangent space of ``{(rho, exp(s H_p) rho) : p(rho) = E}`` at ``(rho, exp(s H_p) rho)``.

    Spanned by ``(v, M_s v)`` for ``v`` in ``ker dp(rho)`` and ``(0, H_p)`` at the image.
    """
    n = model.n
    rho = np.asarray(rho, float)
    end, M = flow_with_variational(model, PhasePoint(rho[:n], rho[n:]), s, opts=opts)
    img = end.as_array()
    dp = np.concatenate([model.gradient(rho[None, :n])[0], rho[n:]])
    _, _, Vt = np.linalg.svd(dp[None])
    ker = Vt[1:].T  # (2n, 2n-1)
    hp_img = np.concatenate([img[n:], -model.gradient(img[None, :n])[0]])
    V = np.zeros((4 * n, 2 * n))
    V[:2 * n, :2 * n - 1] = ker
    V[2 * n:, :2 * n - 1] = M @ ker
    V[2 * n:, 2 * n - 1] = hp_img
    return TangentFrame(np.concatenate([rho, img]), V, SpaceSpec((n, n), (1, -1)), "flowout")


def lagrangian_frame(points: np.ndarray, frames: np.ndarray, n: int, label: str = "") -> TangentFrame:
    """Wrap a manifold sample point (``2n``) and its tangent frame (``2n x n``)."""
    return TangentFrame(points, frames, SpaceSpec.single(n), label)


def composition_frames(C1: TangentFrame, C2: TangentFrame) -> tuple[TangentFrame, TangentFrame]:
    """Frames ``(T(C1 x C2), T(T*X x diag x T*Z))`` for composing relations ``C1`` and ``C2``."""
    n = C1.spec.dims[0]
    mid1 = C1.base[2 * n:]
    mid2 = C2.base[:2 * n]
    if np.max(np.abs(mid1 - mid2)) > 1e-8 * max(1.0, float(np.max(np.abs(mid1)))):
        raise DimensionError("relations do not meet at a common middle point")
    Y = C1.product(C2)
    Z = diagonal_frame(n, Y.base)
    Y.spec = Z.spec
    return Y, Z


def audit(report: ExcessReport, label: str) -> dict:
    return {"configuration": label, **report.to_dict()}


def sampled_configurations(model: PotentialModel, count: int = 20, seed: int = 0,
                           t_range: tuple = (0.2, 1.0), patches=None) -> list[dict]:
    """Excess audits of the two composition configurations at random manifold samples.

    * ``graph``: graph of ``exp(t H_p)`` composed with ``Lambda_+ x Lambda_-``
      (expected ``e = 0``);
    * ``flowout``: ``Lambda_+ x Lambda_-`` composed with the energy-shell
      flow-out ``{(rho, exp(s H_p) rho) : p(rho) = E0}`` (expected ``e = 1``).

    Indeterminate ranks are recorded with ``excess = None`` and the message.
    """
    from .manifolds import sample_manifold

    n = model.n
    Pp, Pm = patches or (sample_manifold(model, "+"), sample_manifold(model, "-"))
    pp, fp, _, _ = Pp.flat()
    pm, fm, _, _ = Pm.flat()
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        i = int(rng.integers(len(pp)))
        j = int(rng.integers(len(pm)))
        t = float(rng.uniform(*t_range))
        Lp = lagrangian_frame(pp[i], fp[i], n, "L+")
        Lm = lagrangian_frame(pm[j], fm[j], n, "L-")
        end, M = flow_with_variational(model, PhasePoint(pp[i, :n], pp[i, n:]), t)
        for label, (C1, C2) in (("graph", (graph_frame(M, pp[i], end.as_array()), Lp.product(Lm))),
                                ("flowout", (Lp.product(Lm), energy_flowout_frame(model, pm[j], t)))):
            Y, Z = composition_frames(C1, C2)
            try:
                rep = audit(clean_intersection_excess(Y, Z), label)
            except IndeterminateRankError as exc:
                rep = {"configuration": label, "excess": None, "error": str(exc)}
            rep.update({"sample": k, "t": t})
            out.append(rep)
    return out
