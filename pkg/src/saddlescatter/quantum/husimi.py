"""Husimi (coherent-state) phase-space densities of grid states.

``Q(x, xi) = (2 pi h)^(-n) |<phi_{x,xi}, psi>|^2`` with
``phi_{x,xi}(y) = (pi h)^(-n/4) exp(-|y-x|^2/(2h) + i xi.(y-x)/h)``, so that
``int Q dx dxi = ||psi||^2``.  For each centre ``x`` on a strided sub-lattice
the overlap with all momenta is one small FFT of the Gaussian-windowed state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from scipy.spatial import cKDTree

from ..errors import ResolutionError
from .grid import GridState

logger = logging.getLogger(__name__)


@dataclass
class HusimiField:
    """Sparse samples ``Q`` at phase-space points ``(x[c], xi[j])`` with cell volume ``dA``.

    Only samples above a small floor are kept; ``dropped`` is the mass of the
    discarded ones.
    """

    x: np.ndarray
    xi: np.ndarray
    c: np.ndarray
    j: np.ndarray
    Q: np.ndarray
    dA: float
    h: float
    dropped: float = 0.0

    def total(self) -> float:
        return float(self.Q.sum() * self.dA + self.dropped)

    def points(self, threshold: float = 0.0):
        """``(P, 2n)`` phase-space points with their weights ``Q dA`` above ``threshold``."""
        sel = self.Q > threshold
        return np.hstack([self.x[self.c[sel]], self.xi[self.j[sel]]]), self.Q[sel] * self.dA

    def to_rows(self, threshold: float = 0.0) -> list[dict]:
        pts, w = self.points(threshold)
        n = self.x.shape[1]
        return [{**{f"x{i}": p[i] for i in range(n)}, **{f"xi{i}": p[n + i] for i in range(n)}, "weight": q}
                for p, q in zip(pts, w)]


def husimi_wavefront(state: GridState, stride: int = 4, window: int | None = None,
                     region: tuple | None = None, rel_threshold: float = 1e-10, batch: int = 256,
                     sample_floor: float = 1e-12) -> HusimiField:
    """Husimi density on the sub-lattice of every ``stride``-th grid point.

    Parameters
    ----------
    window : int
        Window size in grid points (even); by default the smallest power of two
        covering ``+-5 sqrt(h)``.
    region : ((lo, hi), ...), optional
        Restrict centres to this box.
    rel_threshold : float
        Skip centres whose smoothed local density is below this fraction of its maximum.
    sample_floor : float
        Drop samples whose mass ``Q dA`` is below this fraction of ``||psi||^2``.

    Raises
    ------
    ResolutionError
        If the window is not resolved (fewer than 4 points per ``sqrt(h)``)
        or exceeds the grid.
    """
    g = state.grid
    h = state.h
    n = g.ndim
    dx = g.spacing
    if np.any(np.sqrt(h) / dx < 2):
        raise ResolutionError("grid too coarse for a sqrt(h) window")
    if window is None:
        need = int(np.ceil(10 * np.sqrt(h) / dx.min()))
        window = 1 << int(np.ceil(np.log2(max(need, 8))))
    if window > min(g.shape):
        raise ResolutionError("Husimi window larger than the grid")
    W = window
    half = W // 2
    axes = g.axes()
    offs = [(np.arange(W) - half) * d for d in dx]
    gauss = np.ones((W,) * n)
    for k, o in enumerate(offs):
        sh = [1] * n
        sh[k] = W
        gauss = gauss * np.exp(-(o.reshape(sh) ** 2) / (2 * h))
    pref = (np.pi * h) ** (-n / 4) * g.cell
    # candidate centres
    idx = [np.arange(0, N, stride) for N in g.shape]
    cidx = np.stack(np.meshgrid(*idx, indexing="ij"), axis=-1).reshape(-1, n)
    cx = np.stack([axes[k][cidx[:, k]] for k in range(n)], axis=1)
    keep = np.ones(len(cidx), dtype=bool)
    if region is not None:
        for k, (lo, hi) in enumerate(region):
            keep &= (cx[:, k] >= lo) & (cx[:, k] <= hi)
    # local mass screen: Gaussian-smoothed density at each centre
    loc = ndimage.gaussian_filter(np.abs(state.psi) ** 2, sigma=list(np.sqrt(h) / dx), mode="wrap")
    keep &= loc[tuple(cidx.T)] > rel_threshold * loc.max()
    cidx, cx = cidx[keep], cx[keep]
    # momentum grid of the window FFT (centred ordering)
    ks = [2 * np.pi * sfft.fftshift(sfft.fftfreq(W, d)) for d in dx]
    xi = np.stack([m.ravel() for m in np.meshgrid(*[h * k for k in ks], indexing="ij")], axis=1)
    dxi = np.prod([2 * np.pi * h / (W * d) for d in dx])
    dA = float(np.prod(dx * stride) * dxi)
    psi_p = np.pad(state.psi, half, mode="wrap")
    floor = sample_floor * state.norm2() / dA
    cs, js, qs = [], [], []
    dropped = 0.0
    for s in range(0, len(cidx), batch):
        cb = cidx[s:s + batch]
        if n == 1:
            blocks = np.stack([psi_p[i:i + W] for (i,) in cb])
        else:
            blocks = np.stack([psi_p[i:i + W, j:j + W] for i, j in cb])
        ov = sfft.fftshift(sfft.fftn(blocks * gauss, axes=tuple(range(1, n + 1))), axes=tuple(range(1, n + 1)))
        Q = (np.abs(ov * pref) ** 2).reshape(len(cb), -1) / (2 * np.pi * h) ** n
        keep_q = Q > floor
        dropped += float(Q[~keep_q].sum() * dA)
        cc, jj = np.nonzero(keep_q)
        cs.append((cc + s).astype(np.int64))
        js.append(jj.astype(np.int64))
        qs.append(Q[cc, jj])
    cat = (lambda a, t: np.concatenate(a) if a else np.zeros(0, t))
    return HusimiField(cx, xi, cat(cs, np.int64), cat(js, np.int64), cat(qs, float), dA, h, dropped)


def _near(samples: np.ndarray, points: np.ndarray, delta: float, metric: str) -> np.ndarray:
    n = samples.shape[1] // 2
    tree = cKDTree(points)
    if metric == "euclidean":
        d, _ = tree.query(samples, k=1, distance_upper_bound=delta)
        return np.isfinite(d)
    if metric != "product":
        raise ValueError(f"unknown metric {metric!r}")
    # product distance max(|dx|, |dxi|) lies between d_E / sqrt(2) and d_E
    d, _ = tree.query(samples, k=1, distance_upper_bound=np.sqrt(2) * delta)
    near = d <= delta
    unsure = np.flatnonzero(np.isfinite(d) & ~near)
    if unsure.size:
        lists = tree.query_ball_point(samples[unsure], r=np.sqrt(2) * delta)
        for i, nb in zip(unsure, lists):
            dd = points[nb] - samples[i]
            dp = np.maximum(np.linalg.norm(dd[:, :n], axis=1), np.linalg.norm(dd[:, n:], axis=1))
            near[i] = bool(np.any(dp <= delta))
    return near


def mass_near(field: HusimiField, points: np.ndarray, delta: float, mask=None, metric: str = "product",
              weight_floor: float = 1e-14) -> tuple[float, float]:
    """Husimi mass within distance ``delta`` of the phase-space sample ``points`` (``(P, 2n)``).

    The default ``product`` metric is ``max(|dx|, |dxi|)``, i.e. the
    neighbourhood is a product of a position ball and a momentum ball;
    ``euclidean`` uses the 2n-dimensional ball.  ``mask`` optionally restricts
    the Husimi samples (a boolean function of the ``(M, 2n)`` sample
    coordinates) for both the numerator and the returned denominator.

    Returns
    -------
    (near, total) : tuple of float
    """
    pts, w = field.points(threshold=0.0)
    if mask is not None:
        sel = mask(pts)
        pts, w = pts[sel], w[sel]
    total = float(w.sum())
    big = w > weight_floor * max(total, 1e-300)
    near = _near(pts[big], np.asarray(points, float), delta, metric)
    return float(w[big][near].sum()), total
