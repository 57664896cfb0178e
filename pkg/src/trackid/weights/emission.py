"""Gaussian box-emission models for identities and for the outlier column."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from ..errors import DomainError, FitError
from ..geometry import BoundingBox, Homography, fit_homography
from .grid import N_CELLS, ROWS, AntennaGrid, cell_row
from .visibility import VisibilityState

LOG_2PI = math.log(2.0 * math.pi)


class FitWarning(UserWarning):
    pass


class GaussianBlock:
    """Multivariate normal with a cached Cholesky factor."""

    def __init__(self, cov: np.ndarray):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DomainError(f"covariance must be square, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise DomainError("covariance must be symmetric")
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DomainError("covariance must be positive definite") from None
        self.cov = cov
        self.dim = cov.shape[0]
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def logpdf(self, x: np.ndarray, mean: np.ndarray) -> np.ndarray:
        """Row-wise log-density of (n, d) points around (n, d) or (d,) means."""
        d = np.atleast_2d(np.asarray(x, dtype=float) - mean)
        z = np.linalg.solve(self.chol, d.T)
        return -0.5 * (np.sum(z * z, axis=0) + self.logdet + self.dim * LOG_2PI)


@dataclass(eq=False)
class EmissionModel:
    """Box emission given (antenna, visibility) for the visible states.

    ``size_means`` has shape (rows, 2, 2): row, visibility (Clear, Truncated),
    (w, h). ``covariances`` has shape (rows, 4, 4) shared by both visibilities.
    """

    homography: Homography
    size_means: np.ndarray
    covariances: np.ndarray
    grid: AntennaGrid = field(default_factory=AntennaGrid)

    def __post_init__(self):
        self.size_means = np.asarray(self.size_means, dtype=float).reshape(ROWS, 2, 2)
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(ROWS, 4, 4)
        if np.any(self.size_means <= 0):
            raise DomainError("size means must be positive")
        self._blocks = [GaussianBlock(c) for c in self.covariances]
        self._centroids = self.homography.project_many(self.grid.world_coords())

    def centroid(self, cell: int) -> np.ndarray:
        return self._centroids[cell - 1]

    def centroids(self) -> np.ndarray:
        """(18, 2) projected antenna positions in image space."""
        return self._centroids

    def mean(self, cell: int, v: VisibilityState) -> np.ndarray:
        if v == VisibilityState.HIDDEN:
            raise DomainError("the Hidden state has no Gaussian mean")
        return np.concatenate([self.centroid(cell), self.size_means[cell_row(cell), int(v)]])

    def means_for(self, cells: np.ndarray, v: VisibilityState) -> np.ndarray:
        cells = np.asarray(cells, dtype=int)
        rows = (cells - 1) % ROWS
        return np.column_stack([self._centroids[cells - 1], self.size_means[rows, int(v)]])

    def block(self, cell: int) -> GaussianBlock:
        return self._blocks[cell_row(cell)]

    def log_density(self, x: np.ndarray, cells: np.ndarray, v: VisibilityState) -> np.ndarray:
        """Vectorised Gaussian log-density of (n, 4) boxes at per-row cells."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cells = np.broadcast_to(np.asarray(cells, dtype=int), (len(x),))
        means = self.means_for(cells, v)
        rows = (cells - 1) % ROWS
        out = np.empty(len(x))
        for r in np.unique(rows):
            sel = rows == r
            out[sel] = self._blocks[r].logpdf(x[sel], means[sel])
        return out

    def to_dict(self) -> dict:
        return {
            "homography": self.homography.m.tolist(),
            "size_means": self.size_means.tolist(),
            "covariances": self.covariances.tolist(),
            "grid": [self.grid.pitch_x, self.grid.pitch_y, self.grid.origin_x, self.grid.origin_y],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmissionModel":
        px, py, ox, oy = d.get("grid", [80.0, 80.0, 40.0, 40.0])
        return cls(Homography(np.array(d["homography"])), np.array(d["size_means"]),
                   np.array(d["covariances"]), AntennaGrid(px, py, ox, oy))


def bb_log_density(b: BoundingBox, p: int, v: VisibilityState, em: EmissionModel) -> float:
    """log p(box | antenna, visibility); the Hidden state emits only the Hidden box."""
    v = VisibilityState(v)
    if v == VisibilityState.HIDDEN:
        return 0.0 if b.hidden else -math.inf
    if b.hidden:
        return -math.inf
    return float(em.block(p).logpdf(b.as_array(), em.mean(p, v))[0])


@dataclass(eq=False)
class OutlierModel:
    """Independent centroid and size Gaussians for spurious boxes."""

    centroid_mean: np.ndarray
    centroid_cov: np.ndarray
    size_mean: np.ndarray
    size_cov: np.ndarray

    def __post_init__(self):
        self.centroid_mean = np.asarray(self.centroid_mean, dtype=float).reshape(2)
        self.size_mean = np.asarray(self.size_mean, dtype=float).reshape(2)
        self.centroid_cov = np.asarray(self.centroid_cov, dtype=float).reshape(2, 2)
        self.size_cov = np.asarray(self.size_cov, dtype=float).reshape(2, 2)
        self._cblock = GaussianBlock(self.centroid_cov)
        self._sblock = GaussianBlock(self.size_cov)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (self._cblock.logpdf(x[:, :2], self.centroid_mean)
                + self._sblock.logpdf(x[:, 2:], self.size_mean))

    def to_dict(self) -> dict:
        return {
            "centroid_mean": self.centroid_mean.tolist(),
            "centroid_cov": self.centroid_cov.tolist(),
            "size_mean": self.size_mean.tolist(),
            "size_cov": self.size_cov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutlierModel":
        return cls(d["centroid_mean"], d["centroid_cov"], d["size_mean"], d["size_cov"])


class EmissionSample(NamedTuple):
    box: BoundingBox
    cell: int
    visibility: VisibilityState
    exclude: bool = False


def _cov(resid: np.ndarray) -> np.ndarray:
    c = resid.T @ resid / len(resid)
    return (c + c.T) / 2.0


def fit_emission(samples: Iterable[EmissionSample], grid: AntennaGrid | None = None,
                 ridge: float = 1e-6, min_row_samples: int = 5) -> EmissionModel:
    """Fit centroid homography, per-(row, visibility) sizes and per-row covariances.

    Excluded (marginal) samples and Hidden samples are ignored. ``ridge`` is added
    to every covariance diagonal so the fit is positive definite even on
    noiseless data.
    """
    grid = grid or AntennaGrid()
    use = [s for s in samples
           if not s.exclude and s.visibility != VisibilityState.HIDDEN and not s.box.hidden]
    if not use:
        raise FitError("no usable annotations for the emission model")
    cells = np.array([s.cell for s in use], dtype=int)
    if np.any((cells < 1) | (cells > N_CELLS)):
        raise FitError("annotation paired to an invalid antenna cell")
    if len(np.unique(cells)) < 4:
        raise FitError(f"need data on at least 4 distinct antennas, got {len(np.unique(cells))}")
    boxes = np.array([s.box.as_list() for s in use])
    vis = np.array([int(s.visibility) for s in use])
    rows = (cells - 1) % ROWS

    world = grid.world_coords()[cells - 1]
    try:
        hom = fit_homography(world, boxes[:, :2])
    except FitError as e:
        raise FitError(f"centroid homography: {e}") from None
    hom = Homography(hom.m)

    size_means = np.full((ROWS, 2, 2), np.nan)
    for r in range(ROWS):
        for v in (0, 1):
            sel = (rows == r) & (vis == v)
            if sel.any():
                size_means[r, v] = boxes[sel, 2:].mean(axis=0)
    for v in (0, 1):
        glob = boxes[vis == v, 2:]
        for r in range(ROWS):
            if not np.isnan(size_means[r, v, 0]):
                continue
            other = size_means[r, 1 - v]
            if not np.isnan(other[0]):
                warnings.warn(f"row {r}: no {VisibilityState(v).name} sizes, borrowing "
                              f"{VisibilityState(1 - v).name}", FitWarning, stacklevel=2)
                size_means[r, v] = other
            elif len(glob):
                warnings.warn(f"row {r}: no sizes at all, using global {VisibilityState(v).name} mean",
                              FitWarning, stacklevel=2)
                size_means[r, v] = glob.mean(axis=0)
            else:
                warnings.warn(f"row {r}: no sizes at all, using global mean", FitWarning, stacklevel=2)
                size_means[r, v] = boxes[:, 2:].mean(axis=0)

    means = np.column_stack([hom.project_many(world), size_means[rows, vis]])
    resid = boxes - means
    pooled = _cov(resid)
    covs = np.empty((ROWS, 4, 4))
    for r in range(ROWS):
        sel = rows == r
        if sel.sum() < min_row_samples:
            warnings.warn(f"row {r}: {int(sel.sum())} samples < {min_row_samples}, "
                          "using globally pooled covariance", FitWarning, stacklevel=2)
            covs[r] = pooled
        else:
            covs[r] = _cov(resid[sel])
        covs[r] += ridge * np.eye(4)
    return EmissionModel(hom, size_means, covs, grid)


def fit_outlier(boxes: np.ndarray, image_size: tuple[float, float], breadth: float = 0.5,
                ridge: float = 1e-6) -> OutlierModel:
    """Broad centroid Gaussian over the image plus a size Gaussian fit to ``boxes``.

    The centroid standard deviation is ``breadth`` times the image dimension.
    """
    boxes = np.atleast_2d(np.asarray(boxes, dtype=float))
    if len(boxes) < 2:
        raise FitError("need at least two boxes to fit the outlier size model")
    width, height = image_size
    cmean = np.array([width / 2.0, height / 2.0])
    ccov = np.diag([(breadth * width) ** 2, (breadth * height) ** 2])
    sizes = boxes[:, 2:4]
    smean = sizes.mean(axis=0)
    scov = _cov(sizes - smean) + ridge * np.eye(2)
    return OutlierModel(cmean, ccov, smean, scov)
