"""Grid-backed open sets and scalar fields on flat tori.

RegionMask stores cell weights in [0, 1] on a uniform periodic grid; the set
it represents is {weight > 1/2}. Set algebra is cellwise, metric operations
(fatten/erode) are morphological with wrap-around, and flow preimages are
taken by sampling after integrating the grid forward.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fields import field_values
from .flow import integrate_flow, DEFAULT_STEP


def _disk_footprint(radius_cells, dim):
    r = max(1, int(np.ceil(radius_cells)))
    axes = [np.arange(-r, r + 1)] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    return sum(g * g for g in grids) <= radius_cells ** 2


def _grid_points(resolution, dim):
    axes = [np.arange(resolution) / resolution] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@dataclass
class RegionMask:
    resolution: int
    weights: np.ndarray     # shape (resolution,)*dim, values in [0, 1]

    @property
    def dim(self):
        return self.weights.ndim

    @property
    def indicator(self):
        return self.weights > 0.5

    @property
    def measure(self):
        return float(self.indicator.mean())

    @classmethod
    def empty(cls, resolution, dim):
        return cls(resolution, np.zeros((resolution,) * dim))

    @classmethod
    def full(cls, resolution, dim):
        return cls(resolution, np.ones((resolution,) * dim))

    @classmethod
    def from_points(cls, points, resolution, dim, radius=0.0):
        """Mark the cells hit by `points`, optionally fattened by `radius`."""
        m = cls.empty(resolution, dim)
        idx = np.mod(np.round(np.asarray(points) * resolution).astype(int),
                     resolution)
        m.weights[tuple(idx.T)] = 1.0
        if radius > 0:
            return m.fatten(radius)
        return m

    def union(self, other):
        return RegionMask(self.resolution, np.maximum(self.weights, other.weights))

    def intersection(self, other):
        return RegionMask(self.resolution, np.minimum(self.weights, other.weights))

    def complement(self):
        return RegionMask(self.resolution, 1.0 - self.weights)

    def difference(self, other):
        return self.intersection(other.complement())

    def fatten(self, eps):
        foot = _disk_footprint(eps * self.resolution, self.dim)
        w = ndimage.grey_dilation(self.weights, footprint=foot, mode="wrap")
        return RegionMask(self.resolution, w)

    def erode(self, eps):
        foot = _disk_footprint(eps * self.resolution, self.dim)
        w = ndimage.grey_erosion(self.weights, footprint=foot, mode="wrap")
        return RegionMask(self.resolution, w)

    def smoothed(self, sigma):
        """Gaussian-mollified weights (sigma in torus units)."""
        w = ndimage.gaussian_filter(self.weights, sigma * self.resolution,
                                    mode="wrap")
        return RegionMask(self.resolution, w)

    def distance_field(self):
        """Torus distance (in coordinate units) from each cell to the set.

        Computed by a Euclidean distance transform on a 3^dim tiling, which is
        exact for distances up to half the fundamental domain.
        """
        ind = self.indicator
        tiled = np.tile(ind, (3,) * self.dim)
        dist = ndimage.distance_transform_edt(~tiled)
        sl = tuple(slice(self.resolution, 2 * self.resolution)
                   for _ in range(self.dim))
        return dist[sl] / self.resolution

    def sample(self, points):
        """Multilinear periodic interpolation of the weights at `points`."""
        pts = np.mod(np.atleast_2d(points), 1.0) * self.resolution
        coords = [pts[:, i] for i in range(self.dim)]
        return ndimage.map_coordinates(self.weights, coords, order=1,
                                       mode="grid-wrap")

    def contains(self, points):
        return self.sample(points) > 0.5

    def preimage(self, spec, t=1.0, step=DEFAULT_STEP):
        """Mask of {x : flow_t(x) in self} on the same grid (binary weights)."""
        pts = _grid_points(self.resolution, self.dim)
        ahead = integrate_flow(spec, pts, t, step=step)
        w = (self.sample(ahead) > 0.5).astype(float).reshape(self.weights.shape)
        return RegionMask(self.resolution, w)

    def stabilize_backward(self, spec, t=1.0, max_iter=60, step=DEFAULT_STEP):
        """Union with flow preimages until the cell set stops growing.

        The result is backward-invariant at grid resolution: points whose
        forward orbit enters the set are absorbed.
        """
        cur = self
        for _ in range(max_iter):
            nxt = cur.union(cur.preimage(spec, t, step=step))
            if np.array_equal(nxt.indicator, cur.indicator):
                return nxt
        return cur


@dataclass
class ScalarFieldGrid:
    """Scalar samples on a uniform periodic grid with trigonometric interpolation."""

    values: np.ndarray      # shape (resolution,)*dim

    @property
    def resolution(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.ndim

    @classmethod
    def from_function(cls, fn, resolution, dim):
        pts = _grid_points(resolution, dim)
        vals = np.asarray(fn(pts), float).reshape((resolution,) * dim)
        return cls(vals)

    def _coeffs(self):
        return np.fft.fftn(self.values) / self.values.size

    def __call__(self, points):
        """Evaluate the trigonometric interpolant at arbitrary points."""
        pts = np.atleast_2d(np.asarray(points, float))
        c = self._coeffs()
        n = self.resolution
        freqs = np.fft.fftfreq(n, d=1.0 / n)
        if self.dim == 1:
            phases = np.exp(2j * np.pi * pts[:, 0, None] * freqs[None, :])
            out = phases @ c
        elif self.dim == 2:
            ex = np.exp(2j * np.pi * pts[:, 0, None] * freqs[None, :])
            ey = np.exp(2j * np.pi * pts[:, 1, None] * freqs[None, :])
            out = np.einsum("pa,ab,pb->p", ex, c, ey)
        else:
            raise NotImplementedError("interpolation implemented for dim <= 2")
        return np.real(out)

    def sample_linear(self, points):
        """Multilinear periodic evaluation; robust where the samples are steep."""
        pts = np.mod(np.atleast_2d(points), 1.0) * self.resolution
        coords = [pts[:, i] for i in range(self.dim)]
        return ndimage.map_coordinates(self.values, coords, order=1,
                                       mode="grid-wrap")

    def lowpass(self, mode_cutoff):
        """Drop Fourier modes above the cutoff (in integer frequency)."""
        c = np.fft.fftn(self.values)
        n = self.resolution
        freqs = np.fft.fftfreq(n, d=1.0 / n)
        keep = np.abs(freqs) <= mode_cutoff
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = n
            c = c * keep.reshape(shape)
        return ScalarFieldGrid(np.real(np.fft.ifftn(c)))

    def gradient_grids(self):
        """Exact gradient of the interpolant, sampled on the grid."""
        c = np.fft.fftn(self.values)
        n = self.resolution
        freqs = np.fft.fftfreq(n, d=1.0 / n)
        # drop the unmatched Nyquist mode so derivatives stay real-symmetric
        if n % 2 == 0:
            freqs[n // 2] = 0.0
        grids = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = n
            k = freqs.reshape(shape)
            grids.append(ScalarFieldGrid(
                np.real(np.fft.ifftn(2j * np.pi * k * c))))
        return grids

    def lie_derivative(self, spec):
        """Directional derivative along the field, exact for the interpolant."""
        grads = self.gradient_grids()
        pts = _grid_points(self.resolution, self.dim)
        v = field_values(spec, pts)
        out = np.zeros(len(pts))
        for ax, g in enumerate(grads):
            out += v[:, ax] * g.values.ravel()
        return ScalarFieldGrid(out.reshape(self.values.shape))

    def minimum(self):
        return float(self.values.min())

    def maximum(self):
        return float(self.values.max())
