"""Phase domains and the standard symplectic structures.

Conventions used throughout the package (all modules assume these):

* ``J e_{2i-1} = e_{2i}``, ``J e_{2i} = -e_{2i-1}`` (1-based indexing), so in
  two dimensions ``J = [[0, -1], [1, 0]]``.
* ``omega(u, v) = (J u) . v``, which makes ``omega(e1, e2) = +1``.
* The symplectic gradient of ``H`` is ``X_H = -J grad H``, the unique field
  with ``omega(X_H, .) = dH``.

On the sphere we work in the cylindrical chart ``(theta, z)`` with area form
``d theta ^ d z`` (total area ``4 pi``); the chart excludes the poles, and the
pair ``(theta, z)`` plays the role of ``(x1, x2)`` above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "J_matrix",
    "apply_J",
    "omega",
    "PhaseDomain",
    "euclidean",
    "sphere",
    "DomainError",
    "ChartError",
    "BoxGrid",
    "SphereGrid",
]


class DomainError(ValueError):
    """A point lies outside the phase domain."""


class ChartError(DomainError):
    """An operation touched the excluded pole region of the sphere chart."""


def J_matrix(dim: int) -> np.ndarray:
    """The standard complex structure on R^dim (dim even)."""
    if dim % 2 != 0 or dim < 2:
        raise ValueError(f"phase dimension must be even and >= 2, got {dim}")
    J = np.zeros((dim, dim))
    for i in range(0, dim, 2):
        J[i + 1, i] = 1.0
        J[i, i + 1] = -1.0
    return J


def apply_J(x: np.ndarray) -> np.ndarray:
    """Apply J to vectors stored in the last axis (vectorized, no matmul)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def omega(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """omega(u, v) = (J u) . v, vectorized over leading axes."""
    return np.sum(apply_J(u) * np.asarray(v, dtype=float), axis=-1)


@dataclass(frozen=True)
class PhaseDomain:
    """Euclidean R^2n or the 2-sphere in the (theta, z) chart.

    ``bounds`` only matters for Euclidean domains; it is the box used by
    default grids and containment checks (constructions in this package are
    compactly supported, so a box is all that is needed).
    """

    kind: str  # "euclidean" | "sphere"
    dim: int = 2
    bounds: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    pole_eps: float = 1e-3  # sphere pole-cap half-height in z

    def __post_init__(self):
        if self.kind not in ("euclidean", "sphere"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "sphere" and self.dim != 2:
            raise ValueError("sphere domain is 2-dimensional")
        if self.dim % 2 != 0 or self.dim < 2:
            raise ValueError("dimension must be even and >= 2")

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    @property
    def total_area(self) -> float:
        if not self.is_sphere:
            raise DomainError("total area is only defined for the sphere")
        return 4.0 * np.pi

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_sphere:
            return np.abs(x[..., 1]) <= 1.0
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(self.bounds):
            ok &= (x[..., i] >= lo) & (x[..., i] <= hi)
        return ok

    def check_chart(self, x: np.ndarray):
        """Raise ChartError if a sphere point sits in a pole cap."""
        if not self.is_sphere:
            return
        z = np.asarray(x, dtype=float)[..., 1]
        if np.any(np.abs(z) > 1.0 - self.pole_eps):
            raise ChartError(
                f"point with |z| > {1 - self.pole_eps} lies in a pole cap of the "
                "(theta, z) chart"
            )

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Wrap theta into [0, 2 pi) on the sphere; identity elsewhere."""
        if not self.is_sphere:
            return x
        out = np.array(x, dtype=float, copy=True)
        out[..., 0] = np.mod(out[..., 0], 2.0 * np.pi)
        return out

    def scale(self) -> float:
        """A length scale of the domain, used for default tolerances."""
        if self.is_sphere:
            return 2.0 * np.pi
        return max(hi - lo for lo, hi in self.bounds)


def euclidean(dim: int = 2, bounds=None) -> PhaseDomain:
    if bounds is None:
        bounds = tuple((-1.0, 1.0) for _ in range(dim))
    return PhaseDomain(kind="euclidean", dim=dim, bounds=tuple(bounds))


def sphere(pole_eps: float = 1e-3) -> PhaseDomain:
    return PhaseDomain(kind="sphere", dim=2, bounds=((0.0, 2 * np.pi), (-1.0, 1.0)),
                       pole_eps=pole_eps)


@dataclass
class BoxGrid:
    """Uniform sampling grid on a Euclidean box (2D in practice).

    ``points`` has shape (N, dim); ``shape`` is the per-axis resolution.
    Adjacency (for clustering extremum cells) is the usual grid adjacency.
    """

    bounds: tuple
    shape: tuple
    points: np.ndarray = field(repr=False, default=None)
    axes: tuple = field(repr=False, default=None)

    @classmethod
    def make(cls, bounds, shape) -> "BoxGrid":
        axes = tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, shape))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return cls(bounds=tuple(bounds), shape=tuple(shape), points=pts, axes=axes)

    def refine(self, factor: int = 2) -> "BoxGrid":
        shape = tuple((n - 1) * factor + 1 for n in self.shape)
        return BoxGrid.make(self.bounds, shape)

    @property
    def spacing(self):
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.shape))

    def values_as_array(self, vals: np.ndarray) -> np.ndarray:
        return np.asarray(vals).reshape(self.shape)

    @property
    def periodic_axes(self):
        return ()


@dataclass
class SphereGrid:
    """Grid on the sphere chart: theta periodic, z including both pole rows.

    All theta-cells of a pole row refer to the same geometric point, which
    matters when extremum cells are clustered.
    """

    n_theta: int
    n_z: int
    points: np.ndarray = field(repr=False, default=None)
    axes: tuple = field(repr=False, default=None)

    @classmethod
    def make(cls, n_theta: int = 96, n_z: int = 97) -> "SphereGrid":
        thetas = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
        zs = np.linspace(-1.0, 1.0, n_z)
        T, Z = np.meshgrid(thetas, zs, indexing="ij")
        pts = np.stack([T.ravel(), Z.ravel()], axis=-1)
        return cls(n_theta=n_theta, n_z=n_z, points=pts, axes=(thetas, zs))

    def refine(self, factor: int = 2) -> "SphereGrid":
        return SphereGrid.make(self.n_theta * factor, (self.n_z - 1) * factor + 1)

    @property
    def shape(self):
        return (self.n_theta, self.n_z)

    @property
    def spacing(self):
        return (2 * np.pi / self.n_theta, 2.0 / (self.n_z - 1))

    def values_as_array(self, vals: np.ndarray) -> np.ndarray:
        return np.asarray(vals).reshape(self.shape)

    @property
    def periodic_axes(self):
        return (0,)
