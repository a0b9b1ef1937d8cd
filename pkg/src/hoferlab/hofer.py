"""Hofer length, extremum sets, fixed extrema, geodesic and criticality checks.

Extremum sets are grid-cell clusters within a relative tolerance of the
extreme level; intersections over time are cell-wise with a one-cell dilation
to absorb drift.  Lengths integrate the total variation of the generating
Hamiltonian with composite Simpson on the path's uniform time grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.integrate import simpson
from scipy.optimize import minimize

from .core.domain import BoxGrid, PhaseDomain, SphereGrid
from .core.flow import IsotopyPath, flow_points
from .core.hamiltonian import Hamiltonian, fd_hessian

__all__ = [
    "default_grid",
    "total_variation",
    "ExtremumSet",
    "extremum_sets",
    "FixedExtremaReport",
    "fixed_extrema",
    "hofer_length",
    "WindowVerdict",
    "geodesic_check",
    "lcritical_check",
    "SmoothPointReport",
    "smooth_point_necessary_check",
    "ContinuityError",
    "first_variation",
    "TangentField",
]

DEFAULT_TOL_EXT = 1e-6


class ContinuityError(RuntimeError):
    """The continuity hypothesis could not be certified for a variation."""


def default_grid(domain: PhaseDomain, resolution: int = 129):
    if domain.is_sphere:
        return SphereGrid.make(n_theta=resolution - 1, n_z=resolution)
    return BoxGrid.make(domain.bounds, tuple(resolution for _ in domain.bounds))


def _clip_to_domain(x, grid):
    if isinstance(grid, SphereGrid):
        x = np.array(x, dtype=float, copy=True)
        x[1] = np.clip(x[1], -1.0, 1.0)
        return x
    x = np.array(x, dtype=float, copy=True)
    for i, (lo, hi) in enumerate(grid.bounds):
        x[i] = np.clip(x[i], lo, hi)
    return x


def total_variation(H: Hamiltonian, t: float, grid, refine: bool = True) -> float:
    """sup H_t - inf H_t over the grid, refined by local optimization.

    ``grid`` may be a BoxGrid/SphereGrid or an explicit (N, dim) point array.
    """
    pts = grid if isinstance(grid, np.ndarray) else grid.points
    if len(pts) == 0:
        raise ValueError("empty sampling grid")
    vals = H.value(t, pts)
    i_max = int(np.argmax(vals))
    i_min = int(np.argmin(vals))
    vmax, vmin = float(vals[i_max]), float(vals[i_min])
    if refine and not isinstance(grid, np.ndarray):
        vmax = _refine_extremum(H, t, pts[i_max], grid, sign=+1.0, fallback=vmax)
        vmin = _refine_extremum(H, t, pts[i_min], grid, sign=-1.0, fallback=vmin)
    return vmax - vmin


def _refine_extremum(H, t, x0, grid, sign, fallback):
    # sign=+1 refines a maximum, sign=-1 a minimum; never worse than the grid
    def obj(x):
        return -sign * float(H.value(t, _clip_to_domain(x, grid)))

    res = minimize(obj, np.asarray(x0, dtype=float), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
    if sign > 0:
        return max(-res.fun, fallback)
    return min(res.fun, fallback)


def hofer_length(path: IsotopyPath, grid=None, refine: bool = True) -> float:
    """L = int TotVar H_t dt, composite Simpson on the path's time grid."""
    if grid is None:
        grid = default_grid(path.domain)
    vals = [total_variation(path.H, t, grid, refine=refine) for t in path.times]
    return float(simpson(vals, x=path.times))


# ---------------------------------------------------------------------------
# extremum sets and fixed extrema
# ---------------------------------------------------------------------------


@dataclass
class ExtremumSet:
    """Grid cells within tol_ext * range of the extreme level at one time."""

    t: float
    level: float
    kind: str  # "min" | "max"
    mask: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    n_clusters: int = 0
    cluster_diameter_cells: int = 0

    @property
    def is_singleton(self) -> bool:
        # one cluster of at most a few cells across
        return self.n_clusters == 1 and self.cluster_diameter_cells <= 3


def _cluster_info(mask: np.ndarray, grid):
    """Number of clusters and max cell-diameter, respecting periodicity/poles."""
    structure = np.ones((3,) * mask.ndim, dtype=bool)
    lab, n = ndimage.label(mask, structure=structure)
    if isinstance(grid, SphereGrid):
        # glue across the theta seam
        seam = (lab[0, :] > 0) & (lab[-1, :] > 0)
        for j in np.nonzero(seam)[0]:
            a, b = lab[0, j], lab[-1, j]
            if a != b:
                lab[lab == b] = a
        # pole rows are single geometric points
        for j in (0, mask.shape[1] - 1):
            col = lab[:, j]
            live = np.unique(col[col > 0])
            if len(live) > 1:
                for b in live[1:]:
                    lab[lab == b] = live[0]
            if len(live) >= 1 and np.any(col > 0):
                lab[:, j][mask[:, j]] = live[0] if len(live) else 0
    labels = np.unique(lab[lab > 0])
    n = len(labels)
    diam = 0
    for lb in labels:
        idx = np.argwhere(lab == lb)
        if isinstance(grid, SphereGrid) and np.any(np.isin(idx[:, 1], [0, mask.shape[1] - 1])):
            # a pole cluster counts as one cell
            interior = idx[~np.isin(idx[:, 1], [0, mask.shape[1] - 1])]
            if len(interior) == 0:
                diam = max(diam, 1)
                continue
            idx = interior
        span = idx.max(axis=0) - idx.min(axis=0) + 1
        diam = max(diam, int(span.max()))
    return n, diam


def extremum_sets(H: Hamiltonian, t: float, grid, tol_ext: float = DEFAULT_TOL_EXT):
    """(minset, maxset) of H_t as grid-cell clusters."""
    pts = grid.points
    vals = np.asarray(H.value(t, pts))
    vmin, vmax = float(vals.min()), float(vals.max())
    rng = vmax - vmin
    slack = tol_ext * (rng if rng > 0 else 1.0)
    arr = grid.values_as_array(vals)
    min_mask = arr <= vmin + slack
    max_mask = arr >= vmax - slack
    sets = []
    for kind, mask, level in (("min", min_mask, vmin), ("max", max_mask, vmax)):
        n, diam = _cluster_info(mask, grid)
        sets.append(ExtremumSet(t=t, level=level, kind=kind, mask=mask,
                                points=pts[mask.ravel()], n_clusters=n,
                                cluster_diameter_cells=diam))
    return sets[0], sets[1]


@dataclass
class FixedExtremaReport:
    times: np.ndarray
    min_mask: np.ndarray = field(repr=False)
    max_mask: np.ndarray = field(repr=False)
    fixed_minima: np.ndarray = field(repr=False)
    fixed_maxima: np.ndarray = field(repr=False)

    @property
    def has_fixed_minimum(self) -> bool:
        return bool(np.any(self.min_mask))

    @property
    def has_fixed_maximum(self) -> bool:
        return bool(np.any(self.max_mask))

    def to_dict(self):
        return {
            "has_fixed_minimum": self.has_fixed_minimum,
            "has_fixed_maximum": self.has_fixed_maximum,
            "n_fixed_min_cells": int(np.count_nonzero(self.min_mask)),
            "n_fixed_max_cells": int(np.count_nonzero(self.max_mask)),
            "fixed_minima": self.fixed_minima.tolist(),
            "fixed_maxima": self.fixed_maxima.tolist(),
        }


def fixed_extrema(path: IsotopyPath, grid=None, tol_ext: float = DEFAULT_TOL_EXT,
                  times=None, dilate: int = 1) -> FixedExtremaReport:
    """Cell-wise intersection of extremum sets over the sampled times.

    Masks are dilated by one cell before intersecting, absorbing drift of the
    exact extremum within a cell.
    """
    if grid is None:
        grid = default_grid(path.domain)
    ts = path.times if times is None else np.asarray(times)
    structure = np.ones((3,) * len(grid.shape), dtype=bool)
    min_acc = None
    max_acc = None
    for t in ts:
        mn, mx = extremum_sets(path.H, t, grid, tol_ext)
        m1, m2 = mn.mask, mx.mask
        if dilate:
            m1 = ndimage.binary_dilation(m1, structure=structure, iterations=dilate)
            m2 = ndimage.binary_dilation(m2, structure=structure, iterations=dilate)
        min_acc = m1 if min_acc is None else (min_acc & m1)
        max_acc = m2 if max_acc is None else (max_acc & m2)
    pts = grid.points
    return FixedExtremaReport(
        times=ts,
        min_mask=min_acc,
        max_mask=max_acc,
        fixed_minima=pts[min_acc.ravel()],
        fixed_maxima=pts[max_acc.ravel()],
    )


@dataclass
class WindowVerdict:
    a: float
    b: float
    has_fixed_minimum: bool
    has_fixed_maximum: bool

    @property
    def passed(self) -> bool:
        return self.has_fixed_minimum and self.has_fixed_maximum

    def to_dict(self):
        return {"a": self.a, "b": self.b, "has_fixed_minimum": self.has_fixed_minimum,
                "has_fixed_maximum": self.has_fixed_maximum, "passed": self.passed}


def geodesic_check(path: IsotopyPath, n_windows: int = 16, grid=None,
                   tol_ext: float = DEFAULT_TOL_EXT, samples_per_window: int = 9):
    """Necessary geodesic criterion: fixed extrema on every time window."""
    if grid is None:
        grid = default_grid(path.domain)
    edges = np.linspace(0.0, 1.0, n_windows + 1)
    verdicts = []
    for a, b in zip(edges[:-1], edges[1:]):
        ts = np.linspace(a, b, samples_per_window)
        rep = fixed_extrema(path, grid=grid, tol_ext=tol_ext, times=ts)
        verdicts.append(WindowVerdict(a=float(a), b=float(b),
                                      has_fixed_minimum=rep.has_fixed_minimum,
                                      has_fixed_maximum=rep.has_fixed_maximum))
    return verdicts


def lcritical_check(path: IsotopyPath, grid=None, tol_ext: float = DEFAULT_TOL_EXT,
                    n_samples: int = 33) -> WindowVerdict:
    """Criticality criterion over the whole interval [0, 1]."""
    if grid is None:
        grid = default_grid(path.domain)
    ts = np.linspace(0.0, 1.0, n_samples)
    rep = fixed_extrema(path, grid=grid, tol_ext=tol_ext, times=ts)
    return WindowVerdict(a=0.0, b=1.0, has_fixed_minimum=rep.has_fixed_minimum,
                         has_fixed_maximum=rep.has_fixed_maximum)


@dataclass
class SmoothPointReport:
    passed: bool
    exceptional_fraction: float
    min_always_singleton_intersection: bool
    max_always_singleton_intersection: bool

    def to_dict(self):
        return self.__dict__.copy()


def smooth_point_necessary_check(path: IsotopyPath, grid=None,
                                 tol_ext: float = DEFAULT_TOL_EXT,
                                 n_samples: int = 41,
                                 exceptional_threshold: float = 0.05) -> SmoothPointReport:
    """Necessary condition for smoothness of the length functional.

    Checks that minset and maxset are singleton cell clusters at all sampled
    times except a reported fraction, and that the intersections over all
    times are themselves singletons.
    """
    if grid is None:
        grid = default_grid(path.domain)
    ts = np.linspace(0.0, 1.0, n_samples)
    bad = 0
    for t in ts:
        mn, mx = extremum_sets(path.H, t, grid, tol_ext)
        if not (mn.is_singleton and mx.is_singleton):
            bad += 1
    frac = bad / len(ts)
    rep = fixed_extrema(path, grid=grid, tol_ext=tol_ext, times=ts)
    n_min, _ = _cluster_info(rep.min_mask, grid)
    n_max, _ = _cluster_info(rep.max_mask, grid)
    ok_min = n_min == 1
    ok_max = n_max == 1
    return SmoothPointReport(
        passed=(frac <= exceptional_threshold) and ok_min and ok_max,
        exceptional_fraction=float(frac),
        min_always_singleton_intersection=ok_min,
        max_always_singleton_intersection=ok_max,
    )


# ---------------------------------------------------------------------------
# first variation
# ---------------------------------------------------------------------------


@dataclass
class TangentField:
    """A tangent vector field along a path: functions G_t with G_0 = G_1 = 0.

    ``H`` is the underlying Hamiltonian family (with .dt giving dG_t/dt);
    separable fields a(t) g(x) get exact time derivatives.
    """

    H: Hamiltonian

    def dt(self, t, x):
        return self.H.dt(t, x)

    def endpoint_defect(self, pts) -> float:
        v0 = np.max(np.abs(self.H.value(0.0, pts)))
        v1 = np.max(np.abs(self.H.value(1.0, pts)))
        return float(max(v0, v1))


def _certify_continuity(path, grid, tol_ext, ts):
    """Sufficient condition: singleton nondegenerate extrema at all times."""
    for t in ts:
        mn, mx = extremum_sets(path.H, t, grid, tol_ext)
        if not (mn.is_singleton and mx.is_singleton):
            return False, f"extremum sets not singletons at t={t:.4f}"
        p = mn.points.mean(axis=0)
        P = mx.points.mean(axis=0)
        sp = min(grid.spacing)
        Bp = fd_hessian(path.H, t, p, h=2 * sp)
        BP = fd_hessian(path.H, t, P, h=2 * sp)
        if np.linalg.eigvalsh(Bp).min() <= 0:
            return False, f"minimum degenerate at t={t:.4f}"
        if np.linalg.eigvalsh(BP).max() >= 0:
            return False, f"maximum degenerate at t={t:.4f}"
    return True, ""


def first_variation(path: IsotopyPath, G: TangentField, grid=None,
                    tol_ext: float = DEFAULT_TOL_EXT,
                    assume_continuity: bool = False) -> float:
    """int_0^1 ( sup_{maxset} dG_t/dt - inf_{minset} dG_t/dt ) dt.

    Refuses when the continuity hypothesis is neither forced by the caller
    nor certified by the sufficient condition (singleton nondegenerate
    extrema at every sampled time).
    """
    if grid is None:
        grid = default_grid(path.domain)
    ts = path.times
    if not assume_continuity:
        ok, why = _certify_continuity(path, grid, tol_ext, ts[:: max(1, len(ts) // 16)])
        if not ok:
            raise ContinuityError(
                "continuity hypothesis not certified: " + why +
                " (pass assume_continuity=True to force)")
    defect = G.endpoint_defect(grid.points)
    if defect > 1e-8 * max(1.0, float(np.max(np.abs(G.H.value(0.5, grid.points))))):
        raise ValueError(f"tangent field does not vanish at t=0,1 (defect {defect:.2e})")
    integrand = []
    for t in ts:
        mn, mx = extremum_sets(path.H, t, grid, tol_ext)
        gdot_min = G.dt(t, mn.points)
        gdot_max = G.dt(t, mx.points)
        integrand.append(float(np.max(gdot_max) - np.min(gdot_min)))
    return float(simpson(integrand, x=ts))
