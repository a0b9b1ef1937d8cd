"""Linearized flows at fixed extrema: monodromy and closed trajectories.

The linearized isotopy of a 2-jet family ``H~_t(x) = 0.5 x . B_t x`` is the
fundamental solution of ``L' = -J B_t L`` with ``L_0 = I``.  Non-trivial
closed trajectories ``L_{t'} x = x`` in the open interval (0, 1) obstruct
stability; this module detects them, computes 2D rotation numbers, and scans
for rescaling parameters lambda in (0, 1) at which ``lambda B_t`` closes up
in time one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .core.domain import J_matrix
from .core.flow import IsotopyPath
from .core.hamiltonian import Hamiltonian, SphereProfileHamiltonian, fd_hessian
from . import hofer

__all__ = [
    "HessianPath",
    "Monodromy",
    "fundamental_solution",
    "ClosureWitness",
    "closed_trajectory_in_time",
    "closure_times",
    "lambda_conjugate",
    "rotation_number_2d",
    "StabilityReport",
    "ExtremumEvidence",
    "stability_necessary_check",
    "NonIsolatedExtremaError",
]

DEFAULT_TOL_EIG = 1e-8
DEFAULT_N_SCAN = 512
BOUNDARY_TOL = 1e-6  # closures within this of an endpoint are not interior


class NonIsolatedExtremaError(RuntimeError):
    """Fixed extrema are not isolated; the stability criterion refuses."""


@dataclass
class HessianPath:
    """Symmetric 2-jet family B_t, with the extremum kind it came from."""

    B: object  # callable t -> (d, d) symmetric
    sign: str = "min"  # "min" (B >= 0 expected) or "max"
    dim: int = 2

    @classmethod
    def constant(cls, B0, sign: str = "min") -> "HessianPath":
        B0 = 0.5 * (np.asarray(B0, dtype=float) + np.asarray(B0, dtype=float).T)
        return cls(B=lambda t: B0, sign=sign, dim=B0.shape[0])

    @classmethod
    def from_samples(cls, times, mats, sign: str = "min") -> "HessianPath":
        times = np.asarray(times, dtype=float)
        mats = np.asarray(mats, dtype=float)
        mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))

        def B(t):
            t = float(np.clip(t, times[0], times[-1]))
            i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
            w = (t - times[i]) / (times[i + 1] - times[i])
            return (1 - w) * mats[i] + w * mats[i + 1]

        return cls(B=B, sign=sign, dim=mats.shape[-1])

    @classmethod
    def from_hamiltonian(cls, H: Hamiltonian, point, times, sign: str = "min",
                         h: float | None = None) -> "HessianPath":
        mats = [fd_hessian(H, t, np.asarray(point, dtype=float), h=h) for t in times]
        return cls.from_samples(times, mats, sign=sign)

    def at(self, t) -> np.ndarray:
        M = np.asarray(self.B(t), dtype=float)
        scale = max(1.0, float(np.max(np.abs(M))))
        if np.max(np.abs(M - M.T)) > 1e-12 * scale:
            raise ValueError(f"B_t not symmetric at t={t}")
        return 0.5 * (M + M.T)

    def scaled(self, lam: float) -> "HessianPath":
        return HessianPath(B=lambda t: lam * self.at(t), sign=self.sign, dim=self.dim)


@dataclass
class Monodromy:
    """Fundamental solution L_t on [0, t'] with dense evaluation."""

    t_prime: float
    times: np.ndarray
    L: np.ndarray = field(repr=False)  # (K, d, d)
    symplecticity_defect: float = 0.0
    _dense: object = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.L[-1]

    def at(self, t) -> np.ndarray:
        d = self.L.shape[-1]
        return np.asarray(self._dense(t), dtype=float).reshape(d, d)


def fundamental_solution(B: HessianPath, t_prime: float = 1.0, tol: float = 1e-10,
                         n_samples: int = 129) -> Monodromy:
    """Solve L' = -J B_t L, L_0 = I, reporting the symplecticity defect."""
    if not (0.0 < t_prime):
        raise ValueError("t' must be positive")
    d = B.dim
    J = J_matrix(d)

    def rhs(t, y):
        L = y.reshape(d, d)
        return (-J @ B.at(t) @ L).ravel()

    ts = np.linspace(0.0, t_prime, n_samples)
    sol = solve_ivp(rhs, (0.0, t_prime), np.eye(d).ravel(), method="RK45",
                    rtol=tol, atol=tol, dense_output=True, t_eval=ts)
    if not sol.success:
        raise RuntimeError(f"monodromy integration failed: {sol.message}")
    L = sol.y.T.reshape(len(ts), d, d)
    defect = float(max(np.max(np.abs(Li.T @ J @ Li - J)) for Li in L))
    return Monodromy(t_prime=t_prime, times=ts, L=L,
                     symplecticity_defect=defect, _dense=lambda t: sol.sol(t))


@dataclass
class ClosureWitness:
    t_prime: float
    vector: np.ndarray
    residual: float
    eigenvalue_gap: float

    def to_dict(self):
        return {"t_prime": self.t_prime, "vector": self.vector.tolist(),
                "residual": self.residual, "eigenvalue_gap": self.eigenvalue_gap}


def _fixed_vector(L):
    """Best real fixed vector of L: smallest singular vector of L - I."""
    d = L.shape[0]
    U, s, Vt = np.linalg.svd(L - np.eye(d))
    x = Vt[-1]
    x = x / np.linalg.norm(x)
    return x, float(np.linalg.norm(L @ x - x))


def closure_times(B: HessianPath, t_max: float = 1.0, tol_eig: float = DEFAULT_TOL_EIG,
                  n_scan: int = DEFAULT_N_SCAN, include_endpoint: bool = True,
                  tol: float = 1e-11):
    """All t' in (0, t_max] where L_{t'} has eigenvalue 1 with a real fixed vector.

    Zeros of f(t) = det(L_t - I) are located by sign-change bisection and,
    for tangential zeros (rotation-like monodromies touch zero from one
    side), by refining local minima of |f|.
    """
    mono = fundamental_solution(B, t_max, tol=tol, n_samples=max(n_scan + 1, 257))
    d = B.dim
    I = np.eye(d)
    ts = np.linspace(0.0, t_max, n_scan + 1)

    def f(t):
        return float(np.linalg.det(mono.at(t) - I))

    fs = np.array([f(t) for t in ts])
    roots = []
    # transversal sign changes
    for i in range(1, len(ts)):
        if fs[i - 1] == 0.0:
            roots.append(ts[i - 1])
        elif fs[i - 1] * fs[i] < 0:
            roots.append(brentq(f, ts[i - 1], ts[i], xtol=1e-14))
    # tangential zeros: local minima of |f|
    af = np.abs(fs)
    for i in range(1, len(ts) - 1):
        if af[i] <= af[i - 1] and af[i] <= af[i + 1]:
            res = minimize_scalar(lambda t: abs(f(t)), bounds=(ts[i - 1], ts[i + 1]),
                                  method="bounded", options={"xatol": 1e-14})
            if abs(res.fun) <= tol_eig:
                roots.append(float(res.x))
    if af[-1] < tol_eig:
        roots.append(ts[-1])
    # merge events found by both detectors, keeping the sharpest zero
    merge_tol = max(1e-10, t_max / n_scan * 1e-2)
    merged = []
    for t in sorted(roots):
        if merged and t - merged[-1] <= merge_tol:
            if abs(f(t)) < abs(f(merged[-1])):
                merged[-1] = t
            continue
        merged.append(t)
    found = []
    for t in merged:
        if t <= BOUNDARY_TOL:
            continue
        if not include_endpoint and t >= t_max - BOUNDARY_TOL:
            continue
        L = mono.at(t)
        eigs = np.linalg.eigvals(L)
        gap = float(np.min(np.abs(eigs - 1.0)))
        if gap > np.sqrt(tol_eig):
            continue
        x, resid = _fixed_vector(L)
        if resid > np.sqrt(tol_eig):
            continue
        # non-trivial means the trajectory L_s x, s in [0, t], is not a point
        amp = max(float(np.linalg.norm(mono.at(s) @ x - x))
                  for s in np.linspace(0.0, t, 17))
        if amp <= np.sqrt(tol_eig):
            continue
        if not found or t - found[-1].t_prime > 1e-9:
            found.append(ClosureWitness(t_prime=float(t), vector=x,
                                        residual=resid, eigenvalue_gap=gap))
    return found, mono


def closed_trajectory_in_time(B: HessianPath, t_max: float = 1.0,
                              tol_eig: float = DEFAULT_TOL_EIG,
                              n_scan: int = DEFAULT_N_SCAN,
                              open_interval: bool = True):
    """Smallest t' in the (open) interval with a non-trivial closed trajectory.

    Returns a :class:`ClosureWitness` or None.  With ``open_interval`` the
    scan covers (0, t_max); closures at exactly t_max are excluded, matching
    the stability criterion.
    """
    witnesses, _ = closure_times(B, t_max=t_max, tol_eig=tol_eig, n_scan=n_scan,
                                 include_endpoint=not open_interval)
    return witnesses[0] if witnesses else None


def lambda_conjugate(B: HessianPath, tol_eig: float = DEFAULT_TOL_EIG,
                     n_scan: int = 256, tol: float = 1e-11):
    """Smallest lambda in (0, 1) at which lambda B_t closes up in time 1.

    Returns (lambda, alpha) with alpha the closed trajectory sampled on the
    monodromy grid, or None when no conjugate rescaling exists (evidence for
    stability).  Canonical in dimension 2; works for any dimension.
    """
    d = B.dim
    I = np.eye(d)

    def g(lam):
        mono = fundamental_solution(B.scaled(lam), 1.0, tol=tol, n_samples=9)
        return float(np.linalg.det(mono.final - I))

    lams = np.linspace(0.0, 1.0, n_scan + 1)[1:]
    gs = np.array([g(l) for l in lams])
    candidates = []
    for i in range(1, len(lams)):
        if gs[i - 1] * gs[i] < 0:
            candidates.append(brentq(g, lams[i - 1], lams[i], xtol=1e-13))
    ag = np.abs(gs)
    for i in range(1, len(lams) - 1):
        if ag[i] <= ag[i - 1] and ag[i] <= ag[i + 1]:
            res = minimize_scalar(lambda l: abs(g(l)), bounds=(lams[i - 1], lams[i + 1]),
                                  method="bounded", options={"xatol": 1e-13})
            if abs(res.fun) <= tol_eig:
                candidates.append(float(res.x))
    candidates = sorted(set(np.round(candidates, 11)))
    for lam in candidates:
        if not (1e-6 < lam < 1.0 - 1e-9):
            continue
        mono = fundamental_solution(B.scaled(lam), 1.0, tol=tol, n_samples=257)
        x, resid = _fixed_vector(mono.final)
        if resid <= np.sqrt(tol_eig):
            alpha = np.einsum("kij,j->ki", mono.L, x)
            if np.max(np.linalg.norm(alpha - alpha[0], axis=-1)) <= np.sqrt(tol_eig):
                continue  # constant trajectory, not a witness
            return float(lam), Trajectory2(times=mono.times, points=alpha)
    return None


@dataclass
class Trajectory2:
    """A sampled trajectory with linear interpolation (closed-loop helper)."""

    times: np.ndarray
    points: np.ndarray

    def at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t), 1, len(self.times) - 1)
        t0, t1 = self.times[idx - 1], self.times[idx]
        w = np.where(t1 > t0, (t - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0)
        return (1 - w)[..., None] * self.points[idx - 1] + w[..., None] * self.points[idx]

    @property
    def closure_defect(self):
        return float(np.linalg.norm(self.points[-1] - self.points[0]))


def rotation_number_2d(B: HessianPath, t_prime: float = 1.0, n_rays: int = 16,
                       n_samples: int = 2048, tol: float = 1e-11) -> float:
    """Total clockwise angle (radians, reported positive) swept by rays.

    Requires dimension 2 and B_t positive semidefinite (minimum case), where
    the linearized flow rotates every ray monotonically clockwise; reports
    the maximum over sampled rays of the unwrapped swept angle.
    """
    if B.dim != 2:
        raise ValueError("rotation numbers are only defined for 2D jets")
    for t in np.linspace(0, t_prime, 33):
        if np.linalg.eigvalsh(B.at(t)).min() < -1e-10 * max(1.0, np.abs(B.at(t)).max()):
            raise ValueError("B_t is indefinite; ray rotation is not monotone")
    mono = fundamental_solution(B, t_prime, tol=tol, n_samples=n_samples)
    angles = np.linspace(0.0, np.pi, n_rays, endpoint=False)
    rays = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    v = np.einsum("kij,rj->kri", mono.L, rays)
    theta = np.unwrap(np.arctan2(v[..., 1], v[..., 0]), axis=0)
    swept = -(theta[-1] - theta[0])  # clockwise is negative raw angle
    return float(np.max(swept))


# ---------------------------------------------------------------------------
# stability necessary condition
# ---------------------------------------------------------------------------


@dataclass
class ExtremumEvidence:
    point: np.ndarray
    kind: str  # "min" | "max"
    closure: ClosureWitness | None

    @property
    def passes(self) -> bool:
        return self.closure is None

    def to_dict(self):
        return {"point": self.point.tolist(), "kind": self.kind,
                "passes": self.passes,
                "closure": None if self.closure is None else self.closure.to_dict()}


@dataclass
class StabilityReport:
    verdict: bool
    extrema: list

    def to_dict(self):
        return {"verdict": "PASS" if self.verdict else "FAIL",
                "extrema": [e.to_dict() for e in self.extrema]}


def _cluster_points(mask, grid, max_diameter=3, min_separation=4):
    from scipy import ndimage

    structure = np.ones((3,) * mask.ndim, dtype=bool)
    lab, n = ndimage.label(mask, structure=structure)
    pts = []
    shape = mask.shape
    for lb in range(1, n + 1):
        idx = np.argwhere(lab == lb)
        span = idx.max(axis=0) - idx.min(axis=0) + 1
        if span.max() > max_diameter:
            raise NonIsolatedExtremaError(
                f"extremum cluster spans {span.max()} cells; not isolated")
        center_idx = idx.mean(axis=0)
        flat = np.ravel_multi_index(tuple(np.round(center_idx).astype(int) % np.array(shape)), shape)
        pts.append(grid.points[flat])
    pts = np.asarray(pts)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < min_separation * min(grid.spacing):
                raise NonIsolatedExtremaError("fixed extrema too close to separate on the grid")
    return pts


def _pole_jet(H: SphereProfileHamiltonian, z_pole: float) -> np.ndarray:
    # Darboux chart at a pole: z = z_pole -+ r^2/2, so the 2-jet of h(z) is
    # -+ h'(z_pole) I (north pole -, south pole +).
    hp = float(H.h_prime(z_pole))
    return (hp if z_pole < 0 else -hp) * np.eye(2)


def stability_necessary_check(path: IsotopyPath, grid=None,
                              tol_ext: float = hofer.DEFAULT_TOL_EXT,
                              tol_eig: float = DEFAULT_TOL_EIG,
                              n_scan: int = DEFAULT_N_SCAN) -> StabilityReport:
    """Necessary condition for a stable geodesic via linearized closures.

    For each isolated fixed extremum, estimates the Hessian family and scans
    for closed trajectories of the linearized flow in the open interval
    (0, 1).  PASS requires at least one fixed minimum AND one fixed maximum
    free of closures; FAIL carries the closure witnesses that feed the
    scrubbing construction.
    """
    if grid is None:
        grid = hofer.default_grid(path.domain)
    rep = hofer.fixed_extrema(path, grid=grid, tol_ext=tol_ext)
    if not (rep.has_fixed_minimum and rep.has_fixed_maximum):
        return StabilityReport(verdict=False, extrema=[])
    evidence = []
    for kind, mask in (("min", rep.min_mask), ("max", rep.max_mask)):
        if path.domain.is_sphere:
            pts = _sphere_extremum_points(mask, grid)
        else:
            pts = _cluster_points(mask, grid)
        for p in pts:
            B = _hessian_path_at(path, p, kind, grid)
            wit = closed_trajectory_in_time(B, t_max=1.0, tol_eig=tol_eig,
                                            n_scan=n_scan, open_interval=True)
            evidence.append(ExtremumEvidence(point=np.asarray(p, dtype=float),
                                             kind=kind, closure=wit))
    ok_min = any(e.passes for e in evidence if e.kind == "min")
    ok_max = any(e.passes for e in evidence if e.kind == "max")
    return StabilityReport(verdict=ok_min and ok_max, extrema=evidence)


def _sphere_extremum_points(mask, grid):
    arr = mask
    pts = []
    # pole rows collapse to single points
    if np.any(arr[:, 0]):
        pts.append(np.array([0.0, -1.0]))
        arr = arr.copy()
        arr[:, 0] = False
    if np.any(arr[:, -1]):
        pts.append(np.array([0.0, 1.0]))
        arr = arr.copy()
        arr[:, -1] = False
    if np.any(arr):
        pts.extend(_cluster_points(arr, grid))
    return pts


def _hessian_path_at(path: IsotopyPath, point, kind, grid):
    point = np.asarray(point, dtype=float)
    sign = "min" if kind == "min" else "max"
    if path.domain.is_sphere:
        if abs(abs(point[1]) - 1.0) < 1e-9:
            if not isinstance(path.H, SphereProfileHamiltonian):
                raise NonIsolatedExtremaError(
                    "pole Hessians are only available for h(z)-profile Hamiltonians")
            B0 = _pole_jet(path.H, float(np.sign(point[1])))
            return HessianPath.constant(B0, sign=sign)
    h = 2.0 * min(grid.spacing)
    return HessianPath.from_hamiltonian(path.H, point, path.times, sign=sign, h=h)
