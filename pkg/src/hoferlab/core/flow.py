"""Flow integration and exact map families.

Two integration routes are provided:

* :func:`flow` wraps an adaptive RK45 (Dormand-Prince via scipy) for
  time-dependent fields, with local error controlled by ``tol``.
* Batched fixed-step RK4 (:func:`rk4_flow`) for grid work, where thousands of
  points are pushed through smooth compactly supported fields.

Exact map families (radial flows, smoothed translations, sphere rotations)
implement the small protocol used by :class:`ComposedHamiltonian`: they are
callables ``(t, points) -> points`` with an ``inverse``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .domain import PhaseDomain, apply_J
from .hamiltonian import Hamiltonian, SphereProfileHamiltonian, symplectic_gradient
from .profiles import cutoff, cutoff_d

__all__ = [
    "IntegrationError",
    "Trajectory",
    "flow",
    "flow_points",
    "rk4_flow",
    "IsotopyPath",
    "reparametrized_path",
    "AutonomousFlowMap",
    "RadialFlowMap",
    "TranslationFamily",
    "SphereRotationMap",
    "ComposedMapFamily",
    "IdentityMap",
]


class IntegrationError(RuntimeError):
    def __init__(self, msg, last_valid_time=None):
        super().__init__(msg)
        self.last_valid_time = last_valid_time


@dataclass
class Trajectory:
    """Time-indexed points of one flow line (immutable after construction)."""

    times: np.ndarray
    points: np.ndarray  # (K, dim)
    _dense: object = field(default=None, repr=False)

    def at(self, t):
        if self._dense is not None:
            return np.asarray(self._dense(t), dtype=float)
        # linear fallback between stored samples
        idx = np.searchsorted(self.times, t)
        idx = np.clip(idx, 1, len(self.times) - 1)
        t0, t1 = self.times[idx - 1], self.times[idx]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1 - w) * self.points[idx - 1] + w * self.points[idx]

    @property
    def end(self):
        return self.points[-1]


def _field(H: Hamiltonian, domain: PhaseDomain | None):
    def rhs(t, y):
        x = y.reshape(-1, H.dim)
        return (-apply_J(H.grad(t, x))).ravel()

    return rhs


def flow(H: Hamiltonian, x0, t0: float = 0.0, t1: float = 1.0, tol: float = 1e-9,
         domain: PhaseDomain | None = None, n_samples: int = 65) -> Trajectory:
    """Integrate dx/dt = X_{H_t}(x) from t0 to t1 for a single point.

    Sphere trajectories entering a pole cap abort with the last valid time,
    except for h(z)-profile Hamiltonians which rotate parallels exactly.
    """
    x0 = np.asarray(x0, dtype=float)
    ts = np.linspace(t0, t1, n_samples)
    if domain is not None and domain.is_sphere and isinstance(H, SphereProfileHamiltonian):
        rate = H.h_prime(x0[..., 1])
        pts = np.stack([x0[..., 0] + (ts - t0) * rate, np.broadcast_to(x0[..., 1], ts.shape)],
                       axis=-1)
        return Trajectory(times=ts, points=pts)

    events = None
    if domain is not None and domain.is_sphere:
        cap = 1.0 - domain.pole_eps

        def hit_cap(t, y):
            return cap - abs(y[1])

        hit_cap.terminal = True
        events = [hit_cap]

    sol = solve_ivp(_field(H, domain), (t0, t1), x0, method="RK45", rtol=tol,
                    atol=tol * 1e-2, dense_output=True, events=events,
                    t_eval=ts if t1 != t0 else None)
    if not sol.success and sol.status != 1:
        raise IntegrationError(f"flow integration failed: {sol.message}")
    if sol.status == 1:  # terminated by the pole-cap event
        raise IntegrationError(
            "trajectory entered a pole cap of the sphere chart",
            last_valid_time=float(sol.t[-1]),
        )
    return Trajectory(times=sol.t, points=sol.y.T, _dense=lambda t: sol.sol(t))


def flow_points(H: Hamiltonian, pts, t0: float = 0.0, t1: float = 1.0,
                tol: float = 1e-9) -> np.ndarray:
    """Adaptive endpoint map for a batch of points (flattened system)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if t1 == t0:
        return pts.copy()
    d = pts.shape[-1]

    def rhs(t, y):
        x = y.reshape(-1, d)
        return (-apply_J(H.grad(t, x))).ravel()

    sol = solve_ivp(rhs, (t0, t1), pts.ravel(), method="RK45", rtol=tol, atol=tol * 1e-2)
    if not sol.success:
        raise IntegrationError(f"flow integration failed: {sol.message}")
    return sol.y[:, -1].reshape(pts.shape)


def rk4_flow(field, pts, t0: float, t1: float, nsteps: int) -> np.ndarray:
    """Classical RK4 with fixed steps, vectorized over a point batch."""
    x = np.array(pts, dtype=float, copy=True)
    if t1 == t0 or nsteps == 0:
        return x
    h = (t1 - t0) / nsteps
    t = t0
    for _ in range(nsteps):
        k1 = field(t, x)
        k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = field(t + h, x + h * k3)
        x += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def _hamiltonian_field(H: Hamiltonian):
    return lambda t, x: -apply_J(H.grad(t, x))


# ---------------------------------------------------------------------------
# map families
# ---------------------------------------------------------------------------


class IdentityMap:
    def __call__(self, t, pts):
        return np.array(pts, dtype=float, copy=True)

    def inverse(self, t, pts):
        return np.array(pts, dtype=float, copy=True)


class ComposedMapFamily:
    """Apply maps in order: last entry acts first (like composition)."""

    def __init__(self, outer, inner):
        self.outer = outer
        self.inner = inner

    def __call__(self, t, pts):
        return self.outer(t, self.inner(t, pts))

    def inverse(self, t, pts):
        return self.inner.inverse(t, self.outer.inverse(t, pts))


class AutonomousFlowMap:
    """Time-T(t) flow of an autonomous Hamiltonian f, batched RK4.

    Generates the loop t -> Phi_f^{T(t)}; its generating Hamiltonian is
    exactly T'(t) f, so pair it with :class:`TimeScaledHamiltonian`.
    """

    def __init__(self, spatial: Hamiltonian, T, nsteps: int = 64):
        self.spatial = spatial
        self.T = T if callable(T) else (lambda t, c=float(T): c)
        self.nsteps = nsteps
        self._field = _hamiltonian_field(spatial)

    def at_time(self, T, pts):
        steps = max(8, int(self.nsteps * min(4.0, 1.0 + abs(T))))
        return rk4_flow(lambda s, x: self._field(0.0, x), pts, 0.0, T, steps)

    def __call__(self, t, pts):
        return self.at_time(self.T(t), pts)

    def inverse(self, t, pts):
        return self.at_time(-self.T(t), pts)


class RadialFlowMap:
    """Exact flow of a radial Hamiltonian f(|x - c|): rotation on circles.

    The field of f(r) is -f'(r) J x_hat, which rotates the circle of radius r
    by angle -T f'(r)/r in time T.  Exact, no integration.
    """

    def __init__(self, center, f_prime, T):
        self.center = np.asarray(center, dtype=float)
        self.f_prime = f_prime
        self.T = T if callable(T) else (lambda t, c=float(T): c)

    def _rotate(self, pts, T):
        d = np.asarray(pts, dtype=float) - self.center
        r = np.linalg.norm(d, axis=-1)
        rs = np.where(r > 1e-300, r, 1.0)
        ang = np.where(r > 1e-300, -T * self.f_prime(r) / rs, 0.0)
        ca, sa = np.cos(ang), np.sin(ang)
        out = np.empty_like(d)
        out[..., 0] = ca * d[..., 0] - sa * d[..., 1]
        out[..., 1] = sa * d[..., 0] + ca * d[..., 1]
        return out + self.center

    def __call__(self, t, pts):
        return self._rotate(pts, self.T(t))

    def inverse(self, t, pts):
        return self._rotate(pts, -self.T(t))


class TranslationFamily:
    """Loop of symplectomorphisms translating an inner disc by u(t).

    ``S_v`` is the time-1 flow of the cutoff linear Hamiltonian
    ``G_v(x) = (Jv . (x - c)) kappa(|x - c|)``; on the region where kappa = 1
    this flow is exactly the translation by v, and it is the identity outside
    the cutoff support.  The family ``psi_t = S_{u(t)}`` is an exact loop
    whenever u(0) = u(1) = 0.

    The generating Hamiltonian F_t vanishes outside the support and equals
    ``(J u'(t)) . x + z(t)`` on the inner disc; it is recovered on demand by a
    line integral of the family's velocity field along rays (``hamiltonian``),
    which is how z(t) = F_t(center) is measured.
    """

    def __init__(self, center, r_one, r_zero, u, u_prime, nsteps: int = 48):
        self.center = np.asarray(center, dtype=float)
        self.r_one = float(r_one)
        self.r_zero = float(r_zero)
        self.u = u
        self.u_prime = u_prime
        self.nsteps = nsteps

    # autonomous field of G_v in centered coordinates
    def _field_v(self, v, y):
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        rs = np.where(r > 1e-300, r, 1.0)
        Jv = apply_J(np.broadcast_to(v, y.shape))
        lin = np.sum(Jv * y, axis=-1, keepdims=True)
        kp = cutoff_d(r, self.r_one, self.r_zero)
        return v * cutoff(r, self.r_one, self.r_zero) - lin * (kp / rs) * apply_J(y)

    def _S(self, v, pts, sign=1.0):
        y = np.asarray(pts, dtype=float) - self.center
        if np.allclose(v, 0.0):
            return np.array(pts, dtype=float, copy=True)
        y = rk4_flow(lambda s, x: self._field_v(v, x), y, 0.0, sign * 1.0, self.nsteps)
        return y + self.center

    def __call__(self, t, pts):
        return self._S(np.asarray(self.u(t), dtype=float), pts)

    def inverse(self, t, pts):
        return self._S(np.asarray(self.u(t), dtype=float), pts, sign=-1.0)

    def velocity(self, t, pts, ht: float = 1e-5):
        """X_t(x) = d/dt psi_t at psi_t^{-1}(x), central differences in t."""
        pts = np.asarray(pts, dtype=float)
        base = self.inverse(t, pts)
        xp = self._S(np.asarray(self.u(t + ht), dtype=float), base)
        xm = self._S(np.asarray(self.u(t - ht), dtype=float), base)
        return (xp - xm) / (2.0 * ht)

    def max_displacement(self, t):
        return float(np.linalg.norm(np.asarray(self.u(t), dtype=float)))

    def translation_radius(self, u_max: float) -> float:
        """Radius of the disc on which the maps act as exact translations."""
        return self.r_one - 2.0 * u_max

    def hamiltonian(self, t, pts, n_quad: int = 64):
        """F_t at the given points, normalized to vanish outside the support.

        Integrates omega(X_t, .) along the ray from radius r_zero inward to
        each point; the segment inside the exact-translation disc is done in
        closed form, the annulus crossing by Gauss-Legendre quadrature of the
        finite-difference velocity.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        y = pts - self.center
        r = np.linalg.norm(y, axis=-1)
        u_t = np.asarray(self.u(t), dtype=float)
        up_t = np.asarray(self.u_prime(t), dtype=float)
        u_max = max(np.linalg.norm(u_t), 1e-300)
        r_in = self.translation_radius(u_max)
        if r_in <= 0:
            raise ValueError("displacement too large for the cutoff radii")
        out = np.zeros(len(y))

        # z(t): value at the center, via the reference ray along e1
        nodes, weights = np.polynomial.legendre.leggauss(n_quad)
        s = 0.5 * (nodes + 1.0)  # [0, 1]
        w = 0.5 * weights

        def annulus_integral(direction):
            # int_{r_in}^{r_zero} (J X_t(rho dir)) . dir d rho, sign for inward
            rho = self.r_zero + s * (r_in - self.r_zero)
            gamma = self.center + rho[:, None] * direction
            X = self.velocity(t, gamma)
            integrand = np.sum(apply_J(X) * direction, axis=-1)
            return float(np.sum(w * integrand) * (r_in - self.r_zero))

        e1 = np.array([1.0, 0.0])
        z_t = annulus_integral(e1) + float(np.dot(apply_J(up_t), (0.0 - r_in) * e1))

        inner = r <= r_in
        outer = r >= self.r_zero
        mid = ~inner & ~outer
        out[inner] = z_t + np.sum(apply_J(up_t) * y[inner], axis=-1)
        if np.any(mid):
            dirs = y[mid] / r[mid][:, None]
            rho = self.r_zero[None] + s[:, None] * (r[mid][None, :] - self.r_zero)
            gamma = self.center + rho[..., None] * dirs[None, :, :]
            X = self.velocity(t, gamma.reshape(-1, 2)).reshape(gamma.shape)
            integrand = np.sum(apply_J(X) * dirs[None, :, :], axis=-1)
            out[mid] = np.sum(w[:, None] * integrand, axis=0) * (r[mid] - self.r_zero)
        return out

    def z_of_t(self, t, n_quad: int = 64):
        """z(t) = F_t(center)."""
        return float(self.hamiltonian(t, self.center[None, :], n_quad=n_quad)[0])


class SphereRotationMap:
    """Exact flow maps of h(z) profiles: (theta, z) -> (theta + T h'(z), z)."""

    def __init__(self, h_prime, T):
        self.h_prime = h_prime
        self.T = T if callable(T) else (lambda t, c=float(T): c)

    def _rot(self, pts, T):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[..., 0] = pts[..., 0] + T * self.h_prime(pts[..., 1])
        return out

    def __call__(self, t, pts):
        return self._rot(pts, self.T(t))

    def inverse(self, t, pts):
        return self._rot(pts, -self.T(t))


# ---------------------------------------------------------------------------
# isotopy paths
# ---------------------------------------------------------------------------


@dataclass
class IsotopyPath:
    """A discretized Hamiltonian isotopy on [0, 1].

    Stores the generating Hamiltonian, a uniform time grid, and trajectories
    of a tracked point cloud; flow maps at other times are integrated on
    demand.  Immutable in spirit: deformations produce new paths.
    """

    domain: PhaseDomain
    H: Hamiltonian
    times: np.ndarray
    cloud: np.ndarray
    trajectories: np.ndarray  # (K, N, dim)
    tol: float = 1e-9
    map_family: object = None  # optional exact map family (t, pts) -> pts

    @classmethod
    def from_hamiltonian(cls, domain, H, n_times: int = 65, cloud=None,
                         tol: float = 1e-9, map_family=None):
        times = np.linspace(0.0, 1.0, n_times)
        if cloud is None:
            cloud = _default_cloud(domain)
        cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
        if map_family is not None:
            trajs = np.stack([map_family(t, cloud) for t in times])
        elif domain.is_sphere and isinstance(H, SphereProfileHamiltonian):
            rate = H.h_prime(cloud[:, 1])
            trajs = np.stack([
                np.stack([cloud[:, 0] + t * rate, cloud[:, 1]], axis=-1) for t in times
            ])
        else:
            d = cloud.shape[-1]

            def rhs(t, y):
                x = y.reshape(-1, d)
                return (-apply_J(H.grad(t, x))).ravel()

            sol = solve_ivp(rhs, (0.0, 1.0), cloud.ravel(), method="RK45",
                            rtol=tol, atol=tol * 1e-2, t_eval=times)
            if not sol.success:
                raise IntegrationError(f"cloud integration failed: {sol.message}")
            trajs = sol.y.T.reshape(len(times), *cloud.shape)
        return cls(domain=domain, H=H, times=times, cloud=cloud,
                   trajectories=trajs, tol=tol, map_family=map_family)

    def map_at(self, t, pts):
        if self.map_family is not None:
            return self.map_family(t, pts)
        if self.domain.is_sphere and isinstance(self.H, SphereProfileHamiltonian):
            pts = np.asarray(pts, dtype=float)
            out = pts.copy()
            out[..., 0] += t * self.H.h_prime(pts[..., 1])
            return out
        return flow_points(self.H, pts, 0.0, t, tol=self.tol)

    def time_one(self, pts):
        return self.map_at(1.0, pts)

    def regularity(self, sample_points=None):
        """min over t of sup over the cloud of |X_{H_t}|; > 0 means regular."""
        pts = self.cloud if sample_points is None else np.atleast_2d(sample_points)
        sups = []
        for t in self.times:
            X = -apply_J(self.H.grad(t, pts))
            sups.append(float(np.max(np.linalg.norm(X, axis=-1))))
        return float(np.min(sups))


def _default_cloud(domain: PhaseDomain, n: int = 12):
    if domain.is_sphere:
        th = np.linspace(0, 2 * np.pi, n, endpoint=False)
        z = np.linspace(-0.9, 0.9, n)
        T, Z = np.meshgrid(th, z, indexing="ij")
        return np.stack([T.ravel(), Z.ravel()], axis=-1)
    axes = [np.linspace(lo, hi, n) for lo, hi in domain.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def reparametrized_path(path: IsotopyPath, beta, beta_prime) -> IsotopyPath:
    """The path t -> phi_{beta(t)} generated by beta'(t) H_{beta(t)}."""
    from .hamiltonian import CallableHamiltonian

    H = path.H
    newH = CallableHamiltonian(
        lambda t, x: beta_prime(t) * H.value(beta(t), x),
        grad=lambda t, x: beta_prime(t) * H.grad(beta(t), x),
        dim=H.dim,
    )
    fam = None
    if path.map_family is not None:
        base = path.map_family

        class _Repar:
            def __call__(self, t, pts):
                return base(beta(t), pts)

            def inverse(self, t, pts):
                return base.inverse(beta(t), pts)

        fam = _Repar()
    return IsotopyPath.from_hamiltonian(path.domain, newH, n_times=len(path.times),
                                        cloud=path.cloud, tol=path.tol, map_family=fam)
