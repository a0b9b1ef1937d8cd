"""Second-variation quadratic form on based loops, index and nullity.

For a 2-jet family B_t at a fixed extremum, the form on loops g with
g(0) = g(t') = 0 is

    Q_{t'}(g) = int_0^{t'} ( (B_t^{-1} g') . g'  +/-  (J g) . g' ) dt,

with + at a minimum and - at a maximum.  The discretization uses the Fourier
sine basis sin(k pi t / t') per coordinate, which satisfies the boundary
conditions exactly; index and nullity come from a dense symmetric
eigendecomposition.  Null loops are refined through the monodromy: g is null
iff g = J (L_t - I) c for a fixed vector c of L_{t'} (the translate of a
closed trajectory).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .core.domain import J_matrix, apply_J
from .linflow import HessianPath, fundamental_solution

__all__ = [
    "TangentLoop",
    "SingularHessianError",
    "loop_area",
    "q_functional",
    "QFormReport",
    "q_form_matrix",
    "second_variation_contribution",
    "nullspace_trajectory_check",
    "conjugate_values",
    "ConjugateValueReport",
]

DEFAULT_MODES = 64
DEFAULT_TOL_NULL = 1e-6


class SingularHessianError(RuntimeError):
    """The metric (d^2 H)^{-1} requires an invertible Hessian."""


@dataclass
class TangentLoop:
    """A loop g: [0, t'] -> R^{2n} with g(0) = g(t') = 0, stored as samples.

    Derivatives are fourth-order finite differences of the samples unless an
    analytic derivative is attached.
    """

    times: np.ndarray
    values: np.ndarray  # (K, d)
    gprime: object = field(default=None, repr=False)  # optional callable t -> (d,)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        closure = max(np.linalg.norm(self.values[0]), np.linalg.norm(self.values[-1]))
        scale = max(1.0, float(np.max(np.abs(self.values))))
        if closure > 1e-8 * scale:
            raise ValueError(f"loop is not based at the origin (endpoint norm {closure:.2e})")

    @classmethod
    def from_function(cls, g, t_prime: float = 1.0, n: int = 1025, gprime=None):
        ts = np.linspace(0.0, t_prime, n)
        vals = np.asarray([g(t) for t in ts], dtype=float)
        return cls(times=ts, values=vals, gprime=gprime)

    @classmethod
    def from_sine_modes(cls, coeffs, t_prime: float = 1.0, n: int = 1025):
        """coeffs shape (d, N): coefficients of sin(k pi t / t'), k = 1..N."""
        coeffs = np.asarray(coeffs, dtype=float)
        d, N = coeffs.shape
        ts = np.linspace(0.0, t_prime, n)
        k = np.arange(1, N + 1)
        S = np.sin(np.pi * np.outer(ts, k) / t_prime)  # (n, N)
        dS = (np.pi * k / t_prime) * np.cos(np.pi * np.outer(ts, k) / t_prime)
        vals = S @ coeffs.T
        derivs = dS @ coeffs.T

        def gp(t, _ts=ts, _dv=derivs):
            return _interp_rows(t, _ts, _dv)

        return cls(times=ts, values=vals, gprime=gp)

    @property
    def t_prime(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    def derivative_samples(self) -> np.ndarray:
        if self.gprime is not None:
            return np.asarray([self.gprime(t) for t in self.times], dtype=float)
        return _fd4(self.values, self.times)

    def reversed(self) -> "TangentLoop":
        return TangentLoop(times=self.times.copy(), values=self.values[::-1].copy())


def _interp_rows(t, ts, rows):
    t = float(t)
    i = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
    w = (t - ts[i]) / (ts[i + 1] - ts[i])
    return (1 - w) * rows[i] + w * rows[i + 1]


def _fd4(vals, ts):
    """Fourth-order first derivative on a uniform grid, one-sided at ends."""
    h = ts[1] - ts[0]
    K = len(ts)
    out = np.empty_like(vals)
    if K < 7:
        return np.gradient(vals, ts, axis=0)
    out[2:-2] = (vals[:-4] - 8 * vals[1:-3] + 8 * vals[3:-1] - vals[4:]) / (12 * h)
    for i in (0, 1):
        out[i] = (-25 * vals[i] + 48 * vals[i + 1] - 36 * vals[i + 2]
                  + 16 * vals[i + 3] - 3 * vals[i + 4]) / (12 * h)
    for i in (K - 2, K - 1):
        out[i] = (25 * vals[i] - 48 * vals[i - 1] + 36 * vals[i - 2]
                  - 16 * vals[i - 3] + 3 * vals[i - 4]) / (12 * h)
    return out


def loop_area(g: TangentLoop) -> float:
    """area(g) = 0.5 int (J g) . g' dt (symplectic area enclosed)."""
    gp = g.derivative_samples()
    integrand = np.sum(apply_J(g.values) * gp, axis=-1)
    return 0.5 * float(simpson(integrand, x=g.times))


class _BTable:
    """Dense samples of B_t and B_t^{-1} with linear interpolation."""

    def __init__(self, B: HessianPath, t_max: float, n: int = 2049):
        self.ts = np.linspace(0.0, t_max, n)
        mats = np.stack([B.at(t) for t in self.ts])
        sv = np.linalg.svd(mats, compute_uv=False)
        self.cond = float(np.max(sv[:, 0] / np.maximum(sv[:, -1], 1e-300)))
        if np.any(sv[:, -1] <= 1e-12 * sv[:, 0]):
            raise SingularHessianError(
                "B_t is singular on the interval; the metric (d^2 H)^{-1} is undefined")
        self.inv = np.linalg.inv(mats)
        self.mats = mats

    def inv_at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.ts, t) - 1, 0, len(self.ts) - 2)
        w = (t - self.ts[idx]) / (self.ts[idx + 1] - self.ts[idx])
        return (1 - w)[..., None, None] * self.inv[idx] + w[..., None, None] * self.inv[idx + 1]

    def at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.ts, t) - 1, 0, len(self.ts) - 2)
        w = (t - self.ts[idx]) / (self.ts[idx + 1] - self.ts[idx])
        return (1 - w)[..., None, None] * self.mats[idx] + w[..., None, None] * self.mats[idx + 1]


def _sign_factor(extremum_sign: str) -> float:
    if extremum_sign not in ("min", "max"):
        raise ValueError("extremum_sign must be 'min' or 'max'")
    return 1.0 if extremum_sign == "min" else -1.0


def q_functional(B: HessianPath, g: TangentLoop, extremum_sign: str = "min",
                 table: _BTable | None = None) -> float:
    """Direct quadrature of (B_t^{-1} g') . g' +/- (J g) . g' along the loop."""
    s = _sign_factor(extremum_sign)
    if table is None:
        table = _BTable(B, g.t_prime)
    gp = g.derivative_samples()
    Binv = table.inv_at(g.times)
    kinetic = np.einsum("kij,ki,kj->k", Binv, gp, gp)
    area_term = np.sum(apply_J(g.values) * gp, axis=-1)
    return float(simpson(kinetic + s * area_term, x=g.times))


def second_variation_contribution(B: HessianPath, g: TangentLoop,
                                  extremum_sign: str = "min") -> float:
    """Kinetic term +/- 2 area(g); equals q_functional by the area identity."""
    s = _sign_factor(extremum_sign)
    table = _BTable(B, g.t_prime)
    gp = g.derivative_samples()
    Binv = table.inv_at(g.times)
    kinetic = float(simpson(np.einsum("kij,ki,kj->k", Binv, gp, gp), x=g.times))
    return kinetic + s * 2.0 * loop_area(g)


# ---------------------------------------------------------------------------
# discretized quadratic form
# ---------------------------------------------------------------------------


def _quadrature(n_quad):
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _basis(N, tau):
    k = np.arange(1, N + 1)
    phi = np.sin(np.pi * np.outer(k, tau))        # (N, Q)
    dphi = (np.pi * k)[:, None] * np.cos(np.pi * np.outer(k, tau))
    return phi, dphi


def _assemble(B_table: _BTable, t_primes, N: int, sign: float, n_quad: int | None = None):
    """Stack of Q_{t'} matrices in the sine basis, one per entry of t_primes.

    Time is rescaled to [0, 1]: the kinetic entries pick up 1/t', the area
    entries are t'-independent.
    """
    t_primes = np.atleast_1d(np.asarray(t_primes, dtype=float))
    d = B_table.mats.shape[-1]
    if n_quad is None:
        n_quad = max(384, 6 * N)
    tau, w = _quadrature(n_quad)
    phi, dphi = _basis(N, tau)
    J = J_matrix(d)
    Omega = J.T  # Omega[a, b] = (J e_a) . e_b
    # area block: independent of t'
    S = (phi * w) @ dphi.T  # int phi_j dphi_k
    dim = d * N
    out = np.empty((len(t_primes), dim, dim))
    area = np.zeros((dim, dim))
    for a in range(d):
        for b in range(d):
            if Omega[a, b] != 0.0:
                area[a * N:(a + 1) * N, b * N:(b + 1) * N] = Omega[a, b] * S
    area = 0.5 * (area + area.T) * sign
    for i, tp in enumerate(t_primes):
        Minv = B_table.inv_at(tp * tau)  # (Q, d, d)
        M = np.zeros((dim, dim))
        for a in range(d):
            for b in range(a, d):
                T = w * Minv[:, a, b]
                block = (dphi * T) @ dphi.T / tp
                M[a * N:(a + 1) * N, b * N:(b + 1) * N] += block
                if b != a:
                    M[b * N:(b + 1) * N, a * N:(a + 1) * N] += block.T
        M = 0.5 * (M + M.T) + area
        out[i] = M
    return out


@dataclass
class QFormReport:
    t_prime: float
    n_modes: int
    index: int
    nullity: int
    smallest_eigenvalues: np.ndarray
    largest_eigenvalue: float
    null_vectors: list  # refined TangentLoops
    condition_number: float
    extremum_sign: str

    def to_dict(self):
        return {
            "t_prime": self.t_prime,
            "n_modes": self.n_modes,
            "index": self.index,
            "nullity": self.nullity,
            "smallest_eigenvalues": [float(v) for v in self.smallest_eigenvalues],
            "largest_eigenvalue": self.largest_eigenvalue,
            "condition_number": self.condition_number,
            "extremum_sign": self.extremum_sign,
            "positive": self.index == 0 and self.nullity == 0,
        }


def _counts(eigs, tol_null):
    thresh = tol_null * float(np.max(np.abs(eigs)))
    index = int(np.count_nonzero(eigs < -thresh))
    nullity = int(np.count_nonzero(np.abs(eigs) <= thresh))
    return index, nullity, thresh


def _refined_null_loops(B: HessianPath, t_prime: float, tol_eig: float = 1e-8,
                        n_samples: int = 1025):
    """Null loops via the monodromy: g = J (L_t - I) c, c fixed by L_{t'}."""
    mono = fundamental_solution(B, t_prime, tol=1e-12, n_samples=n_samples)
    d = B.dim
    U, s, Vt = np.linalg.svd(mono.final - np.eye(d))
    loops = []
    for i in range(d - 1, -1, -1):
        if s[i] <= np.sqrt(tol_eig):
            c = Vt[i]
            vals = apply_J(np.einsum("kij,j->ki", mono.L, c) - c)
            if np.max(np.linalg.norm(vals, axis=-1)) > np.sqrt(tol_eig):
                loops.append(TangentLoop(times=mono.times, values=vals))
    return loops


def q_form_matrix(B: HessianPath, t_prime: float = 1.0, N: int = DEFAULT_MODES,
                  extremum_sign: str = "min", tol_null: float = DEFAULT_TOL_NULL,
                  table: _BTable | None = None) -> QFormReport:
    """Assemble and diagonalize Q_{t'} in the sine basis.

    Null vectors are reported as monodromy-refined loops (the sine truncation
    converges too slowly in sup norm to certify the null ODE directly).
    """
    s = _sign_factor(extremum_sign)
    if table is None:
        table = _BTable(B, max(t_prime, 1.0))
    M = _assemble(table, [t_prime], N, s)[0]
    eigs = np.linalg.eigvalsh(M)
    index, nullity, _ = _counts(eigs, tol_null)
    null_loops = _refined_null_loops(B, t_prime) if nullity > 0 else []
    return QFormReport(
        t_prime=t_prime,
        n_modes=N,
        index=index,
        nullity=nullity,
        smallest_eigenvalues=eigs[:5].copy(),
        largest_eigenvalue=float(eigs[-1]),
        null_vectors=null_loops,
        condition_number=table.cond,
        extremum_sign=extremum_sign,
    )


def rayleigh_quotient_value(B: HessianPath, coeffs, t_prime: float = 1.0,
                            extremum_sign: str = "min") -> float:
    """Value of the discretized form on a sine-coefficient vector (d, N)."""
    coeffs = np.asarray(coeffs, dtype=float)
    d, N = coeffs.shape
    table = _BTable(B, max(t_prime, 1.0))
    M = _assemble(table, [t_prime], N, _sign_factor(extremum_sign))[0]
    v = coeffs.reshape(-1)
    return float(v @ M @ v)


def nullspace_trajectory_check(B: HessianPath, t_prime: float, g: TangentLoop,
                               tol: float = 1e-6):
    """Residual of the null-space ODE g' = B_t (-J g + c), c fit by least squares.

    Small residual certifies that -J g is the translate of a closed trajectory
    of the linearized flow.  Returns (residual, c).
    """
    gp = g.derivative_samples()
    Bm = np.stack([B.at(t) for t in g.times])
    rhs0 = np.einsum("kij,kj->ki", Bm, -apply_J(g.values))
    # residual r_k(c) = gp_k - rhs0_k - B_k c, linear least squares for c
    A = Bm.reshape(-1, B.dim)
    b = (gp - rhs0).reshape(-1)
    AtA = sum(Bi.T @ Bi for Bi in Bm)
    Atb = np.einsum("kij,ki->j", Bm, gp - rhs0)
    c = np.linalg.lstsq(AtA, Atb, rcond=None)[0]
    resid = gp - rhs0 - Bm @ c
    scale = max(1.0, float(np.max(np.linalg.norm(gp, axis=-1))))
    return float(np.max(np.linalg.norm(resid, axis=-1)) / scale), c


@dataclass
class ConjugateValueReport:
    t_scan: np.ndarray
    index: np.ndarray
    nullity: np.ndarray
    conjugate_values: list
    jumps_match_nullity: bool

    def to_dict(self):
        return {
            "conjugate_values": [float(t) for t in self.conjugate_values],
            "index_nondecreasing": bool(np.all(np.diff(self.index) >= 0)),
            "jumps_match_nullity": self.jumps_match_nullity,
        }


def q_spectrum_scan(B: HessianPath, t_scan, N: int = DEFAULT_MODES,
                    extremum_sign: str = "min", tol_null: float = DEFAULT_TOL_NULL,
                    n_quad: int | None = None):
    """(index, nullity) arrays over a t' scan, one batched assembly."""
    table = _BTable(B, float(np.max(t_scan)))
    mats = _assemble(table, t_scan, N, _sign_factor(extremum_sign), n_quad=n_quad)
    eigs = np.linalg.eigvalsh(mats)
    thresh = tol_null * np.max(np.abs(eigs), axis=-1, keepdims=True)
    index = np.count_nonzero(eigs < -thresh, axis=-1)
    nullity = np.count_nonzero(np.abs(eigs) <= thresh, axis=-1)
    return index, nullity


def conjugate_values(B: HessianPath, t_max: float = 1.0, n_scan: int = 256,
                     N: int = DEFAULT_MODES, extremum_sign: str = "min",
                     tol_null: float = DEFAULT_TOL_NULL,
                     refine_tol: float = 1e-10) -> ConjugateValueReport:
    """Scan t' for non-trivial null space; verify index monotonicity.

    Conjugate values are located as jump points of the index (refined by
    bisection on the integer-valued index function) and the index jump at
    each one is compared with the nullity there.
    """
    ts = np.linspace(0.0, t_max, n_scan + 1)[1:]
    table = _BTable(B, t_max)
    s = _sign_factor(extremum_sign)
    mats = _assemble(table, ts, N, s)
    eigs = np.linalg.eigvalsh(mats)
    thresh = tol_null * np.max(np.abs(eigs), axis=-1)
    index = np.count_nonzero(eigs < -thresh[:, None], axis=-1)
    nullity = np.count_nonzero(np.abs(eigs) <= thresh[:, None], axis=-1)

    def eig_branch(t, k):
        M = _assemble(table, [t], N, s)[0]
        return float(np.linalg.eigvalsh(M)[k])

    def nullity_at(t):
        M = _assemble(table, [t], N, s)[0]
        e = np.linalg.eigvalsh(M)
        th = tol_null * float(np.max(np.abs(e)))
        return int(np.count_nonzero(np.abs(e) <= th))

    conj = []
    jumps_ok = True
    jump_pts = np.nonzero(np.diff(index) != 0)[0]
    for i in jump_pts:
        ilo, ihi = int(index[i]), int(index[i + 1])
        # the (ilo+1)-th smallest eigenvalue crosses zero near this cell; the
        # left bracket may need widening when the crossing sits inside the
        # null band at the cell edge
        f = lambda t: eig_branch(t, ilo)
        lo_idx = i
        while lo_idx > 0 and f(ts[lo_idx]) <= 0.0 and i - lo_idx < 3:
            lo_idx -= 1
        lo, hi = ts[lo_idx], ts[i + 1]
        if f(lo) > 0.0 > f(hi):
            t_star = brentq(f, lo, hi, xtol=refine_tol)
        else:
            t_star = 0.5 * (ts[i] + ts[i + 1])
        nl = nullity_at(t_star)
        conj.append(float(t_star))
        jumps_ok = jumps_ok and (ihi - ilo == nl)
    # endpoint nullity without an index jump (e.g. last closure exactly at t_max)
    if nullity[-1] > 0 and (len(conj) == 0 or abs(conj[-1] - ts[-1]) > 1e-6):
        conj.append(float(ts[-1]))
    return ConjugateValueReport(t_scan=ts, index=index, nullity=nullity,
                                conjugate_values=conj, jumps_match_nullity=jumps_ok)
