"""The scrubbing deformation at a fixed extremum, with quantitative lemmas.

Pipeline (minimum case; the maximum case runs the mirror image through -H):

1. *Annulus positivity*: compose with a loop generated by b(t) f, f an
   annular plateau around the extremum and b a vanishing-integral profile,
   so the deformed Hamiltonian is strictly positive on A = D(4d) - D(d/2)
   for all t, at unchanged length and endpoints.
2. *Scrubbing loop*: given a rescaling lambda in (0, 1) whose linearized
   flow closes up in time one with trajectory alpha, translate a small disc
   around the loop rho * (alpha - alpha(0)) using an exact loop of cutoff
   translations.  The generator F_t equals (J rho alpha') . x + z(t) on the
   inner disc, with int z dt = area(rho alpha0) (the flux identity).
3. *Gain*: the composed Hamiltonian K_t = F_t + H_t o psi_t^{-1} satisfies
   int min K~_t dt = (1 - lambda) lambda rho^2 int H~_t(alpha) dt > 0 for
   the 2-jet part; a final radial bump with vanishing-integral profile
   redistributes the minimum so that min K_t is a positive constant, while
   the maximum never moves.  The path gets strictly shorter with the same
   endpoints.

Note on the gain formula: expanding K~ at its critical path
p(t) = rho (1-lambda) alpha - rho alpha(0) gives the integrand in terms of
the closed trajectory alpha itself; the translated loop alpha0 enters only
through the flux of z.  Both variants are reported by the lemma verifier;
the brute-force minimization pins the alpha form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize

from ..core.domain import apply_J
from ..core.flow import ComposedMapFamily, IsotopyPath, RadialFlowMap, TranslationFamily
from ..core.hamiltonian import (
    CallableHamiltonian,
    Hamiltonian,
    QuadraticHamiltonian,
    TimeScaledHamiltonian,
    compose_hamiltonians,
    fd_hessian,
)
from ..core.profiles import cutoff, cutoff_d, ramp, smoothstep, smoothstep_d
from ..linflow import HessianPath, Trajectory2, lambda_conjugate
from .. import hofer
from .common import (
    DeformedPath,
    PathMapAdapter,
    PlanRefusal,
    ShorteningResult,
)
from .no_fixed_max import shorten_no_fixed_max  # noqa: F401  (pipeline reuse)

__all__ = [
    "LoopSpec",
    "step1_annulus_positivity",
    "Step1Result",
    "scrubbing_motion",
    "verify_lemma_z",
    "verify_lemma_lambda",
    "LemmaZReport",
    "LemmaLambdaReport",
    "slowdown_loop",
    "circle_loop",
]


# ---------------------------------------------------------------------------
# loop specifications
# ---------------------------------------------------------------------------


@dataclass
class LoopSpec:
    """A closed trajectory alpha on [0, 1] with derivative access."""

    alpha: object
    alpha_prime: object
    label: str = ""

    def __post_init__(self):
        ts = np.linspace(0.0, 1.0, 513)
        vals = np.asarray([self.alpha(t) for t in ts], dtype=float)
        self.max_norm = float(np.max(np.linalg.norm(vals, axis=-1)))
        dv = np.asarray([self.alpha_prime(t) for t in ts], dtype=float)
        self.max_prime_norm = float(np.max(np.linalg.norm(dv, axis=-1)))
        self.closure_defect = float(np.linalg.norm(vals[-1] - vals[0]))

    def c(self):
        return np.asarray(self.alpha(0.0), dtype=float)

    def alpha0(self, t):
        return np.asarray(self.alpha(t), dtype=float) - self.c()

    def scaled(self, s: float) -> "LoopSpec":
        a, ap = self.alpha, self.alpha_prime
        return LoopSpec(alpha=lambda t: s * np.asarray(a(t), dtype=float),
                        alpha_prime=lambda t: s * np.asarray(ap(t), dtype=float),
                        label=self.label)

    @classmethod
    def from_trajectory(cls, traj: Trajectory2, label="lambda-witness") -> "LoopSpec":
        from ..secondvar import _fd4

        deriv = _fd4(traj.points, traj.times)
        dtraj = Trajectory2(times=traj.times, points=deriv)
        return cls(alpha=lambda t: traj.at(t), alpha_prime=lambda t: dtraj.at(t),
                   label=label)


def circle_loop(turns: int = 1, radius: float = 1.0, clockwise: bool = True) -> LoopSpec:
    """The canonical circular trajectory (of an isotropic 2-jet)."""
    sgn = -1.0 if clockwise else 1.0
    w = 2 * np.pi * turns

    def a(t):
        return radius * np.array([np.cos(w * t), sgn * np.sin(w * t)])

    def ap(t):
        return radius * w * np.array([-np.sin(w * t), sgn * np.cos(w * t)])

    return LoopSpec(alpha=a, alpha_prime=ap, label=f"circle({turns})")


# ---------------------------------------------------------------------------
# step 1: annulus positivity
# ---------------------------------------------------------------------------


@dataclass
class Step1Result:
    deformed: DeformedPath
    annulus_min: float
    length_delta: float
    eps: float
    t0: float

    def to_dict(self):
        return {"annulus_min": self.annulus_min, "length_delta": self.length_delta,
                "eps": self.eps, "t0": self.t0}


def _annulus_plateau(delta):
    """Radial profile: 1 on [delta/2, 4 delta], 0 outside [delta/4, 4.5 delta]."""

    def f(r):
        return ramp(r, delta / 4, delta / 2) * cutoff(r, 4 * delta, 4.5 * delta)

    def f_prime(r):
        r = np.asarray(r, dtype=float)
        up = smoothstep_d((r - delta / 4) / (delta / 4)) / (delta / 4)
        return (up * cutoff(r, 4 * delta, 4.5 * delta)
                + ramp(r, delta / 4, delta / 2) * cutoff_d(r, 4 * delta, 4.5 * delta))

    return f, f_prime


def _vanishing_integral_profile(t0, xi):
    """Smooth b with int b = 0, min on (t0-xi, t0+xi), max outside 2 xi."""

    def window(t):
        return ramp(t, t0 - 2 * xi, t0 - xi) * (1.0 - ramp(t, t0 + xi, t0 + 2 * xi))

    ts = np.linspace(0, 1, 4097)
    Wbar = float(np.trapezoid(window(ts), ts))
    if not 0 < Wbar < 1:
        raise PlanRefusal("interior window does not fit inside [0, 1]")
    a = 1.0 / Wbar - 1.0

    def shape(t):
        return 1.0 - (1.0 + a) * window(t)

    sup = max(1.0, a)
    vals = shape(ts) / sup
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts))])

    def b_unit(t):
        return float(np.interp(t, ts, vals))

    def B_unit(t):
        return float(np.interp(t, ts, cum))

    return b_unit, B_unit


def step1_annulus_positivity(path: IsotopyPath, p, delta: float, xi: float = 0.08,
                             eps: float | None = None, grid=None,
                             n_check: int = 33) -> Step1Result:
    """Deform to a path of the same length and endpoints, strictly positive
    on the annulus A = D(4 delta) - D(delta / 2) around the fixed minimum p.

    Requires the 2-jet at p to be non-degenerate at some interior time (the
    rank-one repair is not built; degenerate families are refused), the path
    to be regular, and eps < M/2 for the minimax M.
    """
    p = np.asarray(p, dtype=float)
    H = path.H
    ts = np.linspace(0.0, 1.0, n_check)
    # regularity guard: no H_t identically zero (sampled on the cloud region)
    probe = p + delta * np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0], [0, -1.0],
                                  [2.0, 0], [0, 2.0], [3.5, 0], [0, 3.5]])
    sup_t = np.array([float(np.max(np.abs(H.value(t, probe)))) for t in ts])
    if np.any(sup_t < 1e-14):
        raise PlanRefusal("some H_t vanishes identically near the extremum; "
                          "the path is not regular there (repair not built)")

    # minimax M = min_t max H_t
    if grid is None:
        grid = hofer.default_grid(path.domain)
    maxima = np.array([float(np.max(H.value(t, grid.points))) for t in ts])
    minima = np.array([float(np.min(H.value(t, grid.points))) for t in ts])
    M = float(np.min(maxima))
    if M <= 0:
        raise PlanRefusal("minimax of the family is not positive")

    # nondegenerate time: largest smallest-Hessian-eigenvalue, interior
    jets = [fd_hessian(H, t, p, h=delta / 8) for t in ts]
    lmins = np.array([np.linalg.eigvalsh(B).min() for B in jets])
    i0 = int(np.argmax(lmins[1:-1])) + 1
    if lmins[i0] <= 0:
        raise PlanRefusal("all 2-jets at the extremum are degenerate; the "
                          "rank-one repair is not built")
    t0 = float(ts[i0])
    t0 = min(max(t0, 2.2 * xi), 1.0 - 2.2 * xi)

    # ring floor: H must dominate the profile's negative dip on the window
    angles = np.linspace(0, 2 * np.pi, 48, endpoint=False)
    rings = np.concatenate([
        p + r * np.stack([np.cos(angles), np.sin(angles)], -1)
        for r in (delta / 4, delta / 2 * 0.75, 4.2 * delta, 4.5 * delta, delta / 2,
                  delta, 2 * delta, 4 * delta)
    ])
    window_ts = ts[np.abs(ts - t0) <= 2.2 * xi]
    ring_floor = min(float(np.min(H.value(t, rings))) for t in window_ts)
    if eps is None:
        if ring_floor <= 0:
            raise PlanRefusal("H_t is not positive near the annulus on the window; "
                              "shrink delta")
        eps = 0.9 * min(M / 2, ring_floor)
    if eps >= M / 2:
        raise PlanRefusal(f"eps={eps:.3g} is not smaller than M/2={M/2:.3g}")

    f, f_prime = _annulus_plateau(delta)
    b_unit, B_unit = _vanishing_integral_profile(t0, xi)

    spatial = CallableHamiltonian(
        lambda t, x: f(np.linalg.norm(np.asarray(x, dtype=float) - p, axis=-1)),
        grad=lambda t, x: _radial_grad(x, p, f_prime),
        dim=path.domain.dim,
    )
    generator = TimeScaledHamiltonian(spatial, a=lambda t: eps * b_unit(t),
                                      a_prime=lambda t: 0.0)
    loop = RadialFlowMap(center=p, f_prime=f_prime, T=lambda t: eps * B_unit(t))
    composed = compose_hamiltonians(generator, H, loop.inverse)
    deformed = DeformedPath(domain=path.domain, generator=composed,
                            map_family=ComposedMapFamily(loop, PathMapAdapter(path)))

    # certificates: positivity on A, per-time total variation unchanged
    r_ann = np.linspace(delta / 2, 4 * delta, 25)
    ann = p + np.concatenate([r * np.stack([np.cos(angles), np.sin(angles)], -1)
                              for r in r_ann])
    ann_min = np.inf
    tv_delta = 0.0
    for t in ts:
        vals = composed.value(t, ann)
        ann_min = min(ann_min, float(np.min(vals)))
        tv_new = float(np.max(composed.value(t, grid.points))
                       - np.min(composed.value(t, grid.points)))
        tv_old = float(maxima[np.searchsorted(ts, t)] - minima[np.searchsorted(ts, t)])
        tv_delta = max(tv_delta, abs(tv_new - tv_old))
    if ann_min <= 0:
        raise PlanRefusal(f"positivity on the annulus failed (min {ann_min:.3g}); "
                          "eps or delta out of range")
    return Step1Result(deformed=deformed, annulus_min=ann_min,
                       length_delta=tv_delta, eps=eps, t0=t0)


def _radial_grad(x, center, f_prime):
    d = np.asarray(x, dtype=float) - center
    r = np.linalg.norm(d, axis=-1)
    rs = np.where(r > 1e-300, r, 1.0)
    return (f_prime(r) / rs)[..., None] * d


# ---------------------------------------------------------------------------
# lemma verifiers
# ---------------------------------------------------------------------------


@dataclass
class LemmaZReport:
    flux: float
    area: float
    residual: float
    resolution: dict

    def to_dict(self):
        return {"flux": self.flux, "area": self.area, "residual": self.residual,
                "resolution": dict(self.resolution)}


def _loop_family(center, delta, rho, loop: LoopSpec, rk_steps=48):
    u = lambda t: rho * loop.alpha0(t)
    u_prime = lambda t: rho * np.asarray(loop.alpha_prime(t), dtype=float)
    return TranslationFamily(center=center, r_one=2.4 * delta, r_zero=2.9 * delta,
                             u=u, u_prime=u_prime, nsteps=rk_steps)


def loop_area_of(loop: LoopSpec, rho: float, n: int = 2049) -> float:
    ts = np.linspace(0.0, 1.0, n)
    g = rho * np.asarray([loop.alpha0(t) for t in ts])
    gp = rho * np.asarray([loop.alpha_prime(t) for t in ts])
    return 0.5 * float(simpson(np.sum(apply_J(g) * gp, axis=-1), x=ts))


def verify_lemma_z(delta: float, rho: float, loop: LoopSpec, n_t: int = 129,
                   n_quad: int = 64, rk_steps: int = 48) -> LemmaZReport:
    """Flux identity: int_0^1 z(t) dt = area(rho alpha0).

    z(t) = F_t(0) is measured from the constructed smoothed-translation loop
    by a line integral of omega(X_t, .) along a ray from the outer boundary,
    with the velocity field X_t obtained from the map family itself.
    """
    if rho * loop.max_norm > delta / 6 + 1e-12:
        raise PlanRefusal("rho max|alpha| must stay below delta/6")
    fam = _loop_family(np.zeros(2), delta, rho, loop, rk_steps=rk_steps)
    ts = np.linspace(0.0, 1.0, n_t)
    zs = np.array([fam.z_of_t(t, n_quad=n_quad) for t in ts])
    flux = float(simpson(zs, x=ts))
    area = loop_area_of(loop, rho)
    resid = abs(flux - area) / max(abs(area), 1e-300)
    return LemmaZReport(flux=flux, area=area, residual=resid,
                        resolution={"n_t": n_t, "n_quad": n_quad, "rk_steps": rk_steps})


@dataclass
class LemmaLambdaReport:
    lhs: float
    rhs: float
    residual: float
    minimizer_residual: float
    rhs_translated_loop_variant: float
    resolution: dict

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "residual": self.residual,
                "minimizer_residual": self.minimizer_residual,
                "rhs_translated_loop_variant": self.rhs_translated_loop_variant,
                "resolution": dict(self.resolution)}


def verify_lemma_lambda(B: HessianPath, lam: float, loop: LoopSpec, rho: float,
                        delta: float | None = None, n_t: int = 129,
                        grid_n: int = 161, n_quad: int = 48) -> LemmaLambdaReport:
    """Gain identity for the 2-jet part of the scrubbed Hamiltonian.

    K~_t(x) = z(t) + rho (J alpha') . x + H~_t(x - rho alpha0) is minimized
    by brute force on a fine grid (polished locally); the integral of the
    minimum is compared with (1 - lambda) lambda rho^2 int H~_t(alpha) dt,
    and the minimizer with p(t) = rho (1 - lambda) alpha - rho alpha(0).
    The variant with the translated loop alpha0 in place of alpha is also
    reported; it differs once alpha(0) leaves the kernel of B_t.
    """
    if delta is None:
        delta = 10.0 * rho * max(loop.max_norm, 1.0)
    fam = _loop_family(np.zeros(2), delta, rho, loop)
    Jm = np.array([[0.0, -1.0], [1.0, 0.0]])
    ts = np.linspace(0.0, 1.0, n_t)
    zs = np.array([fam.z_of_t(t, n_quad=n_quad) for t in ts])

    half = 4.0 * rho * max(loop.max_norm, 1.0)
    axis = np.linspace(-half, half, grid_n)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)

    mins = np.empty(n_t)
    min_resid = 0.0
    for i, t in enumerate(ts):
        Bt = B.at(t)
        a = np.asarray(loop.alpha(t), dtype=float)
        ap = np.asarray(loop.alpha_prime(t), dtype=float)
        a0 = a - np.asarray(loop.alpha(0.0), dtype=float)
        vals = zs[i] + (np.atleast_2d(pts) @ (rho * (Jm @ ap))) \
            + 0.5 * np.einsum("ki,ij,kj->k", pts - rho * a0, Bt, pts - rho * a0)
        k0 = int(np.argmin(vals))
        res = minimize(lambda x: float(
            zs[i] + rho * (Jm @ ap) @ x
            + 0.5 * (x - rho * a0) @ Bt @ (x - rho * a0)), pts[k0],
            method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-16})
        mins[i] = res.fun
        # minimizer distance measured in the range of B_t (kernel directions
        # of degenerate jets leave the minimizer underdetermined)
        p_t = rho * (1 - lam) * a - rho * np.asarray(loop.alpha(0.0), dtype=float)
        dv = res.x - p_t
        proj = np.linalg.pinv(Bt) @ (Bt @ dv)
        min_resid = max(min_resid, float(np.linalg.norm(proj)) / max(rho, 1e-300))

    lhs = float(simpson(mins, x=ts))
    Hvals = np.array([0.5 * np.asarray(loop.alpha(t)) @ B.at(t) @ np.asarray(loop.alpha(t))
                      for t in ts])
    Hvals0 = np.array([0.5 * loop.alpha0(t) @ B.at(t) @ loop.alpha0(t) for t in ts])
    rhs = (1 - lam) * lam * rho**2 * float(simpson(Hvals, x=ts))
    rhs0 = (1 - lam) * lam * rho**2 * float(simpson(Hvals0, x=ts))
    residual = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return LemmaLambdaReport(lhs=lhs, rhs=rhs, residual=residual,
                             minimizer_residual=min_resid,
                             rhs_translated_loop_variant=rhs0,
                             resolution={"n_t": n_t, "grid_n": grid_n,
                                         "n_quad": n_quad})


# ---------------------------------------------------------------------------
# the full scrubbing deformation
# ---------------------------------------------------------------------------


class _PolarProbe:
    """Polar evaluation of the scrubbed Hamiltonian around the extremum.

    F_t is recovered on all rays in one pass: the velocity field of the
    translation family is evaluated on the polar batch and integrated
    radially inward from the outer boundary (where F_t = 0).
    """

    def __init__(self, center, fam: TranslationFamily, n_r=40, n_ang=72,
                 r_min_factor=0.9, r_max_factor=3.05):
        self.center = np.asarray(center, dtype=float)
        self.fam = fam
        delta_out = fam.r_zero / 2.9
        self.radii = np.linspace(r_max_factor * delta_out, r_min_factor * delta_out,
                                 n_r)  # outer to inner for the cumulative integral
        self.angles = np.linspace(0, 2 * np.pi, n_ang, endpoint=False)
        self.dirs = np.stack([np.cos(self.angles), np.sin(self.angles)], -1)
        self.pts = (self.center[None, None, :]
                    + self.radii[:, None, None] * self.dirs[None, :, :])

    def F_and_points(self, t):
        flat = self.pts.reshape(-1, 2)
        X = self.fam.velocity(t, flat).reshape(self.pts.shape)
        radial = np.sum(apply_J(X) * self.dirs[None, :, :], axis=-1)  # dF/dr
        F = np.zeros_like(radial)
        # cumulative trapezoid from the outer radius inward
        for i in range(1, len(self.radii)):
            dr = self.radii[i] - self.radii[i - 1]
            F[i] = F[i - 1] + 0.5 * dr * (radial[i] + radial[i - 1])
        return F, flat


def scrubbing_motion(path: IsotopyPath, p, delta: float, rho: float | None = None,
                     witness=None, grid=None, side: str = "min", n_t: int = 65,
                     xi: float = 0.08, run_step1: bool = True,
                     n_r: int = 40, n_ang: int = 72,
                     inner_seed_n: int = 41) -> ShorteningResult:
    """Strictly shorten a path using a linearized closed trajectory at a
    fixed extremum.

    ``witness`` may be a pair (lambda, trajectory) from
    :func:`hoferlab.linflow.lambda_conjugate`; if omitted it is computed from
    the finite-difference 2-jet family at ``p``.  Refuses when no rescaled
    closure exists (stability evidence) or when the geometric guards
    ``rho max|alpha| <= delta/6`` and ``4 delta rho max|alpha'| < m/3``
    cannot be met.

    At a fixed maximum the same construction runs with the opposite sign:
    the jets are negative semidefinite, the inner critical point is a
    maximum, and the redistribution bump lowers the local maximum to a
    constant strictly below the original one (step 1 is replaced by a
    direct annulus-gap certificate there).
    """
    if side not in ("min", "max"):
        raise ValueError("side must be 'min' or 'max'")
    sigma = 1.0 if side == "min" else -1.0
    p = np.asarray(p, dtype=float)
    if grid is None:
        grid = hofer.default_grid(path.domain, 161)

    H = path.H
    L_old = hofer.hofer_length(path, grid)
    ts = np.linspace(0.0, 1.0, n_t if n_t % 2 == 1 else n_t + 1)

    # the extremum must be fixed on the chosen side (level check)
    agg = np.min if side == "min" else np.max
    lv = np.array([float(H.value(t, p[None, :])[0]) for t in ts[::4]])
    ext = np.array([float(agg(H.value(t, grid.points))) for t in ts[::4]])
    if np.max(np.abs(lv - ext)) > 1e-6 * max(1.0, float(np.max(np.abs(ext)))) + 1e-9:
        raise PlanRefusal(f"the given point is not a fixed {side} of the family")

    # step 1 (minimum side): strict positivity on the annulus.  At a maximum
    # the mirrored repair is not built; the annulus gap must already exist.
    s1 = None
    if side == "min" and run_step1:
        s1 = step1_annulus_positivity(path, p, delta, xi=xi, grid=grid)
        base_H = s1.deformed.generator
        base_loop = s1.loop
        base_map = s1.deformed.map_family
    else:
        base_H = H
        base_loop = None
        base_map = PathMapAdapter(path)

    # jets at the extremum and the rescaling witness
    Bpath = HessianPath.from_hamiltonian(base_H, p, ts, sign=side, h=delta / 8)
    if witness is None:
        witness = lambda_conjugate(Bpath)
        if witness is None:
            raise PlanRefusal(
                "no rescaling lambda in (0,1) closes the linearized flow; "
                "nothing to scrub (evidence for stability)")
    lam, traj = witness
    loop = LoopSpec.from_trajectory(traj) if not isinstance(witness[1], LoopSpec) \
        else witness[1]
    loop = loop.scaled(1.0 / loop.max_norm)  # normalize sup |alpha| = 1

    # annulus floor/gap m and the geometric guards
    angles = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ring_r = np.linspace(delta / 2, 4 * delta, 29)
    Apts = p + np.concatenate([r * np.stack([np.cos(angles), np.sin(angles)], -1)
                               for r in ring_r])
    level = np.array([float(base_H.value(t, p[None, :])[0]) for t in ts])
    if side == "min":
        m = min(float(np.min(base_H.value(t, Apts))) - level[i]
                for i, t in enumerate(ts))
    else:
        m = min(level[i] - float(np.max(base_H.value(t, Apts)))
                for i, t in enumerate(ts))
    if m <= 0:
        raise PlanRefusal(f"annulus floor m={m:.3g} is not positive"
                          + ("" if side == "min" else
                             " (step-1 repair at maxima is not built)"))
    rho_bound1 = delta / 6.0
    rho_bound2 = m / (12.0 * delta * loop.max_prime_norm)
    rho_auto = 0.9 * min(rho_bound1, rho_bound2)
    if rho is None:
        rho = rho_auto
    if rho * loop.max_norm > rho_bound1 + 1e-15:
        raise PlanRefusal(f"guard violated: rho max|alpha| = {rho:.3g} > delta/6")
    if 4 * delta * rho * loop.max_prime_norm >= m / 3:
        raise PlanRefusal(
            f"guard violated: 4 delta rho max|alpha'| = "
            f"{4 * delta * rho * loop.max_prime_norm:.3g} >= m/3 = {m / 3:.3g}")

    fam = _loop_family(p, delta, rho, loop)
    probe = _PolarProbe(p, fam, n_r=n_r, n_ang=n_ang)
    Jm = np.array([[0.0, -1.0], [1.0, 0.0]])

    half = 4.0 * rho
    seed_ax = np.linspace(-half, half, inner_seed_n)
    SX, SY = np.meshgrid(seed_ax, seed_ax, indexing="ij")
    seeds = np.stack([SX.ravel(), SY.ravel()], -1)

    ext_curve = np.empty(len(ts))   # the side extremum of K_t over D(4 delta)
    other_curve = np.empty(len(ts))  # the opposite side, for TotVar bookkeeping
    glob_other = np.empty(len(ts))
    for i, t in enumerate(ts):
        z_t = fam.z_of_t(t)
        ap = loop.alpha_prime(t)
        a0 = loop.alpha0(t)

        def K_inner(y):  # y relative to p, exact in the translation disc
            y = np.atleast_2d(y)
            lin = z_t + (y @ (rho * (Jm @ ap)))
            return lin + base_H.value(t, p + y - rho * a0)

        vals = K_inner(seeds)
        k0 = int(np.argmin(sigma * vals))
        res = minimize(lambda y: float(sigma * K_inner(y)[0]), seeds[k0],
                       method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-17})
        inner_ext = float(sigma * res.fun)

        Fvals, flat = probe.F_and_points(t)
        Kann = Fvals.ravel() + base_H.value(t, fam.inverse(t, flat))
        ann_ext = float(np.min(Kann)) if side == "min" else float(np.max(Kann))
        if sigma * (ann_ext - inner_ext) < 0:
            raise PlanRefusal(
                f"extremum over D(4 delta) escaped the inner disc at t={t:.3f} "
                f"(annulus {ann_ext:.3g} vs inner {inner_ext:.3g}); shrink rho")
        ext_curve[i] = inner_ext
        other_curve[i] = float(np.max(Kann)) if side == "min" else float(np.min(Kann))
        gvals = base_H.value(t, grid.points)
        glob_other[i] = float(np.max(gvals)) if side == "min" else float(np.min(gvals))

    target = float(simpson(ext_curve, x=ts))
    gain_local = float(simpson(sigma * (ext_curve - level), x=ts))
    if gain_local <= 0:
        raise PlanRefusal(f"nonpositive accumulated gain {gain_local:.3g}")

    # redistribution bump: beta(t) = target - ext_curve(t), vanishing integral
    beta_vals = target - ext_curve
    fine_t = np.linspace(0, 1, 4097)
    beta_fine = np.interp(fine_t, ts, beta_vals)
    Bcum = np.concatenate([[0.0], np.cumsum(0.5 * (beta_fine[1:] + beta_fine[:-1])
                                            * np.diff(fine_t))])
    Bcum -= fine_t * Bcum[-1]  # force exact loop closure

    def beta(t):
        return float(np.interp(t, ts, beta_vals))

    def B_int(t):
        return float(np.interp(t, fine_t, Bcum))

    def fhat(r):
        return cutoff(r, 3.1 * delta, 3.9 * delta)

    def fhat_prime(r):
        return cutoff_d(r, 3.1 * delta, 3.9 * delta)

    bump_spatial = CallableHamiltonian(
        lambda t, x: fhat(np.linalg.norm(np.asarray(x, dtype=float) - p, axis=-1)),
        grad=lambda t, x: _radial_grad(x, p, fhat_prime),
        dim=path.domain.dim,
    )
    bump_gen = TimeScaledHamiltonian(bump_spatial, a=beta, a_prime=lambda t: 0.0)
    bump_loop = RadialFlowMap(center=p, f_prime=fhat_prime, T=B_int)

    # final measurement: the side extremum is the constant `target` on the
    # inner region; rings and the far field are checked explicitly
    ring = p + np.concatenate([
        r * np.stack([np.cos(angles), np.sin(angles)], -1)
        for r in np.linspace(3.05 * delta, 4.1 * delta, 9)
    ])
    new_tv = np.empty(len(ts))
    for i, t in enumerate(ts):
        ring_vals = beta(t) * fhat(np.linalg.norm(ring - p, axis=-1)) \
            + base_H.value(t, bump_loop.inverse(t, ring))
        inner_ext = ext_curve[i] + beta(t)
        far = _far_extreme(base_H, t, grid, p, 4.0 * delta, side)
        if side == "min":
            new_min = min(inner_ext, float(np.min(ring_vals)), far)
            new_max = max(glob_other[i], other_curve[i] + max(beta(t), 0.0))
        else:
            new_max = max(inner_ext, float(np.max(ring_vals)), far)
            new_min = min(glob_other[i], other_curve[i] + min(beta(t), 0.0))
        new_tv[i] = new_max - new_min
    L_new = float(simpson(new_tv, x=ts))

    scrub_gen = CallableHamiltonian(
        lambda t, x: fam.hamiltonian(t, np.atleast_2d(x)),
        grad=lambda t, x: apply_J(fam.velocity(t, np.asarray(x, dtype=float))),
        dim=path.domain.dim,
    )
    gen_after_scrub = compose_hamiltonians(scrub_gen, base_H, fam.inverse)
    total_gen = compose_hamiltonians(bump_gen, gen_after_scrub, bump_loop.inverse)
    loops_only = ComposedMapFamily(bump_loop, fam) if base_loop is None \
        else ComposedMapFamily(bump_loop, ComposedMapFamily(fam, base_loop))
    total_map = ComposedMapFamily(bump_loop, ComposedMapFamily(fam, base_map))
    deformed = DeformedPath(domain=path.domain, generator=total_gen,
                            map_family=total_map, loop_family=loops_only)

    cloud = path.cloud
    disc = float(np.max(np.linalg.norm(total_map(1.0, cloud)
                                       - path.time_one(cloud), axis=-1)))

    jet_vals = np.array([0.5 * np.asarray(loop.alpha(t)) @ Bpath.at(t)
                         @ np.asarray(loop.alpha(t)) for t in ts])
    formula_gain = abs((1 - lam) * lam * rho**2 * float(simpson(jet_vals, x=ts)))

    return ShorteningResult(
        kind="Scrubbing" if side == "min" else "Scrubbing(max)",
        original_length=L_old,
        new_length=L_new,
        endpoint_discrepancy=disc,
        deformed=deformed,
        details={
            "side": side,
            "lambda": lam,
            "rho": rho,
            "delta": delta,
            "annulus_floor_m": m,
            "gain_measured": gain_local,
            "gain_jet_formula": formula_gain,
            "extremum_curve": ext_curve,
            "times": ts,
            "step1": None if s1 is None else s1.to_dict(),
        },
    )


def _far_extreme(base_H, t, grid, p, radius, side):
    pts = grid.points
    far = np.linalg.norm(pts - p, axis=-1) >= radius
    vals = base_H.value(t, pts[far])
    return float(np.min(vals)) if side == "min" else float(np.max(vals))


# ---------------------------------------------------------------------------
# slowing-down loops (general dimension route)
# ---------------------------------------------------------------------------


def slowdown_loop(traj: Trajectory2, eps_slow: float = 0.1):
    """Close an [0, t'] trajectory into a loop on [0, 1] by slowing time.

    Builds a C^1 monotone f: [0,1] -> [0, t'] equal to the identity on
    [0, t' - eps_slow] and mapping the rest onto [t' - eps_slow, t'];
    returns (f, loop) with loop = traj o f as a LoopSpec.
    """
    t_prime = float(traj.times[-1])
    if not (0 < t_prime <= 1.0):
        raise ValueError("trajectory must live on [0, t'] with t' in (0, 1]")
    if t_prime >= 1.0 - 1e-12:
        f = lambda s: s
    else:
        eps = min(eps_slow, 0.9 * t_prime)
        a = t_prime - eps          # identity up to here
        span = 1.0 - a             # remaining source length
        target = eps / span        # required mean slope on the tail
        # w(sigma) = (1 - smoothstep)^p, p chosen so the mean slope matches
        sig = np.linspace(0, 1, 2049)
        base = 1.0 - smoothstep(sig)

        def mean_for(pw):
            return float(np.trapezoid(base**pw, sig))

        lo, hi = 1e-3, 1.0
        while mean_for(hi) > target:
            lo, hi = hi, hi * 2
            if hi > 1e4:
                break
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if mean_for(mid) > target:
                lo = mid
            else:
                hi = mid
        pw = 0.5 * (lo + hi)
        wvals = base**pw
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (wvals[1:] + wvals[:-1]) * np.diff(sig))])
        cum *= eps / cum[-1]  # exact endpoint

        def f(s):
            s = np.asarray(s, dtype=float)
            tail = a + np.interp((s - a) / span, sig, cum)
            return np.where(s <= a, s, tail)

    def alpha(t):
        return traj.at(float(np.clip(f(t), 0.0, t_prime)))

    hs = 1e-6

    def alpha_prime(t):
        t = float(t)
        return (np.asarray(alpha(min(t + hs, 1.0))) - np.asarray(alpha(max(t - hs, 0.0)))) / (
            min(t + hs, 1.0) - max(t - hs, 0.0))

    return f, LoopSpec(alpha=alpha, alpha_prime=alpha_prime, label="slowdown")
