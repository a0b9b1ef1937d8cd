"""Length reduction for paths whose extremum sets have empty intersection.

Given times t_0 < ... < t_k with empty common maxset, a nonpositive bump K
(constant -c on a plateau covering maxset H_{t_0}, supported away from every
maxset H_{t_j}) is flowed in during a window of half-width eps around t_0 and
flowed out again around each t_j.  The loop closes exactly (the total flow
time returns to zero), so the endpoints are untouched, while the composed
Hamiltonian's maximum drops by c on the t_0 window; the length decreases by
about 2 c eps.  The mirrored construction raises the minimum instead.
"""

from __future__ import annotations

import numpy as np

from ..core.domain import BoxGrid
from ..core.flow import ComposedMapFamily, IsotopyPath, RadialFlowMap
from ..core.hamiltonian import (
    CallableHamiltonian,
    TimeScaledHamiltonian,
    compose_hamiltonians,
)
from ..core.profiles import plateau_bump, plateau_bump_grad
from .. import hofer
from .common import (
    DeformedPath,
    PathMapAdapter,
    PlanRefusal,
    ShorteningResult,
    endpoint_discrepancy,
    length_on_pieces,
    piecewise_simpson_nodes,
)

__all__ = ["shorten_no_fixed_max", "support_disjoint_deformation"]


def _window_profile(times, eps):
    """Multiplicity schedule: k flows in at t_0, one flows out at each t_j.

    Lambda(t) is the accumulated flow time of the bump Hamiltonian; it
    returns to zero at t = 1, which is what preserves the endpoints.
    """
    t0 = times[0]
    rest = times[1:]
    k = len(rest)

    def Lam(t):
        up = k * np.clip(t - (t0 - eps), 0.0, 2.0 * eps)
        down = sum(np.clip(t - (tj - eps), 0.0, 2.0 * eps) for tj in rest)
        return up - down

    def Lam_prime(t):
        rate = k * float((t0 - eps) < t < (t0 + eps))
        for tj in rest:
            rate -= float((tj - eps) < t < (tj + eps))
        return rate

    return Lam, Lam_prime


def shorten_no_fixed_max(path: IsotopyPath, times, nu: float, delta_bump: float,
                         eps: float, depth: float | None = None, side: str = "max",
                         grid=None, tol_ext: float = 1e-6, nodes_per_piece: int = 33,
                         max_halvings: int = 8) -> ShorteningResult:
    """Shorten a path with no fixed maximum (or minimum, with side="min").

    times: t_0 < ... < t_k with empty common maxset (checked).
    nu: neighbourhood radius added around maxset H_{t_0} for the bump plateau.
    delta_bump: width of the bump's transition collar.
    eps: half-width of the flow windows; halved automatically while the
         support shift spoils the reduction, refusing below eps / 2^max_halvings.
    depth: bump depth c; by default a safe fraction of the available gap.
    """
    if side not in ("max", "min"):
        raise ValueError("side must be 'max' or 'min'")
    times = sorted(float(t) for t in times)
    if len(times) < 2:
        raise PlanRefusal("need at least two times with drifting extremum sets")
    if grid is None:
        grid = hofer.default_grid(path.domain)
    H = path.H

    # precondition: common extremum set over the given times is empty
    masks = []
    for tj in times:
        mn, mx = hofer.extremum_sets(H, tj, grid, tol_ext)
        masks.append(mx.mask if side == "max" else mn.mask)
    inter = masks[0]
    from scipy import ndimage
    structure = np.ones((3,) * inter.ndim, dtype=bool)
    for m in masks[1:]:
        inter = inter & ndimage.binary_dilation(m, structure=structure)
    if np.any(inter):
        raise PlanRefusal(
            f"common {side}set over the selected times is nonempty; "
            "the construction does not apply")

    # bump geometry: plateau covering maxset H_{t_0} + nu, away from later sets
    X0_pts = grid.points[masks[0].ravel()]
    center = X0_pts.mean(axis=0)
    r_cover = float(np.max(np.linalg.norm(X0_pts - center, axis=-1)))
    r_flat = r_cover + nu
    r_supp = r_flat + delta_bump
    for m, tj in zip(masks[1:], times[1:]):
        pts_j = grid.points[m.ravel()]
        d = float(np.min(np.linalg.norm(pts_j - center, axis=-1)))
        if d <= r_supp:
            raise PlanRefusal(
                f"bump support (radius {r_supp:.3f}) reaches {side}set at t={tj}")

    # depth: keep the composed extremum moving the right way without creating
    # a new one on the other side; default from the measured gap on the plateau
    vals0 = H.value(times[0], grid.points)
    ref = float(np.max(vals0)) if side == "max" else float(np.min(vals0))
    ring = np.linalg.norm(grid.points - center, axis=-1) <= r_supp
    ring_vals = H.value(times[0], grid.points[ring])
    if side == "max":
        gap = ref - float(np.min(ring_vals))
    else:
        gap = float(np.max(ring_vals)) - ref
    if depth is None:
        depth = 0.25 * gap
    if depth <= 0 or depth >= gap:
        raise PlanRefusal(f"bump depth {depth} outside the admissible gap (0, {gap:.3g})")
    c_signed = -depth if side == "max" else depth

    spatial = CallableHamiltonian(
        lambda t, x: c_signed * plateau_bump(x, center, r_flat, r_supp),
        grad=lambda t, x: c_signed * plateau_bump_grad(x, center, r_flat, r_supp),
        dim=path.domain.dim,
    )

    def f_prime(r):
        from ..core.profiles import cutoff_d
        return c_signed * cutoff_d(r, r_flat, r_supp)

    base_grid_pts = grid.points
    L_old_full = hofer.hofer_length(path, grid)
    eps_try = float(eps)
    for attempt in range(max_halvings + 1):
        ok, result = _attempt(path, H, times, eps_try, spatial, center, f_prime,
                              depth, side, base_grid_pts, nodes_per_piece, L_old_full)
        if ok:
            result.details["eps"] = eps_try
            result.details["depth"] = depth
            result.details["halvings"] = attempt
            return result
        eps_try *= 0.5
    raise PlanRefusal(
        f"no admissible eps found down to {eps_try:.2e}: the support shift keeps "
        "reaching the moving extremum (largest admissible eps is below the floor)")


def _attempt(path, H, times, eps, spatial, center, f_prime, depth, side, pts,
             nodes_per_piece, L_old_full):
    # windows must be disjoint and inside (0, 1)
    edges = [0.0]
    for tj in times:
        if tj - eps <= edges[-1] or tj + eps >= 1.0:
            return False, None
        edges += [tj - eps, tj + eps]
    edges.append(1.0)

    Lam, Lam_prime = _window_profile(times, eps)
    loop = RadialFlowMap(center=center, f_prime=f_prime, T=Lam)
    generator = TimeScaledHamiltonian(spatial, a=Lam_prime, a_prime=lambda t: 0.0)
    composed = compose_hamiltonians(generator, H, loop.inverse)
    deformed = DeformedPath(domain=path.domain, generator=composed,
                            map_family=ComposedMapFamily(loop, PathMapAdapter(path)))

    pieces = piecewise_simpson_nodes(edges, nodes_per_piece)
    L_new = length_on_pieces(composed, pieces, pts)
    L_old = length_on_pieces(H, pieces, pts)

    # admissibility: the reduction must be visible near t_0 at close to depth
    t0 = times[0]
    mid_vals_new = _side_extreme(composed, t0, pts, side)
    mid_vals_old = _side_extreme(H, t0, pts, side)
    achieved = (mid_vals_old - mid_vals_new) if side == "max" else (mid_vals_new - mid_vals_old)
    if achieved < 0.8 * depth:
        return False, None
    disc = endpoint_discrepancy(deformed,
                                path, via_generator=True)
    res = ShorteningResult(
        kind="NoFixedMax" if side == "max" else "NoFixedMin",
        original_length=L_old,
        new_length=L_new,
        endpoint_discrepancy=disc,
        deformed=deformed,
        details={"expected_margin": 2.0 * depth * eps,
                 "L_old_simpson_full": L_old_full,
                 "achieved_depth_at_t0": achieved},
    )
    return True, res


def _side_extreme(H, t, pts, side):
    vals = H.value(t, pts)
    return float(np.max(vals)) if side == "max" else float(np.min(vals))


def support_disjoint_deformation(path: IsotopyPath, center, r_flat: float,
                                 r_supp: float, amplitude: float,
                                 grid=None) -> ShorteningResult:
    """Equal-length deformation: compose with a loop supported away from the
    fixed extrema (the non-uniqueness mechanism for geodesics).

    The loop is generated by b(t) f with f a radial plateau at ``center`` and
    b a smooth profile with vanishing integral, so endpoints are preserved;
    when the amplitude is small and the support avoids every extremum set the
    total variation of the composed Hamiltonian is unchanged.
    """
    if grid is None:
        grid = hofer.default_grid(path.domain)
    H = path.H
    center = np.asarray(center, dtype=float)

    def b(t):
        return amplitude * np.sin(2 * np.pi * t)

    def B_int(t):
        return amplitude * (1.0 - np.cos(2 * np.pi * t)) / (2 * np.pi)

    spatial = CallableHamiltonian(
        lambda t, x: plateau_bump(x, center, r_flat, r_supp),
        grad=lambda t, x: plateau_bump_grad(x, center, r_flat, r_supp),
        dim=path.domain.dim,
    )
    from ..core.profiles import cutoff_d

    loop = RadialFlowMap(center=center, f_prime=lambda r: cutoff_d(r, r_flat, r_supp),
                         T=B_int)
    generator = TimeScaledHamiltonian(spatial, a=b, a_prime=lambda t: 2 * np.pi * amplitude * np.cos(2 * np.pi * t))
    composed = compose_hamiltonians(generator, H, loop.inverse)
    deformed = DeformedPath(domain=path.domain, generator=composed,
                            map_family=ComposedMapFamily(loop, PathMapAdapter(path)))
    ts = np.linspace(0, 1, 65)
    pts = grid.points
    L_new = length_on_pieces(composed, [ts], pts)
    L_old = length_on_pieces(H, [ts], pts)
    disc = endpoint_discrepancy(deformed, path, via_generator=True)
    return ShorteningResult(kind="EqualLength", original_length=L_old,
                            new_length=L_new, endpoint_discrepancy=disc,
                            deformed=deformed, details={"amplitude": amplitude})
