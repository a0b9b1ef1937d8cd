"""Shared result types and measurement helpers for the deformations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from ..core.flow import IsotopyPath, flow_points
from ..core.hamiltonian import Hamiltonian

__all__ = [
    "PlanRefusal",
    "DeformedPath",
    "ShorteningResult",
    "piecewise_simpson_nodes",
    "totvar_on_points",
    "length_on_pieces",
    "endpoint_discrepancy",
]


class PlanRefusal(RuntimeError):
    """A construction's preconditions failed; carries the diagnostic."""


@dataclass
class DeformedPath:
    """A deformed isotopy: generating Hamiltonian plus exact map family."""

    domain: object
    generator: Hamiltonian
    map_family: object  # (t, pts) -> pts, with .inverse
    loop_family: object = None  # the composed loops alone, without the base path

    def map_at(self, t, pts):
        return self.map_family(t, pts)

    def as_isotopy(self, n_times=65, cloud=None, tol=1e-9) -> IsotopyPath:
        return IsotopyPath.from_hamiltonian(self.domain, self.generator,
                                            n_times=n_times, cloud=cloud, tol=tol,
                                            map_family=self.map_family)


@dataclass
class ShorteningResult:
    kind: str
    original_length: float
    new_length: float
    endpoint_discrepancy: float
    deformed: DeformedPath | None = None
    details: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.original_length - self.new_length

    def to_dict(self):
        return {
            "kind": self.kind,
            "original_length": self.original_length,
            "new_length": self.new_length,
            "margin": self.margin,
            "endpoint_discrepancy": self.endpoint_discrepancy,
            "details": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                        for k, v in self.details.items()},
        }


def piecewise_simpson_nodes(breaks, nodes_per_piece: int = 33):
    """Simpson nodes per smooth piece; breaks must be sorted, in [0, 1].

    Endpoints are nudged inward so integrands with jumps at the breakpoints
    (window-edge rate switches) are sampled at their one-sided limits.
    """
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a < 1e-12:
            continue
        n = nodes_per_piece if nodes_per_piece % 2 == 1 else nodes_per_piece + 1
        ts = np.linspace(a, b, n)
        nudge = 1e-9 * max(1.0, b - a)
        ts[0] += nudge
        ts[-1] -= nudge
        pieces.append(ts)
    return pieces


def totvar_on_points(H: Hamiltonian, t: float, pts: np.ndarray) -> float:
    vals = H.value(t, pts)
    return float(np.max(vals) - np.min(vals))


def length_on_pieces(H: Hamiltonian, pieces, pts) -> float:
    """Integrate TotVar over piecewise-smooth time segments (Simpson each)."""
    total = 0.0
    for ts in pieces:
        vals = [totvar_on_points(H, t, pts) for t in ts]
        total += float(simpson(vals, x=ts))
    return total


def endpoint_discrepancy(deformed: DeformedPath, path: IsotopyPath, cloud=None,
                         tol: float = 1e-10, via_generator: bool = True) -> float:
    """sup over the cloud of |new phi_1(x) - old phi_1(x)|.

    With ``via_generator`` the deformed endpoint is obtained by integrating
    the composed generating Hamiltonian, which exercises the composition
    formula end to end; otherwise the exact map family is used.
    """
    pts = path.cloud if cloud is None else np.atleast_2d(cloud)
    ref = path.time_one(pts)
    if via_generator:
        new = flow_points(deformed.generator, pts, 0.0, 1.0, tol=tol)
    else:
        new = deformed.map_at(1.0, pts)
    return float(np.max(np.linalg.norm(new - ref, axis=-1)))


class PathMapAdapter:
    """Wrap an IsotopyPath's flow maps in the map-family protocol."""

    def __init__(self, path: IsotopyPath):
        self.path = path

    def __call__(self, t, pts):
        return self.path.map_at(t, pts)

    def inverse(self, t, pts):
        raise NotImplementedError("inverse flow of a base path is not provided")
