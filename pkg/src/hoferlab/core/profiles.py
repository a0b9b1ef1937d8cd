"""Scalar profile functions shared by the constructive deformations.

Everywhere a construction says "smoothed" we use the quintic smoothstep
(C^2 matching at both ends); bump plateaus and annulus cutoffs are built
from it radially.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "smoothstep",
    "smoothstep_d",
    "ramp",
    "cutoff",
    "cutoff_d",
    "plateau_bump",
    "plateau_bump_grad",
    "cinf_bump",
    "cinf_bump_d",
]


def smoothstep(s):
    """Quintic smoothstep: 0 for s<=0, 1 for s>=1, C^2 at the ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def smoothstep_d(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    sc = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * sc * sc * (1.0 - sc) ** 2, 0.0)


def ramp(x, lo, hi):
    """smoothstep rescaled to rise on [lo, hi]."""
    return smoothstep((np.asarray(x, dtype=float) - lo) / (hi - lo))


def cutoff(r, r_one, r_zero):
    """Radial cutoff: 1 for r<=r_one, 0 for r>=r_zero (r_one < r_zero)."""
    return 1.0 - smoothstep((np.asarray(r, dtype=float) - r_one) / (r_zero - r_one))


def cutoff_d(r, r_one, r_zero):
    return -smoothstep_d((np.asarray(r, dtype=float) - r_one) / (r_zero - r_one)) / (
        r_zero - r_one
    )


def plateau_bump(x, center, r_flat, r_supp):
    """Radial plateau bump: 1 on |x-c|<=r_flat, 0 outside r_supp."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(center), axis=-1)
    return cutoff(r, r_flat, r_supp)


def plateau_bump_grad(x, center, r_flat, r_supp):
    x = np.asarray(x, dtype=float)
    d = x - np.asarray(center)
    r = np.linalg.norm(d, axis=-1)
    rs = np.where(r > 1e-300, r, 1.0)
    dv = cutoff_d(r, r_flat, r_supp)
    return (dv / rs)[..., None] * d


def cinf_bump(s):
    """C-infinity bump exp(1 - 1/(1-s^2)) on |s|<1, 0 outside; peak value 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


def cinf_bump_d(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si)) * (-2.0 * si / (1.0 - si * si) ** 2)
    return out
