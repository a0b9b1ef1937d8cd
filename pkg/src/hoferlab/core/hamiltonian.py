"""Time-dependent Hamiltonians with analytic or finite-difference access.

A Hamiltonian here is a scalar field ``H(t, x)`` on a phase domain together
with gradient and time-derivative access.  Gradients fall back to central
finite differences with step ``eps**(1/3) * scale(x)`` when no analytic
gradient is supplied.
"""

from __future__ import annotations

import numpy as np

from .domain import PhaseDomain, apply_J

__all__ = [
    "Hamiltonian",
    "CallableHamiltonian",
    "TimeScaledHamiltonian",
    "SumHamiltonian",
    "ScaledHamiltonian",
    "ShiftedHamiltonian",
    "QuadraticHamiltonian",
    "SphereProfileHamiltonian",
    "ComposedHamiltonian",
    "PulledBackHamiltonian",
    "fd_step",
    "fd_hessian",
    "symplectic_gradient",
    "poisson_bracket",
    "compose_hamiltonians",
]

_EPS = np.finfo(float).eps


def fd_step(x: np.ndarray) -> np.ndarray:
    """Central-difference step ~ eps^(1/3) scaled to the point magnitude."""
    scale = np.maximum(1.0, np.max(np.abs(x), axis=-1, keepdims=True))
    return _EPS ** (1.0 / 3.0) * scale


class Hamiltonian:
    """Base class; subclasses must implement ``value``.

    ``grad`` and ``dt`` default to central finite differences.  All methods
    are vectorized over leading axes of ``x`` (shape (..., dim)).
    """

    dim: int = 2
    support = None  # optional bounding descriptor, used by some checks

    def value(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = fd_step(x)
        out = np.empty_like(x)
        for i in range(x.shape[-1]):
            xp = x.copy()
            xm = x.copy()
            xp[..., i] += h[..., 0]
            xm[..., i] -= h[..., 0]
            out[..., i] = (self.value(t, xp) - self.value(t, xm)) / (2.0 * h[..., 0])
        return out

    def dt(self, t: float, x: np.ndarray) -> np.ndarray:
        h = _EPS ** (1.0 / 3.0) * max(1.0, abs(t))
        return (self.value(t + h, x) - self.value(t - h, x)) / (2.0 * h)

    def __call__(self, t, x):
        return self.value(t, x)

    def __add__(self, other):
        return SumHamiltonian(self, other)

    def __mul__(self, c):
        return ScaledHamiltonian(self, float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledHamiltonian(self, -1.0)


class CallableHamiltonian(Hamiltonian):
    def __init__(self, fun, grad=None, dt=None, dim=2, support=None):
        self._fun = fun
        self._grad = grad
        self._dt = dt
        self.dim = dim
        self.support = support

    def value(self, t, x):
        return np.asarray(self._fun(t, np.asarray(x, dtype=float)), dtype=float)

    def grad(self, t, x):
        if self._grad is None:
            return super().grad(t, x)
        return np.asarray(self._grad(t, np.asarray(x, dtype=float)), dtype=float)

    def dt(self, t, x):
        if self._dt is None:
            return super().dt(t, x)
        return np.asarray(self._dt(t, np.asarray(x, dtype=float)), dtype=float)


class TimeScaledHamiltonian(Hamiltonian):
    """a(t) * f(x) with exact time derivative a'(t) * f(x).

    The workhorse for loops of the form "flow of f run at rate a(t)": the
    generating Hamiltonian of t -> (time-A(t) flow of f), A = int a, is
    exactly a(t) f.
    """

    def __init__(self, spatial: Hamiltonian, a, a_prime):
        self.spatial = spatial
        self.a = a
        self.a_prime = a_prime
        self.dim = spatial.dim
        self.support = spatial.support

    def value(self, t, x):
        return self.a(t) * self.spatial.value(0.0, x)

    def grad(self, t, x):
        return self.a(t) * self.spatial.grad(0.0, x)

    def dt(self, t, x):
        return self.a_prime(t) * self.spatial.value(0.0, x)


class SumHamiltonian(Hamiltonian):
    def __init__(self, *terms):
        self.terms = terms
        self.dim = terms[0].dim

    def value(self, t, x):
        return sum(h.value(t, x) for h in self.terms)

    def grad(self, t, x):
        return sum(h.grad(t, x) for h in self.terms)

    def dt(self, t, x):
        return sum(h.dt(t, x) for h in self.terms)


class ScaledHamiltonian(Hamiltonian):
    def __init__(self, inner: Hamiltonian, c: float):
        self.inner = inner
        self.c = c
        self.dim = inner.dim
        self.support = inner.support

    def value(self, t, x):
        return self.c * self.inner.value(t, x)

    def grad(self, t, x):
        return self.c * self.inner.grad(t, x)

    def dt(self, t, x):
        return self.c * self.inner.dt(t, x)


class ShiftedHamiltonian(Hamiltonian):
    """H(t, x) + c(t), used to renormalize minima to zero."""

    def __init__(self, inner: Hamiltonian, shift):
        self.inner = inner
        self.shift = shift if callable(shift) else (lambda t, s=float(shift): s)
        self.dim = inner.dim
        self.support = inner.support

    def value(self, t, x):
        return self.inner.value(t, x) + self.shift(t)

    def grad(self, t, x):
        return self.inner.grad(t, x)

    def dt(self, t, x):
        ht = 1e-6
        return self.inner.dt(t, x) + (self.shift(t + ht) - self.shift(t - ht)) / (2 * ht)


class QuadraticHamiltonian(Hamiltonian):
    """H(t, x) = 0.5 x . B_t x for a symmetric matrix family B_t."""

    def __init__(self, B):
        self._B = B if callable(B) else (lambda t, M=np.asarray(B, dtype=float): M)
        self.dim = int(np.asarray(self._B(0.0)).shape[0])

    def B(self, t):
        return np.asarray(self._B(t), dtype=float)

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.B(t), x)

    def grad(self, t, x):
        return np.asarray(x, dtype=float) @ self.B(t).T

    def dt(self, t, x):
        h = 1e-6
        x = np.asarray(x, dtype=float)
        dB = (self.B(t + h) - self.B(t - h)) / (2 * h)
        return 0.5 * np.einsum("...i,ij,...j->...", x, dB, x)


class SphereProfileHamiltonian(Hamiltonian):
    """H = h(z) on the sphere chart; the flow rotates each parallel.

    ``h`` and ``h_prime`` are callables on [-1, 1].
    """

    def __init__(self, h, h_prime):
        self.h = h
        self.h_prime = h_prime
        self.dim = 2

    def value(self, t, x):
        return np.asarray(self.h(np.asarray(x, dtype=float)[..., 1]), dtype=float)

    def grad(self, t, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., 1] = self.h_prime(x[..., 1])
        return g

    def dt(self, t, x):
        return np.zeros(np.asarray(x).shape[:-1])


class PulledBackHamiltonian(Hamiltonian):
    """H(t, psi(t, x)) for a time-indexed map family psi."""

    def __init__(self, inner: Hamiltonian, psi):
        self.inner = inner
        self.psi = psi
        self.dim = inner.dim

    def value(self, t, x):
        return self.inner.value(t, self.psi(t, np.asarray(x, dtype=float)))

    def dt(self, t, x):
        h = 1e-6
        return (self.value(t + h, x) - self.value(t - h, x)) / (2 * h)


class ComposedHamiltonian(Hamiltonian):
    """Generator of the timewise composition Psi_t o phi_t.

    ``H_psi * H_phi = H_Psi + H_phi o Psi_t^{-1}``; ``psi_inverse`` is a
    callable ``(t, points) -> points``.
    """

    def __init__(self, h_psi: Hamiltonian, h_phi: Hamiltonian, psi_inverse):
        self.h_psi = h_psi
        self.h_phi = h_phi
        self.psi_inverse = psi_inverse
        self.dim = h_phi.dim

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.h_psi.value(t, x) + self.h_phi.value(t, self.psi_inverse(t, x))

    def dt(self, t, x):
        h = 1e-6
        return (self.value(t + h, x) - self.value(t - h, x)) / (2 * h)


def compose_hamiltonians(h_psi: Hamiltonian, h_phi: Hamiltonian, psi_inverse) -> ComposedHamiltonian:
    """Generating Hamiltonian of t -> Psi_t o phi_t (timewise composition)."""
    return ComposedHamiltonian(h_psi, h_phi, psi_inverse)


def symplectic_gradient(H: Hamiltonian, t: float, x: np.ndarray,
                        domain: PhaseDomain | None = None) -> np.ndarray:
    """X_H = -J grad H, the field with omega(X_H, .) = dH."""
    x = np.asarray(x, dtype=float)
    if domain is not None:
        if not np.all(domain.contains(x)):
            from .domain import DomainError

            raise DomainError("point outside the phase domain")
        domain.check_chart(x)
    return -apply_J(H.grad(t, x))


def poisson_bracket(F: Hamiltonian, G: Hamiltonian, t: float, x: np.ndarray) -> np.ndarray:
    """{F, G} = grad F . (J grad G) = dF(X_G).

    The orientation is pinned by the flow-composition Taylor test: with this
    sign the generator of eps -> (time-1 flow of eps G_t) o phi_t expands as
    H_t + eps (dG_t/dt + {-G_t, H_t}) + o(eps).  In particular {x1, x2} = -1.
    """
    x = np.asarray(x, dtype=float)
    return np.sum(F.grad(t, x) * apply_J(G.grad(t, x)), axis=-1)


def fd_hessian(H: Hamiltonian, t: float, x: np.ndarray, h: float | None = None) -> np.ndarray:
    """Symmetrized central second differences of H at a single point."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if h is None:
        h = _EPS ** 0.25 * max(1.0, float(np.max(np.abs(x))))
    B = np.empty((d, d))
    f0 = float(H.value(t, x))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        B[i, i] = (float(H.value(t, x + ei)) - 2 * f0 + float(H.value(t, x - ei))) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            fpp = float(H.value(t, x + ei + ej))
            fpm = float(H.value(t, x + ei - ej))
            fmp = float(H.value(t, x - ei + ej))
            fmm = float(H.value(t, x - ei - ej))
            B[i, j] = B[j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    return 0.5 * (B + B.T)
