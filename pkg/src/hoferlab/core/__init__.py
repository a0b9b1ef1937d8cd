"""Symplectic kernel: domains, structures J and omega, flows, brackets."""

from .domain import (
    BoxGrid,
    ChartError,
    DomainError,
    J_matrix,
    PhaseDomain,
    SphereGrid,
    apply_J,
    euclidean,
    omega,
    sphere,
)
from .hamiltonian import (
    CallableHamiltonian,
    ComposedHamiltonian,
    Hamiltonian,
    PulledBackHamiltonian,
    QuadraticHamiltonian,
    ScaledHamiltonian,
    ShiftedHamiltonian,
    SphereProfileHamiltonian,
    SumHamiltonian,
    TimeScaledHamiltonian,
    compose_hamiltonians,
    fd_hessian,
    fd_step,
    poisson_bracket,
    symplectic_gradient,
)
from .flow import (
    AutonomousFlowMap,
    ComposedMapFamily,
    IdentityMap,
    IntegrationError,
    IsotopyPath,
    RadialFlowMap,
    SphereRotationMap,
    Trajectory,
    TranslationFamily,
    flow,
    flow_points,
    reparametrized_path,
    rk4_flow,
)
from . import profiles

__all__ = [name for name in dir() if not name.startswith("_")]
