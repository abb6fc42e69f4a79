"""Uniform boundary MERA: channels, spectra, observables and optimization."""

from .channels import ChannelSet, Superoperator, build_all, build_twopoint
from .errors import BmeraError, ConstraintViolation, NotMixing
from .network import MeraConfig, MeraTensors, check_constraints, load_tensors, random_isometric, save_tensors
from .observables import (
    Context,
    Hamiltonian3,
    LocalOperator,
    boundary_energy_deviation,
    boundary_profile,
    correlator_profile,
    ising_hamiltonian,
)
from .spectral import fixed_point, scaling_operators, spectrum

__all__ = [
    "BmeraError",
    "ChannelSet",
    "ConstraintViolation",
    "Context",
    "Hamiltonian3",
    "LocalOperator",
    "MeraConfig",
    "MeraTensors",
    "NotMixing",
    "Superoperator",
    "boundary_energy_deviation",
    "boundary_profile",
    "build_all",
    "build_twopoint",
    "check_constraints",
    "correlator_profile",
    "fixed_point",
    "ising_hamiltonian",
    "load_tensors",
    "random_isometric",
    "save_tensors",
    "scaling_operators",
    "spectrum",
]
