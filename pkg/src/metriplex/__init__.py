"""Metriplectic dynamics on noncanonical Hamiltonian systems.

Poisson operators and their identities, perturbed particle dynamics, grid
Fokker-Planck relaxation, grid brackets on functionals, and a truncated
spectral drift-wave model.
"""

__version__ = "0.1.0"
