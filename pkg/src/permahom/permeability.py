"""Permeability tensor from the two cell solutions.

Two independent assemblies are always produced: the energy form
``ν ∫ Dw^i : Dw^j`` (canonical, symmetric) and the mean-velocity form
``∫ w^i_j``.  They coincide in the continuum, so their gap is an accuracy
audit of the cell solve.
"""
from dataclasses import dataclass

import numpy as np

from .cell_stokes import dirichlet_form, solution_mean_velocity, solve_cell_problems
from .errors import MaskMismatch, SPDViolation


@dataclass(frozen=True)
class PermeabilityTensor:
    K: np.ndarray
    K_alt: np.ndarray
    nu: float
    n: int
    asymmetry: float = 0.0

    @property
    def consistency_gap(self):
        return float(np.max(np.abs(self.K - self.K_alt)))

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.K)


def _check_pair(sol1, sol2):
    if not sol1.mask.same_as(sol2.mask):
        raise MaskMismatch("cell solutions were computed on different masks")
    if sol1.nu != sol2.nu:
        raise MaskMismatch(f"cell solutions use different viscosities ({sol1.nu} vs {sol2.nu})")
    if (sol1.forcing, sol2.forcing) != (1, 2):
        raise ValueError("expected solutions for forcings e_1 and e_2, in that order")


def assemble_K_energy(sol1, sol2, return_asymmetry=False):
    """``K_ij = ν h³ Σ Dw^i : Dw^j``, symmetrized."""
    _check_pair(sol1, sol2)
    ws = (sol1.w.u, sol2.w.u)
    g = sol1.grid
    K = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            K[i, j] = sol1.nu * dirichlet_form(ws[i], ws[j], g)
    asym = abs(K[0, 1] - K[1, 0])
    K = 0.5 * (K + K.T)
    if return_asymmetry:
        return K, asym
    return K


def assemble_K_mean(sol1, sol2):
    """``K_alt[i, j]`` = j-th component of the mean velocity of ``w^i``."""
    _check_pair(sol1, sol2)
    return np.array([solution_mean_velocity(s)[:2] for s in (sol1, sol2)])


def permeability_tensor(sol1, sol2):
    K, asym = assemble_K_energy(sol1, sol2, return_asymmetry=True)
    return PermeabilityTensor(K, assemble_K_mean(sol1, sol2), sol1.nu, sol1.mask.n, asym)


def compute_permeability(mask, cfg=None):
    """Solve both cell problems on ``mask`` and assemble the tensor."""
    sol1, sol2 = solve_cell_problems(mask, cfg)
    return permeability_tensor(sol1, sol2), (sol1, sol2)


@dataclass(frozen=True)
class CertificationReport:
    eigenvalues: tuple
    symmetry_defect: float
    consistency_gap: float

    @property
    def passed(self):
        return min(self.eigenvalues) > 0


def certify(K):
    """Check symmetric positive definiteness; raise :class:`SPDViolation` otherwise."""
    if isinstance(K, PermeabilityTensor):
        M, gap = K.K, K.consistency_gap
    else:
        M, gap = np.asarray(K, dtype=float), 0.0
    if M.shape != (2, 2):
        raise ValueError("permeability must be a 2x2 matrix")
    sym = float(abs(M[0, 1] - M[1, 0]))
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    report = CertificationReport(tuple(float(e) for e in eig), sym, gap)
    if eig.min() <= 0:
        raise SPDViolation(f"permeability is not positive definite (eigenvalues {eig})")
    return report
