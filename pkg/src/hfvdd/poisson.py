"""Semilinear Poisson problem and thermal equilibrium.

Find phi = psi + phi^D with psi vanishing on Dirichlet faces such that, for
every hybrid test vector v vanishing on Dirichlet faces,

    a^phi(phi, v) = sum_K |K| (C_K + g(z^P_K - phi_K) - g(z^N_K + phi_K)) v_K.

The problem is the Euler-Lagrange equation of a strictly convex energy J, so
Newton's method is globalised by Armijo backtracking on J.  The cell block of
the Hessian is diagonal and is eliminated before the face solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .condense import condensed_solve
from .hfv import HybridVector, LocalDiffusion, stiffness_matrix
from .mesh import Mesh
from .statistics import Statistics


class PoissonError(RuntimeError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


@dataclass(eq=False)
class PoissonProblem:
    mesh: Mesh
    local: LocalDiffusion
    doping: np.ndarray
    z_n: np.ndarray
    z_p: np.ndarray
    phi_dirichlet: HybridVector
    model: Statistics
    charge: bool = True

    def __post_init__(self):
        self.z_n = np.broadcast_to(np.asarray(self.z_n, dtype=float), (self.mesh.ncells,)).copy()
        self.z_p = np.broadcast_to(np.asarray(self.z_p, dtype=float), (self.mesh.ncells,)).copy()
        if self.charge and not (np.all(np.isfinite(self.z_n)) and np.all(np.isfinite(self.z_p))):
            raise ValueError("z fields must be finite")
        if self.mesh.dirichlet_faces.size == 0:
            raise ValueError("Poisson problem needs Dirichlet faces")
        self.K = stiffness_matrix(self.mesh, self.local)
        nC = self.mesh.ncells
        self.free = np.concatenate([np.arange(nC), nC + np.flatnonzero(~self.mesh.dirichlet_mask)])

    def scaled(self, s):
        return PoissonProblem(self.mesh, self.local, s * self.doping, s * self.z_n, s * self.z_p,
                              s * self.phi_dirichlet, self.model, self.charge)


@dataclass
class PoissonConfig:
    tol: float = 1e-10
    max_iter: int = 100
    continuation_steps: int = 8
    armijo: float = 1e-4
    max_backtracks: int = 60


@dataclass
class PoissonStats:
    iterations: int = 0
    linear_solves: int = 0
    residual: float = np.inf
    energies: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    converged: bool = False


def _charge(problem: PoissonProblem, phi_cells):
    m = problem.model
    if not problem.charge:
        z = np.zeros_like(phi_cells)
        return z, z
    a, b = problem.z_p - phi_cells, problem.z_n + phi_cells
    return m.g(a) - m.g(b), m.dg(a) + m.dg(b)


def poisson_residual(psi: HybridVector, problem: PoissonProblem) -> HybridVector:
    """Gradient of the energy: cell rows are local balances
    sum_sigma F_{K,sigma}(phi) - |K|(C_K + g(z^P - phi_K) - g(z^N + phi_K)); face rows are
    minus the sum of the fluxes of the adjacent cells (flux conservation, or
    zero flux on Neumann faces); Dirichlet rows are zero."""
    mesh = problem.mesh
    phi = psi.full + problem.phi_dirichlet.full
    res = problem.K @ phi
    q, _ = _charge(problem, phi[: mesh.ncells])
    res[: mesh.ncells] -= mesh.cell_measure * (problem.doping + q)
    res[mesh.ncells + mesh.dirichlet_faces] = 0.0
    return HybridVector.from_full(mesh, res)


def poisson_jacobian(psi: HybridVector, problem: PoissonProblem):
    """Hessian of the energy restricted to the free unknowns (cells first)."""
    mesh = problem.mesh
    phi_c = psi.cells + problem.phi_dirichlet.cells
    _, dq = _charge(problem, phi_c)
    if problem.charge and np.any(~(dq > 0)):
        raise ArithmeticError("charge derivative is not positive")
    diag = np.zeros(mesh.ndofs)
    diag[: mesh.ncells] = mesh.cell_measure * dq
    H = problem.K + sp.diags(diag)
    f = problem.free
    return H[f][:, f]


def poisson_energy(psi: HybridVector, problem: PoissonProblem) -> float:
    mesh, m = problem.mesh, problem.model
    p, pd = psi.full, problem.phi_dirichlet.full
    lin = float(mesh.cell_measure @ (problem.doping * psi.cells)) - float(pd @ (problem.K @ p))
    quad = 0.5 * float(p @ (problem.K @ p))
    if not problem.charge:
        return quad - lin
    phi_c = psi.cells + problem.phi_dirichlet.cells
    with np.errstate(over="ignore"):
        pot = m.G(problem.z_p - phi_c) + m.G(problem.z_n + phi_c)
    return quad - lin + float(mesh.cell_measure @ pot)


def _reference_scale(problem: PoissonProblem):
    return float(problem.mesh.cell_measure.max() * max(1.0, np.abs(problem.doping).max()))


def _newton(problem: PoissonProblem, psi: HybridVector, cfg: PoissonConfig, stats: PoissonStats):
    mesh = problem.mesh
    f = problem.free
    x = psi.full.copy()
    R = poisson_residual(psi, problem).full
    r0 = np.abs(R).max()
    thr = cfg.tol * max(r0, _reference_scale(problem))
    J = poisson_energy(psi, problem)
    energies = [J]
    for it in range(cfg.max_iter + 1):
        rn = np.abs(R).max()
        if rn <= thr:
            return HybridVector.from_full(mesh, x), energies, it, rn, True
        if it == cfg.max_iter:
            break
        H = poisson_jacobian(HybridVector.from_full(mesh, x), problem)
        d = np.zeros_like(x)
        d[f] = -condensed_solve(H, R[f], mesh.ncells, 1)
        stats.linear_solves += 1
        slope = float(R @ d)
        t = 1.0
        # predicted decrease below the resolution of J: the energy can no
        # longer arbitrate, take the full Newton step
        tiny = abs(slope) <= 64 * np.finfo(float).eps * max(1.0, abs(J))
        for _ in range(0 if tiny else cfg.max_backtracks):
            trial = HybridVector.from_full(mesh, x + t * d)
            Jt = poisson_energy(trial, problem)
            if np.isfinite(Jt) and Jt <= J + cfg.armijo * t * slope:
                break
            t *= 0.5
        else:
            if not tiny:
                break  # line search stalled
            trial = HybridVector.from_full(mesh, x + d)
            Jt = poisson_energy(trial, problem)
        x = x + t * d
        J = Jt
        energies.append(J)
        R = poisson_residual(trial, problem).full
        stats.iterations += 1
    return HybridVector.from_full(mesh, x), energies, cfg.max_iter, np.abs(R).max(), False


def poisson_solve(problem: PoissonProblem, config: PoissonConfig | None = None,
                  initial: HybridVector | None = None):
    """Return (psi, stats).  A direct Newton solve is tried first; if it fails,
    the data are ramped geometrically, s = 2^{-(n-1)}, ..., 1."""
    cfg = config or PoissonConfig()
    stats = PoissonStats()
    mesh = problem.mesh
    psi0 = initial.copy() if initial is not None else HybridVector.zeros(mesh)
    psi0.faces[mesh.dirichlet_faces] = 0.0
    psi, energies, _, res, ok = _newton(problem, psi0, cfg, stats)
    stats.stages.append(1.0)
    if not ok:
        psi, prev = psi0, None
        ramp = [2.0 ** (-(cfg.continuation_steps - 1 - k)) for k in range(cfg.continuation_steps)]
        for s in ramp:
            if prev is not None:
                # keep phi = psi + s*phi^D continuous between stages
                psi = psi + (prev - s) * problem.phi_dirichlet
                psi.faces[mesh.dirichlet_faces] = 0.0
            psi, energies, _, res, ok = _newton(problem.scaled(s), psi, cfg, stats)
            stats.stages.append(s)
            if not ok:
                stats.residual = res
                raise PoissonError(f"Poisson solve failed at continuation stage s={s:g} "
                                   f"(residual {res:.3e})", stats)
            prev = s
    stats.energies = energies
    stats.residual = res
    stats.converged = True
    return psi, stats


@dataclass
class EquilibriumState:
    phi: HybridVector
    n: HybridVector
    p: HybridVector
    iterations: int
    residual: float
    stats: PoissonStats | None = None


def equilibrium_problem(setup) -> PoissonProblem:
    return PoissonProblem(setup.mesh, setup.local_phi, setup.doping, setup.alpha_n, setup.alpha_p,
                          setup.phi_dirichlet, setup.model)


def thermal_equilibrium(setup, config: PoissonConfig | None = None, initial=None) -> EquilibriumState:
    problem = equilibrium_problem(setup)
    psi, stats = poisson_solve(problem, config, initial)
    phi = psi + setup.phi_dirichlet
    m = setup.model
    n = phi.map(lambda v: m.g(setup.alpha_n + v))
    p = phi.map(lambda v: m.g(setup.alpha_p - v))
    return EquilibriumState(phi, n, p, stats.iterations, stats.residual, stats)


def associated_potential(setup, n_cells, p_cells):
    """Potential solving the linear Poisson equation with charge C + P - N
    (one linear solve)."""
    mesh = setup.mesh
    problem = PoissonProblem(mesh, setup.local_phi, setup.doping + p_cells - n_cells,
                             0.0, 0.0, setup.phi_dirichlet, setup.model, charge=False)
    psi = HybridVector.zeros(mesh)
    R = poisson_residual(psi, problem).full
    H = poisson_jacobian(psi, problem)
    d = np.zeros(mesh.ndofs)
    d[problem.free] = -condensed_solve(H, R[problem.free], mesh.ncells, 1)
    return HybridVector.from_full(mesh, d) + setup.phi_dirichlet
