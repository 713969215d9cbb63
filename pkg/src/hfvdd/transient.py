"""Backward Euler scheme for the coupled (N, P, phi) system.

Each residual row is the discrete variational equation tested against one
hybrid basis vector:

* N, cell K:  |K|(N_K - N_K^n)/dt + r_K(N) sum_sigma F^N_{K,sigma}(h(N) - phi) + |K| R_K
* P, cell K:  |K|(P_K - P_K^n)/dt + r_K(P) sum_sigma F^P_{K,sigma}(h(P) + phi) + |K| R_K
* phi, cell K: sum_sigma F^phi_{K,sigma}(phi) - |K|(C_K + P_K - N_K)
* face sigma: minus the sum of the adjacent cells' fluxes (conservation; zero
  flux on Neumann faces).  Dirichlet faces carry fixed values and no row.

Newton's method works on the unknown vector ordered as
``[(N_K, P_K, phi_K) for each cell] + [(N_s, P_s, phi_s) for each free face]``;
the 3x3 cell blocks are eliminated before the face solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .condense import SingularBlockError, condensed_solve
from .hfv import HybridVector, reconstruction
from .poisson import EquilibriumState, associated_potential, thermal_equilibrium
from .problem import ProblemSetup, SetupError, cell_averages
from .statistics import DomainError


class StepFailure(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class StepperConfig:
    dt: float = 0.01
    eps: float = 1e-9
    max_newton: int = 50
    tol: float = 1e-10
    growth: float = 1.4
    shrink: float = 2.0
    dt_min: float = 1e-14

    def __post_init__(self):
        for name in ("dt", "eps", "tol", "dt_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"stepper {name} must be positive")
        if self.max_newton < 1:
            raise ValueError("stepper max_newton must be at least 1")
        if not (self.growth > 1.0 and self.shrink > 1.0):
            raise ValueError("growth and shrink factors must exceed 1")


@dataclass
class SchemeState:
    t: float
    n: HybridVector
    p: HybridVector
    phi: HybridVector

    def quasi_fermi(self, setup: ProblemSetup):
        h = setup.model.h
        wn = self.n.map(h) - self.phi
        wp = self.p.map(h) + self.phi
        return wn.map(lambda v: v - setup.alpha_n), wp.map(lambda v: v - setup.alpha_p)

    def copy(self):
        return SchemeState(self.t, self.n.copy(), self.p.copy(), self.phi.copy())


class CoupledSystem:
    """Residual and Jacobian assembly for one setup."""

    def __init__(self, setup: ProblemSetup):
        self.setup = setup
        mesh = self.mesh = setup.mesh
        nC, nF = mesh.ncells, mesh.nfaces
        self.free_faces = np.flatnonzero(~mesh.dirichlet_mask)
        self.nfree = nC + len(self.free_faces)
        gidx = -np.ones((3, mesh.ndofs), dtype=np.int64)
        for s in range(3):
            gidx[s, :nC] = 3 * np.arange(nC) + s
            gidx[s, nC + self.free_faces] = 3 * nC + 3 * np.arange(len(self.free_faces)) + s
        self.gidx = gidx
        self.free_dofs = np.concatenate([np.arange(nC), nC + self.free_faces])
        self.size = 3 * self.nfree
        self.local_dofs = [grp.local_dofs(nC) for grp in mesh.groups]

    # -- assembly helpers ------------------------------------------------
    def _carrier(self, u, phi, sign, local, jac):
        """Residual of one carrier equation (flux part) and local Jacobian blocks."""
        setup, mesh = self.setup, self.mesh
        model = setup.model
        w = model.h(u) + sign * phi
        if jac:
            r, dr = reconstruction(mesh, u, setup.mean, model, derivative=True)
            hp = model.dh(u)
        else:
            r = reconstruction(mesh, u, setup.mean, model)
        res = np.zeros(mesh.ndofs)
        blocks = []
        for g, (grp, M, L) in enumerate(zip(mesh.groups, local.M, self.local_dofs)):
            rK = r[grp.cells]
            Mw = np.einsum("kab,kb->ka", M, w[L])
            np.add.at(res, L, rK[:, None] * Mw)
            if jac:
                Juu = rK[:, None, None] * M * hp[L][:, None, :] + Mw[:, :, None] * dr[g][:, None, :]
                Jphi = sign * rK[:, None, None] * M
                blocks.append((Juu, Jphi))
        return res, blocks

    def _poisson(self, phi):
        res = np.zeros(self.mesh.ndofs)
        for grp, M, L in zip(self.mesh.groups, self.setup.local_phi.M, self.local_dofs):
            np.add.at(res, L, np.einsum("kab,kb->ka", M, phi[L]))
        return res

    def residual(self, cand: SchemeState, prev: SchemeState, dt, jac=False):
        """Full-length residual arrays (N, P, phi); Dirichlet rows are zero."""
        setup, mesh = self.setup, self.mesh
        model = setup.model
        N, P, phi = cand.n.full, cand.p.full, cand.phi.full
        upper = model.upper_bound
        for u in (N, P):
            if np.any(~(u > 0)) or np.any(~(u < upper)):
                raise DomainError("density outside the admissible interval")
        vol = mesh.cell_measure
        nC = mesh.ncells
        rn, bn = self._carrier(N, phi, -1.0, setup.local_n, jac)
        rp, bp = self._carrier(P, phi, 1.0, setup.local_p, jac)
        rphi = self._poisson(phi)
        Nc, Pc = N[:nC], P[:nC]
        if jac:
            R, RN, RP = setup.recombination.rate(model, Nc, Pc, derivative=True)
        else:
            R = setup.recombination.rate(model, Nc, Pc)
        rn[:nC] += vol * (Nc - prev.n.cells) / dt + vol * R
        rp[:nC] += vol * (Pc - prev.p.cells) / dt + vol * R
        rphi[:nC] -= vol * (setup.doping + Pc - Nc)
        dfaces = nC + mesh.dirichlet_faces
        for r in (rn, rp, rphi):
            r[dfaces] = 0.0
        if not jac:
            return rn, rp, rphi
        return (rn, rp, rphi), (bn, bp, RN, RP)

    def pack(self, rn, rp, rphi):
        out = np.empty(self.size)
        f = self.free_dofs
        for s, r in enumerate((rn, rp, rphi)):
            out[self.gidx[s, f]] = r[f]
        return out

    def jacobian(self, cand: SchemeState, prev: SchemeState, dt):
        """Residual (packed) and sparse Jacobian in the Newton ordering."""
        mesh = self.mesh
        (rn, rp, rphi), (bn, bp, RN, RP) = self.residual(cand, prev, dt, jac=True)
        rows, cols, vals = [], [], []
        gi = self.gidx

        def add(si, sj, L, blk):
            R_ = gi[si][L][:, :, None]
            C_ = gi[sj][L][:, None, :]
            R_, C_ = np.broadcast_arrays(R_, C_)
            keep = (R_ >= 0) & (C_ >= 0)
            rows.append(R_[keep])
            cols.append(C_[keep])
            vals.append(blk[keep])

        for g, L in enumerate(self.local_dofs):
            add(0, 0, L, bn[g][0])
            add(0, 2, L, bn[g][1])
            add(1, 1, L, bp[g][0])
            add(1, 2, L, bp[g][1])
            add(2, 2, L, self.setup.local_phi.M[g])
        vol = mesh.cell_measure
        cells = np.arange(mesh.ncells)
        extra = [
            (0, 0, vol / dt + vol * RN), (0, 1, vol * RP),
            (1, 0, vol * RN), (1, 1, vol / dt + vol * RP),
            (2, 0, vol), (2, 1, -vol),
        ]
        for si, sj, v in extra:
            rows.append(gi[si][cells])
            cols.append(gi[sj][cells])
            vals.append(v)
        J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size))
        return self.pack(rn, rp, rphi), J

    def update(self, state: SchemeState, delta):
        """Return state minus the packed Newton correction on free unknowns."""
        f = self.free_dofs
        fields = []
        for s, hv in enumerate((state.n, state.p, state.phi)):
            x = hv.full
            x[f] -= delta[self.gidx[s, f]]
            fields.append(HybridVector.from_full(self.mesh, x))
        return SchemeState(state.t, *fields)

    def reference_scale(self):
        """Magnitude of the source terms, used for the relative residual test."""
        mesh = self.mesh
        return float(mesh.cell_measure.max() * max(1.0, np.abs(self.setup.doping).max()))

    def roundoff_bound(self, cand: SchemeState, J):
        """Componentwise round-off level eps*(|J| |x|) of each residual row.

        Near the saturation value of bounded statistics h is ill-conditioned
        and the residual cannot be evaluated more accurately than this.
        """
        x = np.abs(self.pack(cand.n.full, cand.p.full, cand.phi.full))
        return np.finfo(float).eps * (abs(J) @ x)


# ------------------------------------------------------------------------
# stepping

@dataclass
class StepResult:
    state: SchemeState
    dt: float
    iterations: int
    linear_solves: int
    rejections: int
    attempts: list = field(default_factory=list)


# rows whose residual is within this factor of eps*(|J||x|) count as converged
ROUNDOFF_FACTOR = 16.0


def _project(state: SchemeState, eps, upper):
    hi = upper - eps if math.isfinite(upper) else np.inf
    return SchemeState(state.t, state.n.map(lambda v: np.clip(v, eps, hi)),
                       state.p.map(lambda v: np.clip(v, eps, hi)), state.phi.copy())


def newton(system: CoupledSystem, prev: SchemeState, dt, cfg: StepperConfig):
    """One Newton solve for the step prev -> prev.t + dt.

    Returns (state or None, iterations, linear solves, reason).
    """
    upper = system.setup.model.upper_bound
    lo, hi = cfg.eps / 10.0, upper - cfg.eps / 10.0
    x = _project(prev, cfg.eps, upper)
    x.t = prev.t + dt
    solves = 0
    thr, floor = None, 0.0
    for it in range(cfg.max_newton + 1):
        for u in (x.n, x.p):
            if u.min() <= lo or u.max() >= hi:
                return None, it, solves, "density left the admissible interval"
        try:
            if it == cfg.max_newton:
                R = system.pack(*system.residual(x, prev, dt))
                J = None
            else:
                R, J = system.jacobian(x, prev, dt)
        except (DomainError, OverflowError) as exc:
            return None, it, solves, str(exc)
        absR = np.abs(R)
        rn = float(absR.max())
        if not np.isfinite(rn):
            return None, it, solves, "non-finite residual"
        if thr is None:
            thr = cfg.tol * max(rn, system.reference_scale())
        if J is not None:
            floor = ROUNDOFF_FACTOR * system.roundoff_bound(x, J)
        if np.all(absR <= np.maximum(thr, floor)):
            return x, it, solves, "converged"
        if J is None:
            break
        try:
            delta = condensed_solve(J, R, 3 * system.mesh.ncells, 3)
        except (SingularBlockError, RuntimeError) as exc:
            return None, it, solves, f"linear solve failed: {exc}"
        solves += 1
        if not np.all(np.isfinite(delta)):
            return None, it, solves, "non-finite Newton correction"
        x = system.update(x, delta)
    return None, cfg.max_newton, solves, "maximum number of Newton iterations reached"


def solve_step(system: CoupledSystem, prev: SchemeState, dt_request, cfg: StepperConfig) -> StepResult:
    dt = float(dt_request)
    solves, rejections, attempts = 0, 0, []
    while True:
        state, iters, n_lin, reason = newton(system, prev, dt, cfg)
        solves += n_lin
        attempts.append((dt, iters, reason))
        if state is not None:
            return StepResult(state, dt, iters, solves, rejections, attempts)
        rejections += 1
        dt /= cfg.shrink
        if dt < cfg.dt_min:
            raise StepFailure(f"time step fell below {cfg.dt_min:g} at t={prev.t:.6g}",
                              dict(t=prev.t, attempts=attempts, linear_solves=solves))


def init_state(setup: ProblemSetup, equilibrium: EquilibriumState | None = None,
               consistent_faces=True) -> SchemeState:
    """Cell averages of the initial data, face values from the Dirichlet data or
    the adjacent cells, and the potential of the resulting charge."""
    mesh, model = setup.mesh, setup.model
    if setup.n_init is None:
        if equilibrium is None:
            raise SetupError("equilibrium initial data requested without an equilibrium")
        n, p = equilibrium.n.copy(), equilibrium.p.copy()
    else:
        fields = []
        for fn, bd in ((setup.n_init, setup.n_dirichlet), (setup.p_init, setup.p_dirichlet)):
            cells = cell_averages(mesh, fn)
            fc = mesh.face_cells
            other = np.where(fc[:, 1] >= 0, fc[:, 1], fc[:, 0])
            faces = 0.5 * (cells[fc[:, 0]] + cells[other])
            d = mesh.dirichlet_faces
            faces[d] = bd.faces[d]
            fields.append(HybridVector(cells, faces))
        n, p = fields
    upper = model.upper_bound
    for name, u in (("N", n), ("P", p)):
        if not (u.min() > 0 and u.max() < upper):
            raise SetupError(f"initial density {name} outside the admissible interval")
    phi = associated_potential(setup, n.cells, p.cells)
    if setup.n_init is not None and consistent_faces:
        try:
            n, p = (balanced_faces(setup, n, phi, -1.0, setup.local_n),
                    balanced_faces(setup, p, phi, 1.0, setup.local_p))
        except StepFailure:
            pass  # keep the adjacent averages
    return SchemeState(0.0, n, p, phi)


def balanced_faces(setup: ProblemSetup, u: HybridVector, phi: HybridVector, sign, local,
                   tol=1e-12, stages=20, max_iter=60) -> HybridVector:
    """Face densities satisfying the face conservation rows for frozen cell
    densities and potential.

    The unknowns are the face chemical potentials s = h(u_sigma).  The
    potential is ramped from 0 to phi in ``stages`` steps; each stage runs a
    damped Newton method (backtracking on the Euclidean residual norm) from
    the previous stage.  Raises StepFailure if a stage does not converge.
    """
    mesh, model = setup.mesh, setup.model
    nC = mesh.ncells
    free = nC + np.flatnonzero(~mesh.dirichlet_mask)
    hi = model.upper_bound * (1.0 - 1e-15) if np.isfinite(model.upper_bound) else np.inf
    dofs = grp_dofs(mesh)
    x0 = u.full

    def dens(s):
        x = x0.copy()
        x[free] = np.clip(model.g(s), 1e-300, hi)
        return x

    def face_res(x, ph, jac=False):
        w = model.h(x) + sign * ph
        if jac:
            r, dr = reconstruction(mesh, x, setup.mean, model, derivative=True)
        else:
            r = reconstruction(mesh, x, setup.mean, model)
        res = np.zeros(mesh.ndofs)
        rows, cols, vals = [], [], []
        for g, (grp, M, L) in enumerate(zip(mesh.groups, local.M, dofs)):
            Mw = np.einsum("kab,kb->ka", M, w[L])
            np.add.at(res, L, r[grp.cells][:, None] * Mw)
            if jac:
                # d/ds = d/du * du/ds, du/ds = 1/h'(u)
                Jb = (r[grp.cells][:, None, None] * M
                      + Mw[:, :, None] * (dr[g] / model.dh(x[L]))[:, None, :])
                R_, C_ = np.broadcast_arrays(L[:, :, None], L[:, None, :])
                rows.append(R_.ravel())
                cols.append(C_.ravel())
                vals.append(Jb.ravel())
        if not jac:
            return res[free]
        J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(mesh.ndofs, mesh.ndofs))
        return res[free], J[free][:, free]

    mscale = max(float(np.abs(M).max()) for M in local.M)
    s = model.h(x0[free])
    for lam in np.linspace(0.0, 1.0, stages + 1):
        ph = lam * phi.full
        thr = tol * mscale * (1.0 + float(np.abs(ph).max()))
        F, J = face_res(dens(s), ph, jac=True)
        for _ in range(max_iter):
            if float(np.abs(F).max()) <= thr:
                break
            d = spla.spsolve(J.tocsc(), F)
            fn, t = float(np.linalg.norm(F)), 1.0
            while t > 1e-10:
                st = s - t * d
                Ft = face_res(dens(st), ph)
                if np.linalg.norm(Ft) < (1.0 - 1e-4 * t) * fn:
                    break
                t *= 0.5
            else:
                break
            s = st
            F, J = face_res(dens(s), ph, jac=True)
        if not float(np.abs(F).max()) <= 1e3 * thr:
            raise StepFailure(f"face initialisation failed at potential fraction {lam:.2f}")
    return HybridVector.from_full(mesh, dens(s))


def grp_dofs(mesh):
    return [grp.local_dofs(mesh.ncells) for grp in mesh.groups]


@dataclass
class TimeSeries:
    records: list
    final: SchemeState
    equilibrium: EquilibriumState
    total_cost: int
    rejections: int
    dt_history: list
    states: list = field(default_factory=list)


def run_transient(setup: ProblemSetup, config: StepperConfig, t_end, *, equilibrium=None,
                  initial: SchemeState | None = None, hooks=(), keep_states=False,
                  max_steps=None) -> TimeSeries:
    """Integrate up to ``t_end``.  ``hooks`` are called as hook(state, record)
    after every accepted step (and once for the initial state)."""
    from .diagnostics import make_record

    if not t_end > 0:
        raise ValueError("t_end must be positive")
    system = CoupledSystem(setup)
    eq = equilibrium if equilibrium is not None else thermal_equilibrium(setup)
    cost = 0
    if initial is None:
        state = init_state(setup, eq)
        cost += 1
    else:
        state = initial.copy()
    record = make_record(setup, state, eq, dt=0.0, iterations=0, cost=cost)
    records, dts, states = [record], [], [state] if keep_states else []
    for hook in hooks:
        hook(state, record)
    rejections = 0
    dt_req = config.dt
    stop = 1e-9 * config.dt
    steps = 0
    while t_end - state.t > stop:
        dt_req = min(dt_req, t_end - state.t)
        res = solve_step(system, state, dt_req, config)
        cost += res.linear_solves
        rejections += res.rejections
        state = res.state
        if t_end - state.t <= stop:
            state.t = float(t_end)
        record = make_record(setup, state, eq, dt=res.dt, iterations=res.iterations, cost=cost)
        records.append(record)
        dts.append(res.dt)
        if keep_states:
            states.append(state)
        for hook in hooks:
            hook(state, record)
        dt_req = min(config.dt, config.growth * res.dt)
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    return TimeSeries(records, state, eq, cost, rejections, dts, states)
