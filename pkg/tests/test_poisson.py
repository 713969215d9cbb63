import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

import oracles
from hfvdd.condense import condensed_solve
from hfvdd.hfv import HybridVector, assemble_local, tensor_field
from hfvdd.mesh import build_cartesian, build_mesh
from hfvdd.poisson import (PoissonConfig, PoissonProblem, equilibrium_problem, poisson_energy,
                           poisson_jacobian, poisson_residual, poisson_solve, thermal_equilibrium)
from hfvdd.problem import make_setup
from hfvdd.statistics import Blakemore, Boltzmann


def problem_on(mesh, model=Boltzmann(), doping=None, zn=0.0, zp=0.0, phiD=0.0, lam=1.0, charge=True):
    local = assemble_local(mesh, tensor_field(mesh, lam ** 2 * np.eye(2)), 1.5)
    C = np.zeros(mesh.ncells) if doping is None else np.asarray(doping, float)
    pd = HybridVector.constant(mesh, 0.0)
    pd.faces[mesh.dirichlet_faces] = phiD
    return PoissonProblem(mesh, local, C, zn, zp, pd, model, charge)


def random_psi(mesh, rng, scale=0.5):
    psi = HybridVector(rng.normal(size=mesh.ncells) * scale, rng.normal(size=mesh.nfaces) * scale)
    psi.faces[mesh.dirichlet_faces] = 0.0
    return psi


def test_symmetric_cancellation():
    mesh = build_cartesian(3, 3)
    res = poisson_residual(HybridVector.zeros(mesh), problem_on(mesh))
    assert np.abs(res.full).max() == 0.0


def test_single_cell_manufactured_solution():
    mesh = build_cartesian(1, 1)
    phibar = 0.7
    C = [math.exp(phibar) - math.exp(-phibar)]  # C = N - P
    prob = problem_on(mesh, doping=C, phiD=phibar)
    psi = HybridVector.zeros(mesh)
    psi.cells[:] = phibar  # phi_K = phibar, faces carry phibar through phi^D
    assert np.abs(poisson_residual(psi, prob).full).max() <= 1e-15
    sol, stats = poisson_solve(prob, PoissonConfig(tol=1e-15))
    assert sol.cells[0] == pytest.approx(phibar, abs=1e-13)


def test_residual_matches_brute_force_assembly(rng, tri0):
    model = Blakemore(0.27)
    C = np.where(tri0.cell_centres[:, 1] > 0.5, 1.0, -1.0)
    zn, zp = rng.normal(size=tri0.ncells) * 0.3, rng.normal(size=tri0.ncells) * 0.3
    phiD = rng.normal(size=tri0.dirichlet_faces.size)
    prob = problem_on(tri0, model, C, zn, zp, phiD, lam=0.3)
    psi = random_psi(tri0, rng)
    phi = psi.full + prob.phi_dirichlet.full
    tf = tensor_field(tri0, 0.09 * np.eye(2))
    expect = oracles.form_rows(tri0, tf, phi, 1.5)
    pc = phi[: tri0.ncells]
    for k in range(tri0.ncells):
        expect[k] -= tri0.cell_measure[k] * (C[k] + model.g(zp[k] - pc[k]) - model.g(zn[k] + pc[k]))
    expect[tri0.ncells + tri0.dirichlet_faces] = 0.0
    assert np.allclose(poisson_residual(psi, prob).full, expect, rtol=1e-12, atol=1e-13)


def test_energy_gradient_is_the_residual(rng, tri0):
    prob = problem_on(tri0, Boltzmann(), np.ones(tri0.ncells), 0.2, -0.1, 0.4)
    psi = random_psi(tri0, rng)
    v = random_psi(tri0, rng)
    e = 1e-6
    fd = (poisson_energy(psi + e * v, prob) - poisson_energy(psi - e * v, prob)) / (2 * e)
    assert fd == pytest.approx(poisson_residual(psi, prob).full @ v.full, rel=1e-6)


def test_energy_vanishes_for_very_negative_z():
    mesh = build_cartesian(3, 3)
    prob = problem_on(mesh, zn=-800.0, zp=-800.0)
    assert abs(poisson_energy(HybridVector.zeros(mesh), prob)) <= 1e-300


def test_energy_at_solution_below_energy_at_zero(tc4_setup):
    prob = equilibrium_problem(tc4_setup)
    psi, _ = poisson_solve(prob)
    assert poisson_energy(psi, prob) <= poisson_energy(HybridVector.zeros(tc4_setup.mesh), prob)


def test_jacobian_is_hessian(rng, tri0):
    prob = problem_on(tri0, Blakemore(0.27), -np.ones(tri0.ncells), 0.3, 0.1, 0.2)
    psi = random_psi(tri0, rng)
    H = poisson_jacobian(psi, prob).toarray()
    f = prob.free
    e = 1e-6
    for j in rng.choice(len(f), size=12, replace=False):
        d = np.zeros(tri0.ndofs)
        d[f[j]] = e
        up = poisson_residual(HybridVector.from_full(tri0, psi.full + d), prob).full[f]
        dn = poisson_residual(HybridVector.from_full(tri0, psi.full - d), prob).full[f]
        assert np.allclose((up - dn) / (2 * e), H[:, j], rtol=1e-6, atol=1e-8)


def test_linear_limit_equals_linear_solve(tri0):
    C = np.where(tri0.cell_centres[:, 0] < 0.5, 1.0, -2.0)
    prob = problem_on(tri0, doping=C, phiD=0.3, charge=False)
    psi, stats = poisson_solve(prob)
    f = prob.free
    K = prob.K.tocsr()
    rhs = -(K @ prob.phi_dirichlet.full)[f]
    rhs[: tri0.ncells] += tri0.cell_measure * C
    direct = spla.spsolve(K[f][:, f].tocsc(), rhs)
    assert np.allclose(psi.full[f], direct, rtol=1e-10, atol=1e-12)
    assert stats.iterations == 1


def test_testcase4_equilibrium_unique(rng, tc4_setup):
    eq0 = thermal_equilibrium(tc4_setup)
    guess = random_psi(tc4_setup.mesh, rng, scale=2.0)
    eq1 = thermal_equilibrium(tc4_setup, initial=guess)
    assert np.abs(eq0.phi.full - eq1.phi.full).max() <= 1e-9


def test_energy_decreases_along_newton_iterates(rng, tc4_setup):
    prob = equilibrium_problem(tc4_setup)
    _, stats = poisson_solve(prob, initial=random_psi(tc4_setup.mesh, rng, scale=3.0))
    E = np.array(stats.energies)
    assert len(E) >= 2 and np.all(np.diff(E) <= 1e-12 * np.abs(E[:-1]).max())


def test_continuation_fallback(tri0):
    # steep junction: four Newton steps are not enough, the ramp takes over
    from hfvdd.problem import diode_setup
    setup = diode_setup(tri0, Boltzmann(), math.e ** 8, 1.0, 1.0, debye=0.05)
    prob = equilibrium_problem(setup)
    ref, direct = poisson_solve(prob)
    assert direct.stages == [1.0]
    psi, stats = poisson_solve(prob, PoissonConfig(max_iter=4))
    assert stats.converged and stats.stages[1:] == [2.0 ** -k for k in range(7, -1, -1)]
    assert np.abs(psi.full - ref.full).max() <= 1e-9


def test_relative_residual_below_tolerance(tc4_setup):
    prob = equilibrium_problem(tc4_setup)
    psi, stats = poisson_solve(prob)
    scale = max(np.abs(poisson_residual(HybridVector.zeros(tc4_setup.mesh), prob).full).max(),
                tc4_setup.mesh.cell_measure.max())
    assert np.abs(poisson_residual(psi, prob).full).max() <= 1e-10 * scale


def test_static_condensation_matches_full_solve(rng, tri0):
    prob = problem_on(tri0, Boltzmann(), np.ones(tri0.ncells), 0.5, -0.5, 0.1)
    psi = random_psi(tri0, rng)
    H = poisson_jacobian(psi, prob)
    b = rng.normal(size=H.shape[0])
    x_c = condensed_solve(H, b, tri0.ncells, 1)
    x_f = spla.spsolve(H.tocsc(), b)
    assert np.abs(x_c - x_f).max() <= 1e-12 * np.abs(x_f).max()


def test_monotone_charge(rng, tri0):
    for model in (Boltzmann(), Blakemore(0.27)):
        prob = problem_on(tri0, model, None, 0.4, -0.2)
        H = poisson_jacobian(random_psi(tri0, rng, 2.0), prob)
        K = prob.K[prob.free][:, prob.free]
        assert np.all((H - K).diagonal()[: tri0.ncells] > 0)


def test_stability_bound_under_varying_z(rng, tri0):
    from hfvdd.hfv import seminorm
    norms = []
    for _ in range(6):
        z = rng.uniform(-2, 2, size=2)
        prob = problem_on(tri0, Boltzmann(), np.ones(tri0.ncells), z[0], z[1], 0.3)
        psi, _ = poisson_solve(prob)
        norms.append(seminorm(tri0, psi))
    assert max(norms) < 10.0


# ---------------------------------------------------------------- equilibrium

def neutral_setup(mesh, model=Boltzmann()):
    one = lambda x: np.full(len(x), float(model.g(0.0)))
    zero = lambda x: np.zeros(len(x))
    return make_setup(mesh, model, n_data=one, p_data=one, phi_data=zero, alpha_n=0.0,
                      alpha_p=0.0, n_init=one, p_init=one, doping=np.zeros(mesh.ncells))


@pytest.mark.parametrize("model", [Boltzmann(), Blakemore(0.27)], ids=["boltzmann", "blakemore"])
def test_neutral_equilibrium(model):
    mesh = build_cartesian(4, 4, layout="diode")
    eq = thermal_equilibrium(neutral_setup(mesh, model))
    assert np.abs(eq.phi.full).max() <= 1e-14
    assert np.allclose(eq.n.full, model.g(0.0), rtol=1e-14)
    assert np.allclose(eq.p.full, model.g(0.0), rtol=1e-14)


def test_equilibrium_relations(tc4_setup):
    eq = thermal_equilibrium(tc4_setup)
    m = tc4_setup.model
    assert np.allclose(eq.n.full, m.g(tc4_setup.alpha_n + eq.phi.full), rtol=1e-15)
    assert np.allclose(eq.p.full, m.g(tc4_setup.alpha_p - eq.phi.full), rtol=1e-15)
    d = tc4_setup.mesh.ncells + tc4_setup.mesh.dirichlet_faces
    assert np.array_equal(eq.phi.full[d], tc4_setup.phi_dirichlet.full[d])


def test_equilibrium_charge_conjugation_symmetry(tri0):
    """(N, P, C, phi) -> (P, N, -C, -phi) maps equilibria onto equilibria."""
    model = Blakemore(0.27)
    pick = lambda a, b: (lambda x: np.where(x[:, 1] < 0.5, a, b))
    n0, n1 = 2.0, 0.5
    p0, p1 = float(model.g(0.3 - model.h(n0))), float(model.g(0.3 - model.h(n1)))
    ph = lambda n, p: 0.5 * (float(model.h(n)) - float(model.h(p)))
    C = np.where(tri0.cell_centres[:, 1] > 0.6, 1.0, -1.0)
    kw = dict(alpha_n=0.15, alpha_p=0.15, n_init=None, p_init=None)
    a = make_setup(tri0, model, n_data=pick(n0, n1), p_data=pick(p0, p1),
                   phi_data=pick(ph(n0, p0), ph(n1, p1)), doping=C, **kw)
    b = make_setup(tri0, model, n_data=pick(p0, p1), p_data=pick(n0, n1),
                   phi_data=pick(-ph(n0, p0), -ph(n1, p1)), doping=-C, **kw)
    ea, eb = thermal_equilibrium(a), thermal_equilibrium(b)
    assert np.allclose(eb.phi.full, -ea.phi.full, atol=1e-12)
    assert np.allclose(eb.n.full, ea.p.full, rtol=1e-12)
    assert np.allclose(eb.p.full, ea.n.full, rtol=1e-12)


def test_condensation_rejects_non_block_diagonal():
    import scipy.sparse as sp
    J = sp.csr_matrix(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(ValueError):
        condensed_solve(J, np.ones(3), 2, 1)


def test_condensation_detects_singular_block():
    import scipy.sparse as sp
    from hfvdd.condense import SingularBlockError
    J = sp.csr_matrix(np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]))
    with pytest.raises(SingularBlockError):
        condensed_solve(J, np.ones(3), 2, 1)
