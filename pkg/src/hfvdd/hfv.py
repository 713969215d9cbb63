"""Hybrid finite volume operators.

Hybrid fields carry one value per cell and one per face.  Internally they are
flattened as ``[cells..., faces...]`` so that the local unknowns of a cell are
``(v_K, v_sigma_1, ..., v_sigma_nf)``.

For each cell the discrete gradient on the pyramid of face sigma is the
consistent gradient plus a stabilisation along the face normal.  The local
bilinear form is represented by a matrix ``A`` acting on differences
``u_K - u_sigma``; fluxes are ``F_sigma(u) = sum_s' A[sigma, s'] (u_K - u_s')``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .statistics import MeanKind, Statistics, mean_apply, mean_partials

DEFAULT_ETA = 1.5


@dataclass
class HybridVector:
    cells: np.ndarray
    faces: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh):
        return cls(np.zeros(mesh.ncells), np.zeros(mesh.nfaces))

    @classmethod
    def constant(cls, mesh: Mesh, c):
        return cls(np.full(mesh.ncells, float(c)), np.full(mesh.nfaces, float(c)))

    @classmethod
    def from_full(cls, mesh: Mesh, x):
        x = np.asarray(x, dtype=float)
        return cls(x[: mesh.ncells].copy(), x[mesh.ncells:].copy())

    @property
    def full(self):
        return np.concatenate([self.cells, self.faces])

    def copy(self):
        return HybridVector(self.cells.copy(), self.faces.copy())

    def map(self, fn):
        return HybridVector(fn(self.cells), fn(self.faces))

    def __add__(self, other):
        return HybridVector(self.cells + other.cells, self.faces + other.faces)

    def __sub__(self, other):
        return HybridVector(self.cells - other.cells, self.faces - other.faces)

    def __mul__(self, c):
        return HybridVector(self.cells * c, self.faces * c)

    __rmul__ = __mul__

    def vanishes_on(self, faces, tol=0.0):
        return bool(np.all(np.abs(self.faces[faces]) <= tol))

    def min(self):
        return float(min(self.cells.min(), self.faces.min()))

    def max(self):
        return float(max(self.cells.max(), self.faces.max()))


# --------------------------------------------------------------------------
# tensors

@dataclass
class TensorField:
    """Per (cell, face) 2x2 tensors, stored per cell group as (nK, nf, 2, 2)."""

    blocks: list

    def ellipticity(self):
        lo, hi = np.inf, 0.0
        for b in self.blocks:
            sym = 0.5 * (b + np.swapaxes(b, -1, -2))
            ev = np.linalg.eigvalsh(sym)
            lo = min(lo, float(ev.min()))
            hi = max(hi, float(np.linalg.norm(b, ord=2, axis=(-2, -1)).max()))
        return lo, hi


def tensor_field(mesh: Mesh, value) -> TensorField:
    """``value`` is a constant 2x2 matrix or a callable of points (m, 2) -> (m, 2, 2),
    evaluated at the barycentre of each pyramid."""
    blocks = []
    for grp in mesh.groups:
        if callable(value):
            pts = (grp.centres[:, None, :] + 2.0 * grp.face_centres) / 3.0
            lam = np.asarray(value(pts.reshape(-1, 2)), dtype=float).reshape(len(grp.cells), grp.nf, 2, 2)
        else:
            lam = np.broadcast_to(np.asarray(value, dtype=float), (len(grp.cells), grp.nf, 2, 2)).copy()
        blocks.append(lam)
    field = TensorField(blocks)
    if not field.ellipticity()[0] > 0:
        raise ValueError("tensor symmetric part is not positive definite")
    return field


# --------------------------------------------------------------------------
# local operators

def local_gradient(mesh: Mesh, k: int, v_local, eta=DEFAULT_ETA):
    """Gradients on the pyramids of cell ``k`` for local values (v_K, v_sigma...).

    Returns (gradients (nf, 2), stabilisation residuals (nf,)).
    """
    grp, r = mesh.cell_local(k)
    v = np.asarray(v_local, dtype=float)
    vK, vs = v[0], v[1:]
    n, s, d = grp.normals[r], grp.face_measure[r], grp.dist[r]
    GK = (s * (vs - vK)) @ n / grp.volume[r]
    resid = vs - vK - (grp.face_centres[r] - grp.centres[r]) @ GK
    return GK[None, :] + (eta / d * resid)[:, None] * n, resid


def _gradient_matrix(grp, eta):
    """Y with grad_sigma u = sum_s' Y[sigma, s'] (u_s' - u_K); shape (nK, nf, nf, 2)."""
    nK, nf = grp.faces.shape
    gc = grp.face_measure[:, :, None] * grp.normals / grp.volume[:, None, None]
    off = grp.face_centres - grp.centres[:, None, :]
    proj = np.einsum("kai,kbi->kab", off, gc)          # (x_sigma - x_K) . gc[s']
    eye = np.broadcast_to(np.eye(nf), (nK, nf, nf))
    coef = (eta / grp.dist)[:, :, None] * (eye - proj)
    return gc[:, None, :, :] + coef[..., None] * grp.normals[:, :, None, :]


@dataclass
class LocalDiffusion:
    """Local matrices A (nK, nf, nf) and hybrid stiffness M (nK, nf+1, nf+1) per group."""

    A: list
    M: list
    eta: float


def _difference_operator(nf):
    # C maps (u_K, u_sigma...) to (u_K - u_sigma)_sigma
    return np.concatenate([np.ones((nf, 1)), -np.eye(nf)], axis=1)


def assemble_local(mesh: Mesh, tensor: TensorField, eta=DEFAULT_ETA) -> LocalDiffusion:
    if not eta > 0:
        raise ValueError("stabilisation parameter must be positive")
    As, Ms = [], []
    for grp, lam in zip(mesh.groups, tensor.blocks):
        Y = _gradient_matrix(grp, eta)
        A = np.einsum("kp,kpai,kpij,kpbj->kab", grp.pyramid, Y, lam, Y)
        C = _difference_operator(grp.nf)
        As.append(A)
        Ms.append(np.einsum("ai,kab,bj->kij", C, A, C))
    return LocalDiffusion(As, Ms, eta)


def local_fluxes(mesh: Mesh, local: LocalDiffusion, u):
    """Linear fluxes F_{K,sigma}(u) per group, shape (nK, nf)."""
    u = _full(u)
    out = []
    for grp, A in zip(mesh.groups, local.A):
        diff = u[grp.cells][:, None] - u[mesh.ncells + grp.faces]
        out.append(np.einsum("kab,kb->ka", A, diff))
    return out


def stiffness_matrix(mesh: Mesh, local: LocalDiffusion):
    """Global sparse matrix K with v^T K u = a(u, v) over all hybrid unknowns."""
    rows, cols, vals = [], [], []
    for grp, M in zip(mesh.groups, local.M):
        L = grp.local_dofs(mesh.ncells)
        rows.append(np.broadcast_to(L[:, :, None], M.shape).ravel())
        cols.append(np.broadcast_to(L[:, None, :], M.shape).ravel())
        vals.append(M.ravel())
    n = mesh.ndofs
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _full(v):
    return v.full if isinstance(v, HybridVector) else np.asarray(v, dtype=float)


def cell_forms(mesh: Mesh, local: LocalDiffusion, u, v):
    """Local values a_K(u, v) for every cell."""
    u, v = _full(u), _full(v)
    out = np.empty(mesh.ncells)
    for grp, M in zip(mesh.groups, local.M):
        L = grp.local_dofs(mesh.ncells)
        out[grp.cells] = np.einsum("ki,kij,kj->k", v[L], M, u[L])
    return out


def bilinear(mesh: Mesh, local: LocalDiffusion, u, v):
    return float(cell_forms(mesh, local, u, v).sum())


def seminorm(mesh: Mesh, v):
    v = _full(v)
    total = 0.0
    for grp in mesh.groups:
        diff = v[grp.cells][:, None] - v[mesh.ncells + grp.faces]
        total += float((grp.face_measure / grp.dist * diff ** 2).sum())
    return float(np.sqrt(total))


# --------------------------------------------------------------------------
# nonlinear reconstruction

def reconstruction(mesh: Mesh, u, mean, model: Statistics, derivative=False):
    """r_K = mean over faces of m(u_K, u_sigma); optionally its local gradient.

    Returns r (ncells,) and, if requested, a list per group of (nK, nf+1)
    partial derivatives with respect to the local unknowns.
    """
    u = _full(u)
    r = np.empty(mesh.ncells)
    dr = []
    for grp in mesh.groups:
        uK = np.broadcast_to(u[grp.cells][:, None], grp.faces.shape)
        us = u[mesh.ncells + grp.faces]
        r[grp.cells] = mean_apply(mean, model, uK, us).mean(axis=1)
        if derivative:
            dx, dy = mean_partials(mean, model, uK, us)
            dr.append(np.concatenate([dx.sum(axis=1, keepdims=True), dy], axis=1) / grp.nf)
    return (r, dr) if derivative else r


def reconstruction_rK(mesh: Mesh, k, u_local, mean, model: Statistics):
    u = np.asarray(u_local, dtype=float)
    return float(np.mean(mean_apply(mean, model, np.full(len(u) - 1, u[0]), u[1:])))


def nonlinear_fluxes(mesh: Mesh, local: LocalDiffusion, u, phi, sign, model: Statistics,
                     mean=MeanKind.ARITHMETIC):
    """r_K(u) F_{K,sigma}(h(u) + sign*phi) per group; sign = -1 electrons, +1 holes."""
    u, phi = _full(u), _full(phi)
    w = model.h(u) + sign * phi
    r = reconstruction(mesh, u, mean, model)
    lin = local_fluxes(mesh, local, w)
    return [r[grp.cells][:, None] * F for grp, F in zip(mesh.groups, lin)]


def trilinear(mesh: Mesh, local: LocalDiffusion, u, w, v, model: Statistics,
              mean=MeanKind.ARITHMETIC):
    r = reconstruction(mesh, u, mean, model)
    return float((r * cell_forms(mesh, local, w, v)).sum())


def flux_pairing(mesh: Mesh, fluxes, v):
    """sum_K sum_sigma F_{K,sigma} (v_K - v_sigma) for per-group fluxes."""
    v = _full(v)
    total = 0.0
    for grp, F in zip(mesh.groups, fluxes):
        total += float((F * (v[grp.cells][:, None] - v[mesh.ncells + grp.faces])).sum())
    return total


# --------------------------------------------------------------------------
# boundary data

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def face_average(mesh: Mesh, fn, faces):
    """Two-point Gauss average of fn over the listed faces."""
    a = mesh.vertices[mesh.face_vertices[faces, 0]]
    b = mesh.vertices[mesh.face_vertices[faces, 1]]
    vals = [np.asarray(fn(a + t * (b - a)), dtype=float) for t in _GAUSS2]
    return 0.5 * (vals[0] + vals[1])


def interpolate_boundary(mesh: Mesh, model: Statistics, n_data, p_data, phi_data):
    """Discrete Dirichlet data (N^D, P^D, phi^D) as hybrid vectors.

    On Dirichlet faces N_sigma = g(face average of h(N^D)), likewise P, and
    phi_sigma is the plain face average.  Other entries hold a constant
    lifting (the mean over Dirichlet faces); the schemes only depend on the
    Dirichlet face values.
    """
    dfaces = mesh.dirichlet_faces
    hN = face_average(mesh, lambda x: model.h(n_data(x)), dfaces)
    hP = face_average(mesh, lambda x: model.h(p_data(x)), dfaces)
    ph = face_average(mesh, phi_data, dfaces)
    out = []
    for vals, density in ((hN, True), (hP, True), (ph, False)):
        face_vals = model.g(vals) if density else vals
        fill = float(model.g(vals.mean())) if density else float(vals.mean())
        hv = HybridVector.constant(mesh, fill)
        hv.faces[dfaces] = face_vals
        out.append(hv)
    return tuple(out)
