"""Problem data for the drift-diffusion system: tensors, doping, recombination,
boundary and initial data, bundled in :class:`ProblemSetup`."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .hfv import (DEFAULT_ETA, HybridVector, LocalDiffusion, TensorField, assemble_local,
                  face_average, interpolate_boundary, tensor_field)
from .mesh import Mesh
from .statistics import MeanKind, Statistics


class SetupError(ValueError):
    pass


def magnetic_tensors(b):
    """Electron and hole mobility tensors under a magnetic field of intensity b."""
    c = 1.0 / (1.0 + b * b)
    lam_n = c * np.array([[1.0, b], [-b, 1.0]])
    lam_p = c * np.array([[1.0, -b], [b, 1.0]])
    return lam_n, lam_p


# --------------------------------------------------------------------------
# recombination

class Recombination:
    """R(N, P) = r(N, P) (exp(h(N) + h(P)) - 1)."""

    zero = False

    def r(self, N, P):
        raise NotImplementedError

    def dr(self, N, P):
        raise NotImplementedError

    def rate(self, model: Statistics, N, P, derivative=False, cap=700.0):
        N, P = np.asarray(N, dtype=float), np.asarray(P, dtype=float)
        if self.zero:
            z = np.zeros(np.broadcast(N, P).shape)
            return (z, z.copy(), z.copy()) if derivative else z
        s = model.h(N) + model.h(P)
        if np.any(s > cap):
            raise OverflowError("chemical potential sum exceeds the exponent cap")
        em1 = np.expm1(s)
        r = self.r(N, P)
        R = r * em1
        if not derivative:
            return R
        rN, rP = self.dr(N, P)
        es = em1 + 1.0
        return R, rN * em1 + r * es * model.dh(N), rP * em1 + r * es * model.dh(P)


@dataclass(frozen=True)
class NoRecombination(Recombination):
    zero = True

    def r(self, N, P):
        return np.zeros(np.broadcast(N, P).shape)

    def dr(self, N, P):
        z = np.zeros(np.broadcast(N, P).shape)
        return z, z.copy()


@dataclass(frozen=True)
class SRH(Recombination):
    tau_n: float = 1.0
    tau_p: float = 1.0
    tau_c: float = 1.0

    def r(self, N, P):
        return 1.0 / (self.tau_n * N + self.tau_p * P + self.tau_c)

    def dr(self, N, P):
        r = self.r(N, P)
        return -self.tau_n * r * r, -self.tau_p * r * r


@dataclass(frozen=True)
class Auger(Recombination):
    c_n: float = 1.0
    c_p: float = 1.0

    def r(self, N, P):
        return self.c_n * N + self.c_p * P

    def dr(self, N, P):
        shape = np.broadcast(N, P).shape
        return np.full(shape, self.c_n), np.full(shape, self.c_p)


@dataclass(frozen=True)
class ScaledSRH(Recombination):
    kappa: float = 10.0

    def r(self, N, P):
        return self.kappa / (1.0 + N + P)

    def dr(self, N, P):
        d = -self.kappa / (1.0 + N + P) ** 2
        return d, d.copy()


def parse_recombination(spec: str) -> Recombination:
    """``none``, ``srh:tn,tp,tc``, ``auger:cn,cp`` or ``scaled_srh:kappa``."""
    name, _, arg = spec.strip().lower().partition(":")
    vals = [float(v) for v in arg.split(",")] if arg else []
    if name == "none" and not vals:
        return NoRecombination()
    if name == "srh" and len(vals) in (0, 3):
        return SRH(*vals)
    if name == "auger" and len(vals) in (0, 2):
        return Auger(*vals)
    if name == "scaled_srh" and len(vals) in (0, 1):
        return ScaledSRH(*vals)
    raise ValueError(f"unknown recombination spec {spec!r}")


# --------------------------------------------------------------------------
# quadrature

@lru_cache(maxsize=None)
def _duffy_rule(n=4):
    """Points (barycentric weights for vertices 1, 2) and weights on the reference
    triangle via collapsed Gauss-Legendre, exact for polynomials of degree 2n-2."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    l1 = u.ravel()
    l2 = (v * (1.0 - u)).ravel()
    wt = (wu * wv * (1.0 - u)).ravel() * 2.0  # normalised to sum to 1
    return l1, l2, wt


def cell_averages(mesh: Mesh, fn) -> np.ndarray:
    """Cell means of fn(points (m, 2)) using a triangle fan from each centre."""
    l1, l2, wt = _duffy_rule()
    out = np.zeros(mesh.ncells)
    for grp in mesh.groups:
        a = mesh.vertices[mesh.face_vertices[grp.faces, 0]]
        b = mesh.vertices[mesh.face_vertices[grp.faces, 1]]
        c = grp.centres[:, None, :]
        tri_area = 0.5 * np.abs((a[..., 0] - c[..., 0]) * (b[..., 1] - c[..., 1])
                                - (b[..., 0] - c[..., 0]) * (a[..., 1] - c[..., 1]))
        pts = (c[:, :, None, :] + l1[None, None, :, None] * (a - c)[:, :, None, :]
               + l2[None, None, :, None] * (b - c)[:, :, None, :])
        vals = np.asarray(fn(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:3])
        integ = ((vals * wt).sum(axis=2) * tri_area).sum(axis=1)
        out[grp.cells] = integ / grp.volume
    return out


# --------------------------------------------------------------------------
# setup

@dataclass(eq=False)
class ProblemSetup:
    mesh: Mesh
    model: Statistics
    mean: MeanKind
    lam_n: TensorField
    lam_p: TensorField
    lam_phi: TensorField
    local_n: LocalDiffusion
    local_p: LocalDiffusion
    local_phi: LocalDiffusion
    doping: np.ndarray
    recombination: Recombination
    n_dirichlet: HybridVector
    p_dirichlet: HybridVector
    phi_dirichlet: HybridVector
    alpha_n: float
    alpha_p: float
    n_init: Callable
    p_init: Callable
    eta: float = DEFAULT_ETA
    info: dict = field(default_factory=dict)

    @property
    def upper_bound(self):
        return self.model.upper_bound


def make_setup(mesh: Mesh, model: Statistics, *, n_data, p_data, phi_data, alpha_n, alpha_p,
               n_init, p_init, doping, lam_n=None, lam_p=None, debye=1.0, b=0.0,
               recombination: Recombination | None = None, mean=MeanKind.ARITHMETIC,
               eta=DEFAULT_ETA, bounds=None, check_tol=1e-12, info=None) -> ProblemSetup:
    """Validate and precompute everything the solvers need.

    ``n_data``/``p_data``/``phi_data``/``n_init``/``p_init`` are callables of
    points (m, 2); ``doping`` is a per-cell array or a callable of points
    evaluated at cell centres.
    """
    recombination = recombination or NoRecombination()
    if mesh.dirichlet_faces.size == 0:
        raise SetupError("the mesh has no Dirichlet boundary")
    if not recombination.zero and abs(alpha_n + alpha_p) > check_tol:
        raise SetupError("recombination requires alpha_n + alpha_p = 0")
    dfaces = mesh.dirichlet_faces
    a = mesh.vertices[mesh.face_vertices[dfaces, 0]]
    bb = mesh.vertices[mesh.face_vertices[dfaces, 1]]
    pts = np.concatenate([a + t * (bb - a) for t in (0.0, 0.21, 0.5, 0.79, 1.0)])
    nd, pd, phd = (np.asarray(f(pts), dtype=float) for f in (n_data, p_data, phi_data))
    upper = model.upper_bound
    for name, v in (("N^D", nd), ("P^D", pd)):
        if np.any(~(v > 0)) or np.any(~(v < upper)):
            raise SetupError(f"boundary data {name} outside the admissible interval")
    comp = max(np.abs(model.h(nd) - phd - alpha_n).max(), np.abs(model.h(pd) + phd - alpha_p).max())
    if comp > check_tol * (1.0 + abs(alpha_n) + abs(alpha_p)):
        raise SetupError(f"boundary data violate the compatibility condition (residual {comp:.3e})")
    if bounds is not None:
        m, M = bounds
        if not (0 < m < M < upper):
            raise SetupError("density bounds must satisfy 0 < m < M < a")

    if lam_n is None or lam_p is None:
        ln, lp = magnetic_tensors(b)
        lam_n = ln if lam_n is None else lam_n
        lam_p = lp if lam_p is None else lam_p
    tn = tensor_field(mesh, lam_n)
    tp = tensor_field(mesh, lam_p)
    tphi = tensor_field(mesh, debye ** 2 * np.eye(2))
    C = np.asarray(doping(mesh.cell_centres), dtype=float) if callable(doping) else np.asarray(doping, dtype=float)
    if C.shape != (mesh.ncells,):
        raise SetupError("doping must give one value per cell")
    nD, pD, phiD = interpolate_boundary(mesh, model, n_data, p_data, phi_data)
    return ProblemSetup(mesh, model, MeanKind(mean), tn, tp, tphi,
                        assemble_local(mesh, tn, eta), assemble_local(mesh, tp, eta),
                        assemble_local(mesh, tphi, eta), C, recombination, nD, pD, phiD,
                        float(alpha_n), float(alpha_p), n_init, p_init, eta, dict(info or {}))


def pn_doping(n_region=(0.0, 0.25, 0.75, 1.0)):
    """+1 inside the rectangle (xmin, xmax, ymin, ymax), -1 elsewhere."""
    x0, x1, y0, y1 = n_region

    def C(x):
        x = np.asarray(x)
        inside = (x[:, 0] >= x0) & (x[:, 0] <= x1) & (x[:, 1] >= y0) & (x[:, 1] <= y1)
        return np.where(inside, 1.0, -1.0)

    return C


def diode_setup(mesh: Mesh, model: Statistics, n0, n1, alpha0, *, b=0.0, debye=1.0,
                recombination=None, mean=MeanKind.ARITHMETIC, n_region=(0.0, 0.25, 0.75, 1.0),
                initial="diode_sqrt", eta=DEFAULT_ETA) -> ProblemSetup:
    """PN-diode: N^D = n0 on the bottom contact, n1 on the top contact,
    P^D = g(alpha0 - h(N^D)), phi^D = (h(N^D) - h(P^D)) / 2."""
    p0 = float(model.g(alpha0 - model.h(n0)))
    p1 = float(model.g(alpha0 - model.h(n1)))
    split = 0.5

    def pick(v0, v1):
        return lambda x: np.where(np.asarray(x)[:, 1] < split, v0, v1)

    hn0, hn1 = float(model.h(n0)), float(model.h(n1))
    ph0, ph1 = 0.5 * (hn0 - float(model.h(p0))), 0.5 * (hn1 - float(model.h(p1)))
    if initial == "diode_sqrt":
        def n_init(x):
            return n1 + (n0 - n1) * (1.0 - np.sqrt(np.clip(np.asarray(x)[:, 1], 0.0, None)))

        def p_init(x):
            return p1 + (p0 - p1) * (1.0 - np.sqrt(np.clip(np.asarray(x)[:, 1], 0.0, None)))
    elif initial == "equilibrium":
        n_init = p_init = None
    else:
        raise SetupError(f"unknown initial profile {initial!r}")
    lo, hi = min(n0, n1, p0, p1), max(n0, n1, p0, p1)
    return make_setup(mesh, model, n_data=pick(n0, n1), p_data=pick(p0, p1), phi_data=pick(ph0, ph1),
                      alpha_n=0.5 * alpha0, alpha_p=0.5 * alpha0, n_init=n_init, p_init=p_init,
                      doping=pn_doping(n_region), debye=debye, b=b, recombination=recombination,
                      mean=mean, eta=eta, bounds=(lo, hi) if hi > lo else None,
                      info=dict(n0=n0, n1=n1, p0=p0, p1=p1, alpha0=alpha0, b=b, debye=debye,
                                initial=initial))
