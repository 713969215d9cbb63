"""Entropy, dissipation, distances to equilibrium and decay-rate fits."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .hfv import bilinear, cell_forms, reconstruction

CSV_COLUMNS = ["Temps", "time_step", "Nb_iter", "Entro", "Diff_eq_L2", "min_N", "min_P",
               "Diff_max_N", "Diff_max_P", "cumulative_cost"]


@dataclass
class StepRecord:
    t: float
    dt: float
    iterations: int
    entropy: float
    dissipation: float
    l2: float
    min_n: float
    min_p: float
    max_n: float
    max_p: float
    cost: int


def entropy(setup, state, eq) -> float:
    """Relative entropy: cell integrals of the Bregman divergence of H plus half
    the electrostatic energy of phi - phi^e."""
    m, vol = setup.model, setup.mesh.cell_measure
    hn = float(vol @ m.bregman(state.n.cells, eq.n.cells))
    hp = float(vol @ m.bregman(state.p.cells, eq.p.cells))
    d = state.phi - eq.phi
    return hn + hp + 0.5 * bilinear(setup.mesh, setup.local_phi, d, d)


def dissipation_terms(setup, state):
    """The three non-negative contributions (electrons, holes, recombination)."""
    mesh, model = setup.mesh, setup.model
    wn, wp = state.quasi_fermi(setup)
    rn = reconstruction(mesh, state.n, setup.mean, model)
    rp = reconstruction(mesh, state.p, setup.mean, model)
    tn = float((rn * cell_forms(mesh, setup.local_n, wn, wn)).sum())
    tp = float((rp * cell_forms(mesh, setup.local_p, wp, wp)).sum())
    Nc, Pc = state.n.cells, state.p.cells
    R = setup.recombination.rate(model, Nc, Pc)
    tr = float(mesh.cell_measure @ (R * (model.h(Nc) + model.h(Pc))))
    return tn, tp, tr


def dissipation(setup, state) -> float:
    return float(sum(dissipation_terms(setup, state)))


def l2_distance(setup, state, eq) -> float:
    vol = setup.mesh.cell_measure
    sq = ((state.n.cells - eq.n.cells) ** 2 + (state.p.cells - eq.p.cells) ** 2
          + (state.phi.cells - eq.phi.cells) ** 2)
    return float(math.sqrt(vol @ sq))


def extremes(state):
    return state.n.min(), state.p.min(), state.n.max(), state.p.max()


def make_record(setup, state, eq, dt, iterations, cost) -> StepRecord:
    mn, mp, Mn, Mp = extremes(state)
    return StepRecord(float(state.t), float(dt), int(iterations), entropy(setup, state, eq),
                      dissipation(setup, state), l2_distance(setup, state, eq), mn, mp, Mn, Mp, int(cost))


def dissipation_defects(records, slack=0.0):
    """E^{n+1} - E^n + dt D^{n+1} for consecutive records."""
    E = np.array([r.entropy for r in records])
    D = np.array([r.dissipation for r in records])
    dt = np.array([r.dt for r in records])
    return E[1:] - E[:-1] + dt[1:] * D[1:]


@dataclass
class DecayFit:
    rate: float
    r2: float
    npoints: int
    t_start: float
    t_stop: float


class FitError(ValueError):
    pass


def fit_decay_rate(records, window=None, floor=None, min_points=5) -> DecayFit:
    """Least-squares slope of log E against t.

    ``window`` is an optional (t_start, t_stop) pair.  Points with entropy
    below ``floor`` (default 1e3 * eps * E^0) are the round-off plateau and are
    excluded.
    """
    t = np.array([r.t if hasattr(r, "t") else r[0] for r in records], dtype=float)
    E = np.array([r.entropy if hasattr(r, "entropy") else r[1] for r in records], dtype=float)
    if floor is None:
        floor = 1e3 * np.finfo(float).eps * E[0]
    keep = E > floor
    # only the part of the history before the plateau is first reached
    if not keep.all():
        keep[np.argmin(keep):] = False
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if keep.sum() < min_points:
        raise FitError(f"only {int(keep.sum())} usable points for the decay fit")
    tt, y = t[keep], np.log(E[keep])
    A = np.vstack([tt, np.ones_like(tt)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), r2, int(keep.sum()), float(tt[0]), float(tt[-1]))


def write_timeseries(records, path, upper_bound=math.inf):
    """CSV with the columns of CSV_COLUMNS.  Diff_eq_L2 holds the squared L2
    distance; Diff_max_* is a - max for bounded statistics and max otherwise."""
    bounded = math.isfinite(upper_bound)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            dn = upper_bound - r.max_n if bounded else r.max_n
            dp = upper_bound - r.max_p if bounded else r.max_p
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in
                        (r.t, r.dt, r.iterations, r.entropy, r.l2 ** 2, r.min_n, r.min_p,
                         float(dn), float(dp), r.cost)])


def read_timeseries(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_COLUMNS}


def records_as_dicts(records):
    return [asdict(r) for r in records]
