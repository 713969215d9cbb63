"""Static condensation of cell unknowns for hybrid Newton systems."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularBlockError(ArithmeticError):
    pass


def cell_blocks(J, ncell_dofs, bs):
    """Extract the block-diagonal cell-cell part of J as dense (n, bs, bs)."""
    Jmm = J[:ncell_dofs, :ncell_dofs].tocoo()
    if np.any(Jmm.row // bs != Jmm.col // bs):
        raise ValueError("cell-cell block is not block diagonal")
    blocks = np.zeros((ncell_dofs // bs, bs, bs))
    np.add.at(blocks, (Jmm.row // bs, Jmm.row % bs, Jmm.col % bs), Jmm.data)
    return blocks


def invert_blocks(blocks, rcond=1e-14):
    if blocks.shape[1] == 1:
        d = blocks[:, 0, 0]
        if np.any(~(np.abs(d) > rcond * max(np.abs(d).max(), 1e-300))):
            raise SingularBlockError("singular cell block")
        return (1.0 / d)[:, None, None]
    cond = np.linalg.cond(blocks)
    if np.any(~(cond < 1.0 / rcond)):
        raise SingularBlockError(f"singular 3x3 cell block (cond {np.nanmax(cond):.2e})")
    return np.linalg.inv(blocks)


def condensed_solve(J, rhs, ncell_dofs, bs):
    """Solve J x = rhs by eliminating the first ``ncell_dofs`` unknowns.

    The cell-cell block must be block diagonal with blocks of size ``bs``.
    Returns x; raises SingularBlockError on a singular cell block.
    """
    J = sp.csr_matrix(J)
    nb = ncell_dofs // bs
    inv = invert_blocks(cell_blocks(J, ncell_dofs, bs))
    Binv = sp.bsr_matrix((inv, np.arange(nb), np.arange(nb + 1)), shape=(ncell_dofs, ncell_dofs)).tocsr()
    Jme = J[:ncell_dofs, ncell_dofs:]
    Jem = J[ncell_dofs:, :ncell_dofs]
    Jee = J[ncell_dofs:, ncell_dofs:]
    bm, be = rhs[:ncell_dofs], rhs[ncell_dofs:]
    tmp = Jem @ Binv
    S = (Jee - tmp @ Jme).tocsc()
    if S.shape[0]:
        xe = spla.splu(S).solve(be - tmp @ bm)
    else:
        xe = np.zeros(0)
    xm = Binv @ (bm - Jme @ xe)
    return np.concatenate([xm, xe])
