"""Independent reference computations used by several test modules."""

import numpy as np


def svr_dual_value(beta, K, y, eps):
    return float(-0.5 * beta @ K @ beta + y @ beta - eps * np.abs(beta).sum())


def svr_three_point_grid(K, y, C, eps, step=1e-3):
    """Exhaustive maximisation of the 3-variable SVR dual over the feasible set
    {beta in [-C, C]^3, sum(beta) = 0}.

    A full pass on a 10*step lattice locates the optimum; the concave objective
    then only needs a full pass on the ``step`` lattice around it.
    """
    def scan(b1_vals, b2_vals):
        b1 = b1_vals[:, None]
        b2 = b2_vals[None, :]
        b3 = -b1 - b2
        val = (-0.5 * (K[0, 0] * b1 ** 2 + K[1, 1] * b2 ** 2 + K[2, 2] * b3 ** 2
                       + 2 * K[0, 1] * b1 * b2 + 2 * K[0, 2] * b1 * b3 + 2 * K[1, 2] * b2 * b3)
               + y[0] * b1 + y[1] * b2 + y[2] * b3
               - eps * (np.abs(b1) + np.abs(b2) + np.abs(b3)))
        val = np.where(np.abs(b3) <= C + 1e-12, val, -np.inf)
        i, j = np.unravel_index(np.argmax(val), val.shape)
        return val[i, j], b1_vals[i], b2_vals[j]

    coarse = 10 * step
    grid = np.round(np.arange(-C, C + coarse / 2, coarse) / coarse) * coarse
    _, c1, c2 = scan(grid, grid)
    fine = np.arange(-20, 21) * step
    v1 = np.clip(c1 + fine, -C, C)
    v2 = np.clip(c2 + fine, -C, C)
    best, b1, b2 = scan(v1, v2)
    return best, np.array([b1, b2, -b1 - b2])


def ols_sse(B, y):
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    r = y - B @ coef
    return float(r @ r)
