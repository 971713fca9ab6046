"""Pure-numpy fallback for the hot kernels in ``antipgd._core``.

Semantics match the compiled kernels operation for operation; results may
differ from the compiled backend in the last few ulps because reductions
(dot products) associate differently.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def valley_block(u, v, eta, eps, loss_cap):
    """Advance the widening-valley recursion over a block of steps, in place.

    One step of u_{k+1} = (1 - eta v_k^2) u_k + eps_k^u,
                v_{k+1} = (1 - eta |u_k|^2) v_k + eps_k^v,
    with eps of shape (T, d+1); the last column perturbs v. Stops early when
    the loss v^2 |u|^2 / 2 exceeds loss_cap or turns non-finite.

    Returns (steps_done, v_out, diverged).
    """
    n_steps = eps.shape[0]
    d = u.shape[0]
    usq = float(u @ u)
    for t in range(n_steps):
        fu = 1.0 - eta * (v * v)
        fv = 1.0 - eta * usq
        u *= fu
        u += eps[t, :d]
        usq = float(u @ u)
        v = fv * v + float(eps[t, d])
        loss = 0.5 * (v * v) * usq
        if not (loss <= loss_cap):
            return t + 1, v, True
    return n_steps, v, False


def recursion_block(w, xi_prev, rho, xi, anticorrelated, out_sum, out_sumsq):
    """Advance w_{k+1} = rho_k w_k + eps_k over a block, for all samples.

    w: (S, d) sample states, updated in place.
    xi_prev: (S, d) carry of the previous raw draw (zeros before step 0, so
        the first anticorrelated increment is the raw draw itself).
    rho: (T, S) per-step, per-sample contraction factors.
    xi: (T, S, d) raw draws for the block.
    out_sum / out_sumsq: (T,) accumulators receiving, for each step, the
        sample sums of |w|^2 and |w|^4.
    """
    n_steps = xi.shape[0]
    for t in range(n_steps):
        if anticorrelated:
            eps = xi[t] - xi_prev
            xi_prev[:] = xi[t]
        else:
            eps = xi[t]
        w *= rho[t][:, None]
        w += eps
        sq = np.einsum("sd,sd->s", w, w)
        out_sum[t] = sq.sum()
        out_sumsq[t] = (sq * sq).sum()
