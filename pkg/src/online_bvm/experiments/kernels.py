"""Compiled inner loop for intercept-only online variational updates.

Mirrors :func:`online_bvm.solvers.vb_fit` for p = 1 with the prior as the
starting point: raw mean, log standard deviation, frozen draws per step,
capped gradient steps with persistent halving, and a sup-norm stop.
"""
import math

import numpy as np
from numba import njit

from ..solvers import VB_DIAG_FLOOR

LOG_FLOOR = math.log(VB_DIAG_FLOOR)


@njit(cache=True)
def _elbo_grad(m, l, z, zsum, s, n, mu0, om0):
    c = math.exp(max(l, LOG_FLOOR))
    sb = 0.0
    ssig = 0.0
    ssigz = 0.0
    for k in range(z.size):
        th = m + c * z[k]
        e = math.exp(-abs(th))
        # b(th) = max(th, 0) + log1p(exp(-|th|))
        sb += max(th, 0.0) + math.log1p(e)
        if th >= 0.0:
            sig = 1.0 / (1.0 + e)
        else:
            sig = e / (1.0 + e)
        ssig += sig
        ssigz += sig * z[k]
    d = z.size
    # sum_k [s th_k - n b(th_k)] and its derivatives in (m, c)
    ell = (s * (d * m + c * zsum) - n * sb) / d
    gm = s - n * ssig / d
    gc = (s * zsum - n * ssigz) / d
    dm = m - mu0
    kl = 0.5 * (om0 * c * c + om0 * dm * dm - 1.0 - 2.0 * math.log(c) - math.log(om0))
    return ell - kl, gm - om0 * dm, (gc - (om0 * c - 1.0 / c)) * c


@njit(cache=True)
def vb_intercept_step(mu0, sd0, z, s, n, step_size, decay, tol, max_iter, max_halvings,
                      max_move):
    """One update from the prior N(mu0, sd0^2); returns (mean, sd, iterations, converged)."""
    om0 = 1.0 / (sd0 * sd0)
    zsum = z.sum()
    m = mu0
    l = math.log(sd0)
    fx, gm, gl = _elbo_grad(m, l, z, zsum, s, n, mu0, om0)
    step = step_size
    iters = 0
    converged = False
    while True:
        gmax = max(abs(gm), abs(gl))
        if gmax <= tol:
            converged = True
            break
        if iters >= max_iter:
            break
        accepted = False
        for _ in range(max_halvings + 1):
            eff = min(step, max_move / gmax)
            cm = m + eff * gm
            cl = l + eff * gl
            fc, cgm, cgl = _elbo_grad(cm, cl, z, zsum, s, n, mu0, om0)
            if math.isfinite(fc) and fc >= fx:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        m, l, fx, gm, gl = cm, cl, fc, cgm, cgl
        iters += 1
        step *= decay
    return m, math.exp(max(l, LOG_FLOOR)), iters, converged


@njit(cache=True)
def vb_intercept_run(sums, sizes, draws, mu_init, sd_init, step_size, decay, tol, max_iter,
                     max_halvings, max_move):
    """Chain the updates over all steps of one replication.

    ``draws`` is (T, D): row t holds the frozen normals of step t.
    """
    steps = sums.size
    path = np.empty(steps)
    mu = mu_init
    sd = sd_init
    total = 0
    n_conv = 0
    for t in range(steps):
        mu, sd, it, conv = vb_intercept_step(mu, sd, draws[t], sums[t], sizes[t], step_size,
                                             decay, tol, max_iter, max_halvings, max_move)
        total += it
        n_conv += conv
        path[t] = mu
    return path, sd, total, n_conv
