"""Discrete Kadanoff-Baym machinery shared by the bath and Lindblad solvers.

A problem supplies ``D1 = dG^>/dt1`` (and optionally ``D2 = dG^>/dt2``) as
functionals of the current grid.  The discrete equations are the
trapezoidal integrals of these derivatives, anchored on the conserved
diagonal ``G^>(t, t) = -i/2`` or on the frozen pre-quench quadrant
``t1, t2 <= 0``.  Two drivers solve them:

* ``fixed_point``: damped whole-grid Jacobi sweeps.
* ``march``: causal row-by-row trapezoidal stepping with a corrector loop.

Both converge to the same discrete solution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import NonConvergenceError
from .grid import TimeLattice, theta

log = logging.getLogger(__name__)

# |G^>| <= 1/2 holds for any state; anything far above it is a blow-up.
_BLOWUP = 4.0


class DivergenceError(NonConvergenceError):
    """The iteration produced non-finite or unphysically large values."""


@dataclass
class SolveInfo:
    method: str
    sweeps: int = 0
    damping: float = 1.0
    history: list = field(default_factory=list)

    @property
    def final_update(self) -> float:
        return self.history[-1] if self.history else 0.0


def quadrature_weights(lattice: TimeLattice) -> np.ndarray:
    """Weights for ``int_{-lambda_t}^{t} dt3``.

    The upper limit is always set by a step function inside the integrand,
    which carries the half weight of the trapezoid through theta(0) = 1/2.
    """
    w = np.full(lattice.n_points, lattice.delta_t)
    w[0] *= 0.5
    return w


def step_matrix(lattice: TimeLattice) -> np.ndarray:
    """``T[i, j] = theta(t_i - t_j)``."""
    t = lattice.times
    return theta(t[:, None] - t[None, :])


def pin(g: np.ndarray) -> np.ndarray:
    """Symmetrize in place and reset the equal-time values to -i/2."""
    g[...] = 0.5 * (g - g.T.conj())
    np.fill_diagonal(g, -0.5j)
    return g


def cumulative_trapezoid(d, dt, axis):
    c = np.zeros_like(d)
    body = 0.5 * dt * (d[1:] + d[:-1]) if axis == 0 else \
        0.5 * dt * (d[:, 1:] + d[:, :-1])
    if axis == 0:
        c[1:] = np.cumsum(body, axis=0)
    else:
        c[:, 1:] = np.cumsum(body, axis=1)
    return c


def evolved_masks(lattice: TimeLattice):
    """Boolean masks of the lower and upper off-diagonal cells after t = 0."""
    n = lattice.n_points
    i0 = lattice.zero_index
    i, j = np.indices((n, n))
    lower = (i > j) & (i > i0)
    upper = (j > i) & (j > i0)
    return lower, upper


def integrate_map(g, d1, d2, lattice: TimeLattice):
    """The fixed-point map: re-integrate both equations from their anchors.

    Lower cells come from ``D1`` integrated along ``t1`` starting at
    ``t1 = max(0, t2)``; upper cells from ``D2`` along ``t2``.  Each result
    is mirrored through the Majorana relation and the two are averaged.
    """
    n = lattice.n_points
    i0 = lattice.zero_index
    dt = lattice.delta_t
    idx = np.arange(n)
    anchor = np.maximum(i0, idx)
    lower, upper = evolved_masks(lattice)

    c1 = cumulative_trapezoid(d1, dt, axis=0)
    g1 = c1 + (g[anchor, idx] - c1[anchor, idx])[None, :]
    full1 = g.copy()
    full1[lower] = g1[lower]
    full1[upper] = -g1.T.conj()[upper]

    if d2 is None:
        return full1
    c2 = cumulative_trapezoid(d2, dt, axis=1)
    g2 = c2 + (g[idx, anchor] - c2[idx, anchor])[:, None]
    full2 = g.copy()
    full2[upper] = g2[upper]
    full2[lower] = -g2.T.conj()[lower]
    return 0.5 * (full1 + full2)


def fixed_point(derivatives, g0, lattice: TimeLattice, *, tol, max_sweeps,
                damping=0.5, min_damping=1.0 / 256, callback=None):
    """Damped Jacobi iteration ``G <- G + eta (F(G) - G)`` on the whole grid.

    ``derivatives(g)`` returns ``(D1, D2)``; ``D2`` may be None.  The damping
    is halved and the sweep retried from the last good grid whenever the
    iterate stops being finite or bounded.
    """
    g = pin(np.array(g0, dtype=np.complex128, copy=True))
    info = SolveInfo("fixed_point", damping=damping)
    eta = damping
    for sweep in range(1, max_sweeps + 1):
        d1, d2 = derivatives(g)
        update = integrate_map(g, d1, d2, lattice) - g
        res = float(np.max(np.abs(update)))
        trial = pin(g + eta * update)
        if not np.isfinite(res) or np.max(np.abs(trial)) > _BLOWUP:
            eta *= 0.5
            log.info("sweep %d diverging; damping -> %g", sweep, eta)
            if eta < min_damping:
                raise DivergenceError(
                    "fixed-point sweeps diverged; try a smaller damping",
                    residual=res, history=info.history)
            continue
        g = trial
        info.history.append(res)
        info.sweeps = sweep
        info.damping = eta
        if callback is not None:
            callback(sweep, res)
        if res < tol:
            return g, info
    raise NonConvergenceError(
        f"fixed point not reached in {max_sweeps} sweeps "
        f"(last update {info.final_update:.3g}, tol {tol:g})",
        residual=info.final_update, history=info.history)


def march(derivative_row, g0, lattice: TimeLattice, *, tol, max_corrector=50):
    """Causal trapezoidal stepping in ``t1`` for rows ``t1 > 0``.

    ``derivative_row(g, n)`` returns ``D1[n, :n + 1]`` and may only read rows
    and columns ``<= n``.  Each new row is predicted by an Euler step and
    corrected until it changes by less than ``tol``.
    """
    g = pin(np.array(g0, dtype=np.complex128, copy=True))
    n_pts = lattice.n_points
    i0 = lattice.zero_index
    dt = lattice.delta_t
    info = SolveInfo("causal")
    d_prev = derivative_row(g, i0)
    for n in range(i0 + 1, n_pts):
        base = g[n - 1, :n]
        row = base + dt * d_prev[:n]
        for it in range(max_corrector):
            _set_row(g, n, row)
            d_new = derivative_row(g, n)
            new_row = base + 0.5 * dt * (d_prev[:n] + d_new[:n])
            change = float(np.max(np.abs(new_row - row)))
            row = new_row
            if not np.isfinite(change) or np.max(np.abs(row)) > _BLOWUP:
                raise DivergenceError(
                    f"causal step diverged at t1 index {n}",
                    residual=change, history=info.history)
            if change < tol:
                break
        else:
            raise NonConvergenceError(
                f"corrector stalled at t1 index {n} (change {change:.3g})",
                residual=change, history=info.history)
        _set_row(g, n, row)
        d_prev = derivative_row(g, n)
        info.history.append(change)
        info.sweeps = n - i0
    return g, info


def _set_row(g, n, row):
    g[n, :n] = row
    g[:n, n] = -np.conj(row)
    g[n, n] = -0.5j


def finite_difference_defect(g, d1, d2, lattice: TimeLattice):
    """``max(|dG/dt1 - D1|, |dG/dt2 - D2|)`` with second-order differences.

    The frozen quadrant ``t1, t2 <= 0`` reports zero.
    """
    dt = lattice.delta_t
    r1 = np.abs(np.gradient(g, dt, axis=0, edge_order=2) - d1)
    r2 = np.abs(np.gradient(g, dt, axis=1, edge_order=2) - d2)
    out = np.maximum(r1, r2)
    i0 = lattice.zero_index
    out[: i0 + 1, : i0 + 1] = 0.0
    return out
