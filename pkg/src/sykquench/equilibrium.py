"""Thermal SYK Green's functions from the real-frequency Schwinger-Dyson loop.

Conventions: ``f(w) = int dt e^{iwt} f(t)`` and
``f(t) = int dw/2pi e^{-iwt} f(w)``, sampled on matching FFT grids
``t_k = (k - n/2) dt`` and ``w_m = (m - n/2) dw`` with ``dt * dw * n = 2 pi``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .grid import ContourGreen, DomainError, TimeLattice

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    """An iteration hit its cap before meeting the tolerance."""

    def __init__(self, message, residual=None, history=()):
        super().__init__(message)
        self.residual = residual
        self.history = list(history)


@dataclass(frozen=True)
class EquilibriumParams:
    beta: float
    coupling_j: float
    q_body: int = 4
    omega_max: float | None = None
    n_omega: int = 4096
    mixing: float = 0.3
    tol: float = 1e-10
    max_iters: int = 5000

    def __post_init__(self):
        if self.beta < 0:
            raise DomainError("beta must be non-negative")
        if self.coupling_j < 0:
            raise DomainError("coupling_j must be non-negative")
        if self.q_body < 2 or self.q_body % 2:
            raise DomainError("q_body must be an even integer >= 2")
        n = self.n_omega
        if n < 8 or n & (n - 1):
            raise DomainError("n_omega must be a power of two")
        if not 0 < self.mixing <= 1:
            raise DomainError("mixing must lie in (0, 1]")
        if self.omega_max is None:
            scale = self.coupling_j if self.coupling_j > 0 else 1.0
            object.__setattr__(self, "omega_max", 16.0 * scale)
        if self.omega_max <= 0:
            raise DomainError("omega_max must be positive")

    @classmethod
    def for_lattice(cls, lattice: TimeLattice, beta: float, coupling_j: float,
                    **kw) -> "EquilibriumParams":
        """Frequency grid whose time step equals the lattice step."""
        n = kw.pop("n_omega", 4096)
        while n < 2 * lattice.n_points:
            n *= 2
        return cls(beta=beta, coupling_j=coupling_j,
                   omega_max=np.pi / lattice.delta_t, n_omega=n, **kw)

    @property
    def d_omega(self) -> float:
        return 2.0 * self.omega_max / self.n_omega

    @property
    def dt(self) -> float:
        return np.pi / self.omega_max

    @property
    def omega(self) -> np.ndarray:
        return (np.arange(self.n_omega) - self.n_omega // 2) * self.d_omega

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_omega) - self.n_omega // 2) * self.dt


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    params: EquilibriumParams
    g_retarded_omega: np.ndarray
    spectral: np.ndarray
    g_greater_time: np.ndarray
    iterations: int = 0
    residuals: tuple = field(default=(), repr=False)

    @property
    def omega(self):
        return self.params.omega

    @property
    def times(self):
        return self.params.times

    def sum_rule(self) -> float:
        return float(np.sum(self.spectral) * self.params.d_omega / (2 * np.pi))

    def greater_omega(self) -> np.ndarray:
        return to_frequency(self.g_greater_time, self.params.dt)

    def lesser_omega(self) -> np.ndarray:
        # G^<(t) = -G^>(-t); index n - k holds -t_k
        g = self.g_greater_time
        return to_frequency(-np.roll(g[::-1], 1), self.params.dt)

    def kms_residual(self, omega_limit: float | None = None) -> float:
        """Relative KMS defect ``n_F(w) G^>(w) + n_F(-w) G^<(w)``.

        This is ``G^> = -e^{bw} G^<`` multiplied through by ``n_F(w)``, which
        keeps the check finite where ``e^{bw}`` would amplify round-off.
        """
        p = self.params
        w = p.omega
        gg, gl = self.greater_omega(), self.lesser_omega()
        defect = fermi(p.beta, w) * gg + fermi(p.beta, -w) * gl
        lim = 0.5 * p.omega_max if omega_limit is None else omega_limit
        mask = np.abs(w) <= lim
        return float(np.max(np.abs(defect[mask])) / np.max(np.abs(gg)))

    def retarded_time(self) -> np.ndarray:
        return to_time(self.g_retarded_omega, self.params.d_omega)


def fermi(beta, omega):
    """Fermi-Dirac occupation; identically 1/2 at beta = 0."""
    return expit(-beta * np.asarray(omega, dtype=float))


def _signs(n):
    return np.where(np.arange(n) % 2, -1.0, 1.0)


def to_frequency(f_t, dt):
    """``dt * sum_k f(t_k) e^{i w_m t_k}`` on the centered grids."""
    n = len(f_t)
    s = _signs(n)
    return dt * n * s * np.fft.ifft(s * f_t)


def to_time(f_w, d_omega):
    """``dw/2pi * sum_m f(w_m) e^{-i w_m t_k}`` on the centered grids."""
    n = len(f_w)
    s = _signs(n)
    return d_omega / (2 * np.pi) * s * np.fft.fft(s * f_w)


def half_line_transform(f_t, f_zero, dt):
    """``int_0^inf dt e^{iwt} f(t)`` for ``f`` known at ``t_k >= 0``.

    Exact for the piecewise-linear interpolant of the samples: the plain
    DFT is multiplied by ``W(wdt)`` and the jump at ``t = 0`` (value
    ``f_zero``) gets its own endpoint weight.  Samples at ``t < 0`` must be
    zero.
    """
    n = len(f_t)
    th = (np.arange(n) - n // 2) * (2.0 * np.pi / n)
    small = np.abs(th) < 1e-4
    ths = np.where(small, 1.0, th)
    w = np.where(small, 1 - th ** 2 / 12, 2 * (1 - np.cos(ths)) / ths ** 2)
    a0 = np.where(small, -0.5 + th ** 2 / 24 + 1j * th / 6,
                  -(1 - np.cos(ths)) / ths ** 2 + 1j * (ths - np.sin(ths)) / ths ** 2)
    return w * to_frequency(f_t, dt) + dt * a0 * f_zero


def conformal_b(coupling_j: float, q: int) -> float:
    """Prefactor with ``pi J^2 b^q = (1/2 - 1/q) tan(pi/q)``; q=4 gives 4piJ^2b^4=1."""
    return ((0.5 - 1.0 / q) * np.tan(np.pi / q)
            / (np.pi * coupling_j ** 2)) ** (1.0 / q)


def conformal_seed(beta: float, coupling_j: float, q: int, times,
                   dt: float | None = None) -> np.ndarray:
    """Conformal retarded function ``G_R(t)`` sampled at ``times``.

    ``i G_R(t) = 2 b cos(pi/q) (pi / (beta sinh(pi t / beta)))^(2/q) theta(t)``.
    The t = 0 sample is taken at ``dt/2`` where the closed form diverges.
    """
    if beta <= 0:
        raise DomainError("conformal seed needs beta > 0; use the free seed")
    if coupling_j <= 0:
        raise DomainError("conformal seed needs J > 0")
    t = np.asarray(times, dtype=float)
    if dt is None:
        dt = np.min(np.diff(np.unique(t))) if t.size > 1 else 1.0
    tt = np.where(np.abs(t) < 1e-12 * max(dt, 1.0), 0.5 * dt, t)
    b = conformal_b(coupling_j, q)
    out = np.zeros(t.shape, dtype=np.complex128)
    pos = tt > 0
    x = np.pi * tt[pos] / beta
    # log-space sinh keeps large t finite
    log_sinh = x + np.log1p(-np.exp(-2 * x)) - np.log(2.0)
    mag = 2 * b * np.cos(np.pi / q) * np.exp(
        (2.0 / q) * (np.log(np.pi / beta) - log_sinh))
    out[pos] = -1j * mag
    return out


def _seed(params: EquilibriumParams) -> np.ndarray:
    w = params.omega
    J = params.coupling_j
    if params.beta > 0 and params.q_body >= 4:
        t = params.times
        gr_t = conformal_seed(params.beta, J, params.q_body, t, params.dt)
        gr_t[t == 0] = -1j
        seed = half_line_transform(gr_t * (t >= 0), -1j, params.dt)
        if np.all(np.isfinite(seed)) and np.all(seed.imag < 0):
            return seed
    return 1.0 / (w + 1j * J)


def _free_state(params: EquilibriumParams) -> EquilibriumState:
    w = params.omega
    zero = params.n_omega // 2
    gr = np.zeros_like(w, dtype=np.complex128)
    nz = np.arange(w.size) != zero
    gr[nz] = 1.0 / w[nz]
    gr[zero] = -1j * np.pi / params.d_omega
    spectral = -2.0 * gr.imag
    gg = np.full(w.size, -0.5j)
    return EquilibriumState(params, gr, spectral, gg)


def self_energy_retarded_time(spectral, params: EquilibriumParams):
    """``Sigma^>(t) - Sigma^<(t)`` with ``Sigma^> = -i^q J^2 (G^>)^(q-1)``.

    Multiplying by ``theta(t)`` gives ``Sigma_R(t)``.
    """
    w = params.omega
    nf = fermi(params.beta, w)
    gg = to_time(-1j * (1 - nf) * spectral, params.d_omega)
    gl = to_time(1j * nf * spectral, params.d_omega)
    q = params.q_body
    pref = -(1j ** q) * params.coupling_j ** 2
    sg = pref * gg ** (q - 1)
    sl = pref * gl ** (q - 1)
    return sg - sl


def schwinger_dyson_map(g_retarded, params: EquilibriumParams):
    """One application of ``G_R -> 1 / (w - Sigma_R[G_R])``."""
    spectral = -2.0 * g_retarded.imag
    jump = self_energy_retarded_time(spectral, params)
    t = params.times
    sr = half_line_transform(jump * (t >= 0), jump[t == 0][0], params.dt)
    return 1.0 / (params.omega - sr)


def solve_equilibrium(params: EquilibriumParams,
                      initial: np.ndarray | None = None) -> EquilibriumState:
    """Damped fixed-point solve of the real-frequency Schwinger-Dyson loop."""
    if params.coupling_j == 0:
        return _free_state(params)
    gr = _seed(params) if initial is None else np.asarray(initial, complex)
    history = []
    for it in range(1, params.max_iters + 1):
        new = schwinger_dyson_map(gr, params)
        if not np.all(np.isfinite(new)):
            raise NonConvergenceError(
                f"equilibrium iteration diverged at step {it}",
                residual=np.inf, history=history)
        res = float(np.max(np.abs(new - gr)))
        history.append(res)
        gr = (1 - params.mixing) * gr + params.mixing * new
        if res < params.tol:
            break
    else:
        raise NonConvergenceError(
            f"equilibrium solve did not reach tol={params.tol:g} in "
            f"{params.max_iters} iterations (last residual {history[-1]:.3g})",
            residual=history[-1], history=history)
    log.debug("equilibrium beta=%g J=%g converged in %d steps",
              params.beta, params.coupling_j, it)
    spectral = -2.0 * gr.imag
    nf = fermi(params.beta, params.omega)
    gg = to_time(-1j * (1 - nf) * spectral, params.d_omega)
    gg = _majorana_time_symmetric(gg)
    return EquilibriumState(params, gr, spectral, gg, it, tuple(history))


def _majorana_time_symmetric(g):
    """Impose ``g(-t) = -conj(g(t))`` and ``g(0) = -i/2`` on the FFT grid."""
    n = len(g)
    mirrored = -np.conj(np.roll(g[::-1], 1))
    out = 0.5 * (g + mirrored)
    out[n // 2] = -0.5j
    return out


def lay_initial_condition(eq: EquilibriumState,
                          lattice: TimeLattice) -> ContourGreen:
    """Spread ``G^>(t1 - t2)`` over the whole lattice."""
    p = eq.params
    if not np.isclose(p.dt, lattice.delta_t, rtol=1e-9, atol=0):
        raise DomainError(
            f"equilibrium time step {p.dt:g} differs from lattice step "
            f"{lattice.delta_t:g}")
    n = lattice.n_points
    if p.n_omega // 2 < n:
        raise DomainError("equilibrium time window is shorter than the lattice")
    idx = np.arange(n)
    rel = idx[:, None] - idx[None, :] + p.n_omega // 2
    return ContourGreen(lattice, eq.g_greater_time[rel])


def with_beta(params: EquilibriumParams, beta: float) -> EquilibriumParams:
    return replace(params, beta=beta)
