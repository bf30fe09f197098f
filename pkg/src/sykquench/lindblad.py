"""SYK with linear jump operators ``L_i = sqrt(mu) psi_i``.

The vectorized Liouvillian gives Kadanoff-Baym equations for four contour
components ``G^{ab}`` with ``a, b = +/-``.  Two bookkeeping conventions are
supported:

``vectorized``
    ``i d1 G_ab - sum_c int S_ac G_cb = delta_ab delta``, with
    ``S_ab = -i^q J^2 s_ab G_ab^(q-1) + theta theta mu eps_ab delta``.  The
    stored components relate to the physical ones by the multipliers
    ``(1, -i, -i, -1)`` on ``(G^T, G^<, G^>, G^T~)``.
``contour``
    ``i a d1 G_ab - ... `` with dissipator ``i mu s_ab eps_ab delta`` and the
    physical components stored as they are.  This matches the physical
    dynamics only when ``q`` is a multiple of 4.

Either way the ``-+`` equation, truncated at ``t3 = max(t1, t2)``, reduces
to the first Kadanoff-Baym equation for ``G^>`` with a dissipative
self-energy ``Sigma^> = -i mu theta(t1) theta(t2) delta(t1 - t2)``.  Only
``G^>`` is iterated; the other components follow from the Majorana relations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import kb
from .equilibrium import (EquilibriumParams, lay_initial_condition,
                          solve_equilibrium)
from .grid import ContourGreen, DomainError, TimeLattice, theta, wigner_pair
from .observables import fdt_ratio_fit, _check_decay

log = logging.getLogger(__name__)

SIGNS = ("+", "-")
KEYS = ("++", "+-", "-+", "--")
EPSILON = {"++": 0, "+-": 1, "-+": -1, "--": 0}
CONVENTIONS = ("vectorized", "contour")
_MULTIPLIERS = {
    "vectorized": {"++": 1, "+-": -1j, "-+": -1j, "--": -1},
    "contour": {"++": 1, "+-": 1, "-+": 1, "--": 1},
}


def s_sign(key: str, q: int) -> int:
    return 1 if key[0] == key[1] else -((-1) ** (q // 2))


def multipliers(convention: str) -> dict:
    if convention not in _MULTIPLIERS:
        raise DomainError(f"convention must be one of {CONVENTIONS}")
    return _MULTIPLIERS[convention]


@dataclass(frozen=True, eq=False)
class LindbladConfig:
    coupling_j: float
    q_body: int
    mu: float
    beta_init: float
    lattice: TimeLattice
    fp_tol: float = 1e-9
    fp_max_sweeps: int = 2000
    damping: float = 0.5
    method: str = "fixed_point"
    convention: str = "vectorized"

    def __post_init__(self):
        if self.mu < 0:
            raise DomainError("mu must be non-negative")
        if self.q_body < 2 or self.q_body % 2:
            raise DomainError("q_body must be even")
        multipliers(self.convention)
        if self.convention == "contour" and self.q_body % 4:
            raise DomainError(
                "the contour convention reproduces the physical dynamics "
                "only for q divisible by 4")
        if self.method not in ("fixed_point", "causal"):
            raise DomainError("method must be fixed_point or causal")

    def with_beta(self, beta: float) -> "LindbladConfig":
        return replace(self, beta_init=beta)


def physical_components(g_greater: np.ndarray) -> dict:
    """``(G^T, G^<, G^>, G^T~)`` keyed by contour indices, theta(0) = 1/2."""
    n = g_greater.shape[0]
    g_lesser = -g_greater.T
    i, j = np.indices((n, n))
    step = np.where(i > j, 1.0, np.where(i < j, 0.0, 0.5))
    return {
        "++": step * g_greater + (1 - step) * g_lesser,
        "+-": g_lesser,
        "-+": g_greater,
        "--": (1 - step) * g_greater + step * g_lesser,
    }


@dataclass(frozen=True, eq=False)
class LiouvillianGreen:
    """Four contour components in the chosen storage convention."""

    lattice: TimeLattice
    components: dict
    convention: str = "vectorized"

    def __post_init__(self):
        comps = {}
        n = self.lattice.n_points
        for key in KEYS:
            a = np.array(self.components[key], dtype=np.complex128, copy=True)
            if a.shape != (n, n):
                raise DomainError(f"component {key} has shape {a.shape}")
            a.setflags(write=False)
            comps[key] = a
        object.__setattr__(self, "components", comps)
        multipliers(self.convention)

    def __getitem__(self, key):
        return self.components[key]

    @classmethod
    def from_greater(cls, lattice, g_greater, convention="vectorized"):
        m = multipliers(convention)
        phys = physical_components(np.asarray(g_greater))
        return cls(lattice, {k: m[k] * phys[k] for k in KEYS}, convention)

    def greater(self) -> np.ndarray:
        """Physical ``G^>`` recovered from the ``-+`` component."""
        return self.components["-+"] / multipliers(self.convention)["-+"]

    def symmetry_residual(self) -> float:
        """Worst violation of the stored-component Majorana relations."""
        g = self.greater()
        ref = LiouvillianGreen.from_greater(self.lattice, g, self.convention)
        worst = max(float(np.max(np.abs(self[k] - ref[k]))) for k in KEYS)
        return max(worst, float(np.max(np.abs(g + g.T.conj()))))


def map_initial_condition(G_i: ContourGreen,
                          convention: str = "vectorized") -> LiouvillianGreen:
    """Isolated-SYK contour components times the storage multipliers."""
    return LiouvillianGreen.from_greater(G_i.lattice, G_i.g_greater, convention)


def unmap(G_l: LiouvillianGreen) -> ContourGreen:
    """Inverse of ``map_initial_condition``."""
    return ContourGreen(G_l.lattice, G_l.greater())


def _dissipator(key: str, cfg: LindbladConfig) -> complex:
    eps = EPSILON[key]
    if cfg.convention == "vectorized":
        return cfg.mu * eps
    return 1j * cfg.mu * s_sign(key, cfg.q_body) * eps


def lindblad_self_energy(G: LiouvillianGreen, cfg: LindbladConfig, alpha: str,
                         beta: str, t1: float, t2: float) -> complex:
    """One stored self-energy component at one lattice point.

    The delta function is the diagonal cell ``1 / delta_t``.
    """
    key = alpha + beta
    if key not in KEYS:
        raise DomainError(f"bad contour indices {alpha!r}, {beta!r}")
    lat = G.lattice
    i, j = lat.index(t1), lat.index(t2)
    q = cfg.q_body
    val = -(1j ** q) * cfg.coupling_j ** 2 * s_sign(key, q) * G[key][i, j] ** (q - 1)
    if i == j:
        val += theta(t1) * theta(t2) * _dissipator(key, cfg) / lat.delta_t
    return complex(val)


def _derivative_prefactor(cfg: LindbladConfig) -> complex:
    # coefficient of d1 G^{-+} in the stored equation
    return 1j if cfg.convention == "vectorized" else -1j


class LindbladProblem:
    """Right-hand side of the ``-+`` equation as a functional of ``G^>``."""

    def __init__(self, cfg: LindbladConfig):
        self.cfg = cfg
        lat = cfg.lattice
        n = lat.n_points
        self.w = kb.quadrature_weights(lat)
        i, j = np.indices((n, n))
        # t3 <= t1 on the left factor, t3 <= t2 on the right factor
        self.left_mask = (j <= i)
        self.right_mask = (i <= j)
        gate = theta(lat.times)
        self.diss = {k: gate ** 2 * _dissipator(k, cfg) / lat.delta_t
                     for k in KEYS}
        self.mult = multipliers(cfg.convention)
        self.scale = 1.0 / (_derivative_prefactor(cfg) * self.mult["-+"])

    def sigmas(self, comps):
        cfg = self.cfg
        q = cfg.q_body
        pref = -(1j ** q) * cfg.coupling_j ** 2
        out = {}
        for k in ("-+", "--"):
            s = pref * s_sign(k, q) * comps[k] ** (q - 1)
            m = s.shape[0]
            s[np.arange(m), np.arange(m)] += self.diss[k][:m]
            out[k] = s
        return out

    def stored(self, g):
        phys = physical_components(g)
        return {k: self.mult[k] * phys[k] for k in KEYS}

    def derivatives(self, g):
        comps = self.stored(g)
        sig = self.sigmas(comps)
        w = self.w
        lower = np.zeros_like(g)
        upper = np.zeros_like(g)
        for c in SIGNS:
            s = sig["-" + c] * w
            gr = comps[c + "+"]
            lower += (s * self.left_mask) @ gr
            upper += s @ (gr * self.right_mask)
        rhs = np.where(self.left_mask, lower, upper)
        d1 = self.scale * rhs
        return d1, None

    def derivative_row(self, g, n):
        m = n + 1
        comps = self.stored(np.array(g[:m, :m]))
        sig = self.sigmas(comps)
        w = self.w[:m]
        row = np.zeros(m, dtype=np.complex128)
        for c in SIGNS:
            row += (sig["-" + c][n] * w) @ comps[c + "+"]
        return self.scale * row


def initial_condition(cfg: LindbladConfig) -> ContourGreen:
    params = EquilibriumParams.for_lattice(cfg.lattice, cfg.beta_init,
                                           cfg.coupling_j, q_body=cfg.q_body)
    return lay_initial_condition(solve_equilibrium(params), cfg.lattice)


def evolve_lindblad(cfg: LindbladConfig,
                    initial: ContourGreen | None = None) -> LiouvillianGreen:
    """Converged Liouvillian components after dissipation switches on."""
    g0 = initial_condition(cfg) if initial is None else initial
    problem = LindbladProblem(cfg)
    if cfg.method == "fixed_point":
        g, info = kb.fixed_point(problem.derivatives, g0.g_greater, cfg.lattice,
                                 tol=cfg.fp_tol, max_sweeps=cfg.fp_max_sweeps,
                                 damping=cfg.damping)
    else:
        g, info = kb.march(problem.derivative_row, g0.g_greater, cfg.lattice,
                           tol=cfg.fp_tol)
    log.info("lindblad %s finished after %d sweeps", cfg.method, info.sweeps)
    return LiouvillianGreen.from_greater(cfg.lattice, g, cfg.convention)


def effective_beta_liouvillian(G: LiouvillianGreen, t: float, m: int = 4):
    """Wigner-slice temperature read directly off the stored components.

    In the ``vectorized`` storage the ``-+`` and ``+-`` components carry an
    extra factor ``-i``, so the relation uses real parts:
    ``beta = 2 Re G_K / (w Re G_R)``.  For ``contour`` it is the usual
    imaginary-part form.
    """
    lat = G.lattice
    i0 = lat.index(t)
    k_max = min(i0, lat.n_points - 1 - i0)
    k = np.arange(k_max + 1)
    _check_decay(G["-+"][i0 + k, i0 - k])
    sl = wigner_pair(lat, G["-+"], G["+-"], t)
    part = np.real if G.convention == "vectorized" else np.imag
    return fdt_ratio_fit(sl.omega_grid, part(sl.g_keldysh),
                         part(sl.g_retarded), 2.0, m)
