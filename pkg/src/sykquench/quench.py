"""SYK system quenched into contact with one or two equilibrium SYK baths."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import kb
from .equilibrium import (EquilibriumParams, lay_initial_condition,
                          solve_equilibrium)
from .grid import ContourGreen, DomainError, TimeLattice, theta

log = logging.getLogger(__name__)

METHODS = ("fixed_point", "causal")


@dataclass(frozen=True, eq=False)
class BathSpec:
    beta_bath: float
    coupling_v: float
    n_bath: int
    bath_green: ContourGreen

    def __post_init__(self):
        if self.coupling_v < 0:
            raise DomainError("coupling_v must be non-negative")
        if self.n_bath not in (1, 3):
            raise DomainError("n_bath must be 1 or 3")

    @classmethod
    def thermal(cls, lattice: TimeLattice, beta_bath: float, coupling_v: float,
                n_bath: int = 3, coupling_j: float = 0.5, **eq_kw) -> "BathSpec":
        """Bath in equilibrium at ``beta_bath``, laid onto ``lattice``."""
        green = _bath_green(lattice, float(beta_bath), float(coupling_j),
                            tuple(sorted(eq_kw.items())))
        return cls(beta_bath, coupling_v, n_bath, green)

    def with_coupling(self, coupling_v: float) -> "BathSpec":
        return replace(self, coupling_v=coupling_v)


@lru_cache(maxsize=16)
def _bath_green(lattice, beta, coupling_j, eq_items):
    params = EquilibriumParams.for_lattice(lattice, beta, coupling_j,
                                           **dict(eq_items))
    return lay_initial_condition(solve_equilibrium(params), lattice)


@dataclass(frozen=True, eq=False)
class QuenchConfig:
    system: EquilibriumParams
    baths: tuple
    lattice: TimeLattice
    fp_tol: float = 1e-9
    fp_max_sweeps: int = 2000
    damping: float = 0.5
    method: str = "fixed_point"

    def __post_init__(self):
        baths = tuple(self.baths)
        object.__setattr__(self, "baths", baths)
        if len(baths) not in (1, 2):
            raise DomainError("a quench needs one or two baths")
        for b in baths:
            if not b.bath_green.lattice.compatible(self.lattice):
                raise DomainError("bath lattice differs from system lattice")
        if self.system.q_body != 4:
            raise DomainError("system dynamics are implemented for q = 4")
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}")
        if not 0 < self.damping <= 1:
            raise DomainError("damping must lie in (0, 1]")

    @property
    def coupling_j(self) -> float:
        return self.system.coupling_j

    def with_beta(self, beta: float) -> "QuenchConfig":
        return replace(self, system=replace(self.system, beta=beta))

    def with_couplings(self, *couplings) -> "QuenchConfig":
        baths = tuple(b.with_coupling(v) for b, v in zip(self.baths, couplings))
        return replace(self, baths=baths)


def bath_sign(n_bath: int) -> int:
    return (-1) ** ((n_bath + 1) // 2)


def bath_self_energy(cfg: QuenchConfig) -> np.ndarray:
    """``-V^2 (-1)^((n+1)/2) theta(t1) theta(t2) (G_psi^>)^n`` summed over baths."""
    t = cfg.lattice.times
    gate = theta(t)[:, None] * theta(t)[None, :]
    out = np.zeros((cfg.lattice.n_points,) * 2, dtype=np.complex128)
    for b in cfg.baths:
        out -= (b.coupling_v ** 2 * bath_sign(b.n_bath)
                * b.bath_green.g_greater ** b.n_bath)
    return gate * out


def assemble_self_energy(G_chi: ContourGreen, cfg: QuenchConfig,
                         t1: float, t2: float):
    """Pointwise ``(Sigma^>, Sigma^<)`` at one lattice point."""
    lat = G_chi.lattice
    i, j = lat.index(t1), lat.index(t2)
    J2 = cfg.coupling_j ** 2
    g = G_chi.g_greater
    gate = float(theta(t1) * theta(t2))
    sg = -J2 * g[i, j] ** 3
    sl = -J2 * (-g[j, i]) ** 3
    for b in cfg.baths:
        gb = b.bath_green.g_greater
        pref = -b.coupling_v ** 2 * bath_sign(b.n_bath) * gate
        sg += pref * gb[i, j] ** b.n_bath
        sl += pref * (-gb[j, i]) ** b.n_bath
    return complex(sg), complex(sl)


class QuenchProblem:
    """Right-hand sides of both KB equations for the bath-coupled system."""

    def __init__(self, cfg: QuenchConfig):
        self.cfg = cfg
        self.lattice = cfg.lattice
        self.w = kb.quadrature_weights(cfg.lattice)
        self.step = kb.step_matrix(cfg.lattice)
        self.bath = bath_self_energy(cfg)
        self.j2 = cfg.coupling_j ** 2

    def sigma_greater(self, g):
        return -self.j2 * g ** 3 + self.bath

    def derivatives(self, g):
        w, T = self.w, self.step
        sg = self.sigma_greater(g)
        sl = -sg.T
        gl = -g.T
        s_ret = T * (sg - sl)
        s_adv = T.T * (sl - sg)
        g_ret = T * (g - gl)
        g_adv = T.T * (gl - g)
        rhs1 = (s_ret * w) @ g + (sg * w) @ g_adv
        rhs2 = (g_ret * w) @ sg + (g * w) @ s_adv
        return -1j * rhs1, 1j * rhs2

    def derivative_row(self, g, n):
        m = n + 1
        w = self.w[:m]
        T = self.step
        gs = g[:m, :m]
        sg_row = -self.j2 * gs[n] ** 3 + self.bath[n, :m]
        sg_col = -self.j2 * gs[:, n] ** 3 + self.bath[:m, n]
        s_ret = T[n, :m] * (sg_row + sg_col)
        g_adv = T[:m, :m].T * (-gs.T - gs)
        return -1j * ((s_ret * w) @ gs + (sg_row * w) @ g_adv)


def kb_residual(G_chi: ContourGreen, cfg: QuenchConfig) -> np.ndarray:
    """Pointwise defect of both KB equations.

    Derivatives use second-order central differences (one-sided at the
    window edges); the memory integrals use the lattice trapezoid rule.
    Cells with ``t1, t2 <= 0`` are initial data and report zero.
    """
    d1, d2 = QuenchProblem(cfg).derivatives(G_chi.g_greater)
    return kb.finite_difference_defect(G_chi.g_greater, d1, d2, cfg.lattice)


def initial_condition(cfg: QuenchConfig) -> ContourGreen:
    params = cfg.system
    if not np.isclose(params.dt, cfg.lattice.delta_t, rtol=1e-9):
        params = EquilibriumParams.for_lattice(
            cfg.lattice, params.beta, params.coupling_j, q_body=params.q_body,
            mixing=params.mixing, tol=params.tol, max_iters=params.max_iters)
    return lay_initial_condition(solve_equilibrium(params), cfg.lattice)


@dataclass(frozen=True, eq=False)
class QuenchResult:
    green: ContourGreen
    info: kb.SolveInfo = field(repr=False)


def evolve_quench(cfg: QuenchConfig, initial: ContourGreen | None = None,
                  method: str | None = None) -> ContourGreen:
    """Converged ``G^>`` of the system after the bath coupling is switched on."""
    return evolve_quench_full(cfg, initial, method).green


def evolve_quench_full(cfg: QuenchConfig, initial: ContourGreen | None = None,
                       method: str | None = None) -> QuenchResult:
    method = method or cfg.method
    g0 = initial_condition(cfg) if initial is None else initial
    problem = QuenchProblem(cfg)
    if method == "fixed_point":
        g, info = kb.fixed_point(problem.derivatives, g0.g_greater, cfg.lattice,
                                 tol=cfg.fp_tol, max_sweeps=cfg.fp_max_sweeps,
                                 damping=cfg.damping)
    elif method == "causal":
        g, info = kb.march(problem.derivative_row, g0.g_greater, cfg.lattice,
                           tol=cfg.fp_tol)
    else:
        raise DomainError(f"unknown method {method!r}")
    log.info("quench %s finished after %d sweeps", method, info.sweeps)
    return QuenchResult(ContourGreen(cfg.lattice, g), info)
