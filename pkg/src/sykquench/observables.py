"""Effective temperatures, energy, Mpemba crossings and coupling thresholds."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import (ContourGreen, DomainError, InsufficientWindowError,
                   corner_slice, wigner_slice)

log = logging.getLogger(__name__)

# Relative fit residual above which the low-frequency polynomial fit is
# abandoned for a weighted tanh fit.
FIT_FALLBACK = 0.05
# A slice whose tail is still this fraction of its peak has not decayed.
DECAY_LIMIT = 0.5
# Samples are trusted only once the slice tail is below this fraction.
TAIL_RELIABLE = 0.01
NOISE_FLOOR = 1e-10


class UndefinedTemperatureError(ArithmeticError):
    """No effective temperature can be read off this slice."""


class BracketError(ValueError):
    """Both ends of a scan interval show the same crossing status."""


class ConventionError(ArithmeticError):
    """A quantity that must be real came out with an imaginary part."""


def _check_decay(values):
    mag = np.abs(values)
    peak = mag.max()
    if peak < NOISE_FLOOR or mag[-1] > DECAY_LIMIT * peak:
        raise UndefinedTemperatureError(
            "correlator has not decayed inside the window")
    return float(mag[-1] / peak)


def wigner_tail(G: ContourGreen, t: float) -> float:
    """``|G|`` at the far end of the Wigner slice relative to its peak."""
    lat = G.lattice
    i0 = lat.index(t)
    k = np.arange(min(i0, lat.n_points - 1 - i0) + 1)
    mag = np.abs(G.g_greater[i0 + k, i0 - k])
    return float(mag[-1] / mag.max()) if mag.max() > 0 else 1.0


def fdt_ratio_fit(omega, im_k, im_r, scale, m=4):
    """Extrapolate ``scale * Im G_K / (w Im G_R)`` to w = 0.

    The ratio is even in w, so it is fitted by ``a + b w^2`` on the ``m``
    smallest positive frequencies; ``a`` is the estimate and the quality is
    the rms fit residual relative to ``max(|a|, 1)``.  If that exceeds
    ``FIT_FALLBACK`` a weighted fit of ``Im G_K / Im G_R`` against
    ``(scale / 2) tanh(beta w / 2)`` is used instead.
    """
    pos = np.flatnonzero(omega > 0)[:m]
    if pos.size < 2:
        raise UndefinedTemperatureError("too few positive frequencies")
    w, k, r = omega[pos], im_k[pos], im_r[pos]
    if np.all(np.abs(r) < NOISE_FLOOR):
        raise UndefinedTemperatureError("Im G_R vanishes at small frequency")
    ratio = scale * k / (w * r)
    design = np.column_stack([np.ones_like(w), w ** 2])
    coef, *_ = np.linalg.lstsq(design, ratio, rcond=None)
    resid = ratio - design @ coef
    quality = float(np.sqrt(np.mean(resid ** 2)) / max(abs(coef[0]), 1.0))
    if quality <= FIT_FALLBACK:
        return float(coef[0]), quality
    return _tanh_fit(omega, im_k, im_r, scale, w_fit=4 * w[-1])


def _tanh_fit(omega, im_k, im_r, scale, w_fit):
    sel = (np.abs(omega) < w_fit) & (np.abs(im_r) > NOISE_FLOOR)
    w, ratio = omega[sel], im_k[sel] / im_r[sel]
    weight = np.abs(im_r[sel])

    def cost(beta):
        return np.sum(weight * (ratio - 0.5 * scale * np.tanh(0.5 * beta * w)) ** 2)

    res = minimize_scalar(cost, bounds=(-50.0, 50.0), method="bounded")
    norm = np.sqrt(cost(res.x) / np.sum(weight))
    return float(res.x), float(norm)


def effective_beta_fdt(G: ContourGreen, t: float, m: int = 4,
                       window: float | None = None):
    """``beta(t)`` from the half-line Wigner slice, with its fit quality."""
    lat = G.lattice
    i0 = lat.index(t)
    k_max = min(i0, lat.n_points - 1 - i0)
    k = np.arange(k_max + 1)
    _check_decay(G.g_greater[i0 + k, i0 - k])
    sl = wigner_slice(G, t, window=window)
    return fdt_ratio_fit(sl.omega_grid, sl.g_keldysh.imag,
                         sl.g_retarded.imag, 2.0, m)


def effective_beta_corner(G: ContourGreen, t: float, m: int = 4,
                          window: float | None = None):
    """``beta'(t)`` from the causal corner slice.

    The full-line transform obeys ``Im G_K / Im G_R = -2 tanh(beta w / 2)``
    in equilibrium, so ``beta' = -Im G_K / (w Im G_R)`` at small ``w``.
    """
    i0 = G.lattice.index(t)
    _check_decay(G.g_greater[i0, : i0 + 1][::-1])
    sl = corner_slice(G, t, window=window)
    return fdt_ratio_fit(sl.omega_grid, sl.g_keldysh.imag,
                         sl.g_retarded.imag, -1.0, m)


def total_energy(G: ContourGreen, J: float, t: float) -> float:
    """``(i J^2 / 4) int_{-lambda_t}^{t} (G^>(t,t')^4 - G^<(t,t')^4) dt'``."""
    lat = G.lattice
    i = lat.index(t)
    if i == 0 or J == 0:
        return 0.0
    g = G.g_greater
    gt = g[i, : i + 1]
    lt = -g[: i + 1, i]
    val = 0.25j * J ** 2 * np.trapezoid(gt ** 4 - lt ** 4, dx=lat.delta_t)
    if abs(val.imag) > 1e-8:
        raise ConventionError(f"energy has imaginary part {val.imag:.3g}")
    return float(val.real)


@dataclass
class BetaTrace:
    times: np.ndarray
    beta_fdt: np.ndarray
    beta_corner: np.ndarray
    energy: np.ndarray
    fit_quality: np.ndarray
    reliable: np.ndarray = field(default=None)

    def __post_init__(self):
        arrays = ["times", "beta_fdt", "beta_corner", "energy", "fit_quality"]
        for name in arrays:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.reliable is None:
            self.reliable = np.isfinite(self.beta_fdt)
        self.reliable = np.asarray(self.reliable, dtype=bool)
        n = self.times.size
        if any(getattr(self, a).size != n for a in arrays[1:] + ["reliable"]):
            raise DomainError("trace arrays must have equal length")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "beta_fdt", "beta_corner", "energy",
                          "fit_quality", "reliable"])
            for row in zip(self.times, self.beta_fdt, self.beta_corner,
                           self.energy, self.fit_quality, self.reliable):
                out.writerow([f"{x:.17g}" for x in row[:5]] + [int(row[5])])

    @classmethod
    def read_csv(cls, path) -> "BetaTrace":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return cls(data["t"], data["beta_fdt"], data["beta_corner"],
                   data["energy"], data["fit_quality"],
                   data["reliable"].astype(bool))


def compute_trace(G: ContourGreen, J: float, stride: int = 5,
                  t_min: float = 0.0, m: int = 4) -> BetaTrace:
    """Sample both temperatures and the energy at ``t >= t_min``.

    Samples within ``lambda_t / 5`` of the late edge, whose Wigner slice
    has not decayed below ``TAIL_RELIABLE``, or whose temperature could not
    be extracted, are flagged unreliable.
    """
    lat = G.lattice
    idx = np.arange(lat.index(_snap(lat, t_min)), lat.n_points, stride)
    times = lat.times[idx]
    n = idx.size
    bf, bc, en, fq = (np.full(n, np.nan) for _ in range(4))
    tail = np.ones(n)
    for k, t in enumerate(times):
        tail[k] = wigner_tail(G, t)
        try:
            bf[k], fq[k] = effective_beta_fdt(G, t, m)
        except (UndefinedTemperatureError, InsufficientWindowError):
            pass
        try:
            bc[k], _ = effective_beta_corner(G, t, m)
        except (UndefinedTemperatureError, InsufficientWindowError):
            pass
        en[k] = total_energy(G, J, t)
    reliable = (np.isfinite(bf) & (tail < TAIL_RELIABLE)
                & (times < lat.lambda_t * 0.8 - 1e-9))
    fq = np.where(np.isfinite(fq), fq, 0.0)
    return BetaTrace(times, bf, bc, en, fq, reliable)


def _snap(lat, t):
    k = int(np.ceil((t + lat.lambda_t) / lat.delta_t - 1e-9))
    return lat.times[min(max(k, 0), lat.n_points - 1)]


@dataclass
class CrossingReport:
    crossing_times: np.ndarray
    parity: int
    min_separation: float

    @property
    def count(self) -> int:
        return int(len(self.crossing_times))

    def to_json(self) -> dict:
        return {"crossings": [float(x) for x in self.crossing_times],
                "parity": int(self.parity),
                "min_separation": (float(self.min_separation)
                                   if np.isfinite(self.min_separation)
                                   else None)}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def default_deadband(a: BetaTrace, b: BetaTrace) -> float:
    q = np.concatenate([a.fit_quality[a.reliable], b.fit_quality[b.reliable]])
    return 3.0 * float(np.median(q)) if q.size else 0.0


def detect_crossings(a: BetaTrace, b: BetaTrace, window=None,
                     deadband: float | None = None) -> CrossingReport:
    """Sign changes of ``a.beta_fdt - b.beta_fdt`` outside a deadband.

    A crossing needs a sample with ``|d| > deadband`` on each side; its time
    is the linearly interpolated zero of ``d`` between those flanks.
    """
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise DomainError("traces are sampled on different time grids")
    if deadband is None:
        deadband = default_deadband(a, b)
    if deadband < 0:
        raise DomainError("deadband must be non-negative")
    t = a.times
    d = a.beta_fdt - b.beta_fdt
    ok = a.reliable & b.reliable & np.isfinite(d) & (t > 0)
    if window is not None:
        lo, hi = window
        ok &= (t >= lo) & (t <= hi)
    t, d = t[ok], d[ok]
    if t.size == 0:
        return CrossingReport(np.array([]), 0, float("nan"))
    crossings = []
    last = None
    for k in range(t.size):
        if abs(d[k]) <= deadband:
            continue
        if last is not None and np.sign(d[k]) != np.sign(d[last]):
            crossings.append(_zero_between(t, d, last, k))
        last = k
    times = np.array(crossings)
    return CrossingReport(times, len(crossings) % 2, float(np.min(np.abs(d))))


def _zero_between(t, d, lo, hi):
    for k in range(lo, hi):
        if d[k] == 0:
            return float(t[k])
        if np.sign(d[k]) != np.sign(d[k + 1]) and d[k + 1] != 0:
            return float(t[k] - d[k] * (t[k + 1] - t[k]) / (d[k + 1] - d[k]))
    return float(t[hi])


def threshold_scan(base_cfg, beta_pair, v_range, bisect_tol: float = 0.01,
                   evolve=None, stride: int = 5, window=None,
                   deadband: float | None = None) -> float:
    """Bisect on the bath coupling for the onset of Mpemba crossings.

    Every bath coupling is scaled together, keeping their ratios.  Returns
    the midpoint of the final bracket.
    """
    from .quench import evolve_quench

    evolve = evolve or evolve_quench
    ref = np.array([b.coupling_v for b in base_cfg.baths], dtype=float)
    if np.all(ref == 0):
        ref = np.ones_like(ref)
    ref = ref / ref.max()
    cache = {}

    def crosses(v):
        if v not in cache:
            cfg = base_cfg.with_couplings(*(v * ref))
            traces = [compute_trace(evolve(cfg.with_beta(bi)),
                                    cfg.coupling_j, stride)
                      for bi in beta_pair]
            rep = detect_crossings(*traces, window=window, deadband=deadband)
            cache[v] = rep.count > 0
            log.info("V=%.5g: %d crossings", v, rep.count)
        return cache[v]

    lo, hi = map(float, v_range)
    c_lo, c_hi = crosses(lo), crosses(hi)
    if c_lo == c_hi:
        raise BracketError(
            f"crossings {'present' if c_lo else 'absent'} at both V={lo} "
            f"and V={hi}")
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if crosses(mid) == c_hi:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
