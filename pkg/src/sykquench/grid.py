"""Two-time lattices and contour Green's functions for Majorana fermions.

Only the greater function ``G^>(t1, t2) = -i <chi(t1) chi(t2)>`` is stored.
Every other real-time component follows from the Majorana relation
``G^<(t1, t2) = -G^>(t2, t1)``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

SNAPSHOT_MAGIC = b"KBSYK1"
_HEADER = struct.Struct("<6sddq")


class DomainError(ValueError):
    """Coordinates or grids that do not fit the lattice."""


class InsufficientWindowError(DomainError):
    """A transform was requested too close to the lattice boundary."""


def theta(x):
    """Heaviside step with theta(0) = 1/2."""
    return np.heaviside(x, 0.5)


@dataclass(frozen=True)
class TimeLattice:
    """Uniform grid ``t_k = -lambda_t + k * delta_t`` with ``k < n_points``."""

    delta_t: float
    lambda_t: float
    n_points: int = field(init=False)

    def __post_init__(self):
        if not (self.delta_t > 0 and self.lambda_t > 0):
            raise DomainError("delta_t and lambda_t must be positive")
        ratio = 2.0 * self.lambda_t / self.delta_t
        n = int(round(ratio))
        if abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise DomainError(
                f"2*lambda_t/delta_t = {ratio} is not an integer")
        if n < 4 or n % 2:
            raise DomainError(f"n_points must be even and >= 4, got {n}")
        object.__setattr__(self, "n_points", n)

    @classmethod
    def from_points(cls, n_points: int, delta_t: float) -> "TimeLattice":
        return cls(delta_t=delta_t, lambda_t=0.5 * n_points * delta_t)

    @property
    def times(self) -> np.ndarray:
        return -self.lambda_t + self.delta_t * np.arange(self.n_points)

    @property
    def zero_index(self) -> int:
        return self.n_points // 2

    def index(self, t: float) -> int:
        """Lattice index of time ``t``; raises if ``t`` is off-lattice."""
        x = (t + self.lambda_t) / self.delta_t
        k = int(round(x))
        if abs(x - k) > 1e-6 or not 0 <= k < self.n_points:
            raise DomainError(f"t={t} is not a point of {self}")
        return k

    def refined(self, factor: int = 2) -> "TimeLattice":
        """Same window with ``factor`` times more points per axis."""
        return TimeLattice(self.delta_t / factor, self.lambda_t)

    def compatible(self, other: "TimeLattice") -> bool:
        return (self.n_points == other.n_points
                and np.isclose(self.delta_t, other.delta_t, rtol=1e-12, atol=0))


@dataclass(frozen=True, eq=False)
class ContourGreen:
    """Greater Green's function on a two-time lattice.

    The array is copied and made read-only on construction.
    """

    lattice: TimeLattice
    g_greater: np.ndarray

    def __post_init__(self):
        g = np.array(self.g_greater, dtype=np.complex128, copy=True)
        n = self.lattice.n_points
        if g.shape != (n, n):
            raise DomainError(f"expected a ({n}, {n}) grid, got {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "g_greater", g)

    @property
    def g_lesser(self) -> np.ndarray:
        return -self.g_greater.T

    def antisymmetry_residual(self) -> float:
        g = self.g_greater
        return float(np.max(np.abs(g + g.T.conj())))

    def diagonal_residual(self) -> float:
        return float(np.max(np.abs(np.diag(self.g_greater) + 0.5j)))

    def with_values(self, g: np.ndarray) -> "ContourGreen":
        return ContourGreen(self.lattice, g)

    def __add__(self, other):
        if not isinstance(other, ContourGreen):
            return NotImplemented
        _check_same_lattice(self, other)
        return self.with_values(self.g_greater + other.g_greater)

    def __mul__(self, scalar):
        if isinstance(scalar, ContourGreen):
            return NotImplemented
        return self.with_values(scalar * self.g_greater)

    __rmul__ = __mul__

    @classmethod
    def free(cls, lattice: TimeLattice) -> "ContourGreen":
        """Decoupled Majorana: ``G^> = -i/2`` at all time pairs."""
        n = lattice.n_points
        return cls(lattice, np.full((n, n), -0.5j))

    @classmethod
    def from_relative(cls, lattice: TimeLattice, func) -> "ContourGreen":
        """Time-translation-invariant grid ``G^>(t1, t2) = func(t1 - t2)``."""
        t = lattice.times
        return cls(lattice, func(t[:, None] - t[None, :]))


def _check_same_lattice(a: ContourGreen, b: ContourGreen):
    if not a.lattice.compatible(b.lattice):
        raise DomainError("Green's functions live on different lattices")


class Components(NamedTuple):
    greater: complex
    lesser: complex
    retarded: complex
    advanced: complex
    keldysh: complex


def derive_components(G: ContourGreen, t1: float, t2: float) -> Components:
    """All real-time components at one lattice point."""
    i, j = G.lattice.index(t1), G.lattice.index(t2)
    gt = complex(G.g_greater[i, j])
    lt = complex(-G.g_greater[j, i])
    step = float(theta(t1 - t2)) if i != j else 0.5
    return Components(
        greater=gt,
        lesser=lt,
        retarded=step * (gt - lt),
        advanced=(1.0 - step) * (lt - gt),
        keldysh=gt + lt,
    )


def symmetrize(G: ContourGreen) -> ContourGreen:
    g = G.g_greater
    return G.with_values(0.5 * (g - g.T.conj()))


@dataclass(frozen=True, eq=False)
class KeldyshSlice:
    """Retarded and Keldysh components at one center time, versus frequency."""

    omega_grid: np.ndarray
    g_retarded: np.ndarray
    g_keldysh: np.ndarray
    center_time: float


def _padded_transform(values, weights, offsets, step, pad):
    """Trapezoidal ``sum_k w_k f_k exp(i w s_k)`` on a zero-padded DFT grid.

    ``offsets`` are integer sample positions ``s_k = offsets[k] * step``; the
    returned grid is symmetric about zero (the unpaired Nyquist bin is dropped).
    """
    n = pad * len(values)
    buf = np.zeros(n, dtype=np.complex128)
    np.add.at(buf, np.mod(offsets, n), weights * values)
    spec = np.fft.fftshift(n * np.fft.ifft(buf))
    omega = np.fft.fftshift(np.fft.fftfreq(n, d=step)) * 2.0 * np.pi
    if n % 2 == 0:
        spec, omega = spec[1:], omega[1:]
    return omega, spec


def wigner_slice(G: ContourGreen, t: float, window: float | None = None,
                 pad: int = 4) -> KeldyshSlice:
    """Half-line Wigner transform ``int_0^tmax ds e^{iws} G(t + s/2, t - s/2)``.

    Relative times ``s`` are even multiples of the lattice step so both
    arguments stay on the lattice.  ``window`` caps ``tmax``; by default the
    slice runs to the nearest lattice edge.
    """
    return wigner_pair(G.lattice, G.g_greater, G.g_lesser, t, window, pad)


def wigner_pair(lat: TimeLattice, greater, lesser, t: float,
                window: float | None = None, pad: int = 4) -> KeldyshSlice:
    """``wigner_slice`` for an explicit (greater, lesser) pair of grids.

    The returned ``g_retarded`` is the transform of ``greater - lesser`` and
    ``g_keldysh`` that of ``greater + lesser``.
    """
    i0 = lat.index(t)
    k_max = min(i0, lat.n_points - 1 - i0)
    if window is not None:
        k_max = min(k_max, int(round(window / (2 * lat.delta_t))))
    if k_max < 2:
        raise InsufficientWindowError(
            f"t={t} leaves no room for a Wigner slice")
    k = np.arange(k_max + 1)
    gt = greater[i0 + k, i0 - k]
    lt = lesser[i0 + k, i0 - k]
    ds = 2.0 * lat.delta_t
    w = np.full(k.size, ds)
    w[0] = w[-1] = 0.5 * ds
    omega, gr = _padded_transform(gt - lt, w, k, ds, pad)
    _, gk = _padded_transform(gt + lt, w, k, ds, pad)
    return KeldyshSlice(omega, gr, gk, float(t))


def corner_slice(G: ContourGreen, t: float, window: float | None = None,
                 pad: int = 4) -> KeldyshSlice:
    """Full-line transform of the corner slice.

    ``G_c(t, s) = theta(s) G(t - s, t) + theta(-s) G(t, t + s)`` only touches
    times up to ``t``, so the window is bounded by the distance to the early
    edge of the lattice.
    """
    lat = G.lattice
    i0 = lat.index(t)
    k_max = i0
    if window is not None:
        k_max = min(k_max, int(round(window / lat.delta_t)))
    if k_max < 2:
        raise InsufficientWindowError(
            f"t={t} leaves no room for a corner slice")
    j = np.arange(-k_max, k_max + 1)
    g = G.g_greater
    first = np.where(j > 0, i0 - j, i0)
    second = np.where(j > 0, i0, i0 + j)
    gt = g[first, second]
    lt = -g[second, first]
    step = theta(-j.astype(float))
    dt = lat.delta_t
    w = np.full(j.size, dt)
    w[0] = w[-1] = 0.5 * dt
    omega, gr = _padded_transform(step * (gt - lt), w, j, dt, pad)
    _, gk = _padded_transform(gt + lt, w, j, dt, pad)
    return KeldyshSlice(omega, gr, gk, float(t))


def write_snapshot(path, G: ContourGreen) -> None:
    """Binary layout: header then row-major little-endian (re, im) pairs."""
    lat = G.lattice
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, lat.delta_t, lat.lambda_t,
                              lat.n_points))
        fh.write(np.ascontiguousarray(G.g_greater, dtype="<c16").tobytes())


def read_snapshot(path) -> ContourGreen:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DomainError(f"{path}: truncated snapshot header")
    magic, dt, lam, n = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise DomainError(f"{path}: bad magic {magic!r}")
    lattice = TimeLattice(dt, lam)
    if lattice.n_points != n:
        raise DomainError(f"{path}: header n_points {n} disagrees with window")
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if body.size != n * n:
        raise DomainError(f"{path}: expected {n * n} values, got {body.size}")
    return ContourGreen(lattice, body.reshape(n, n))


def write_csv(path, G: ContourGreen) -> None:
    t = G.lattice.times
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t1", "t2", "re", "im"])
        for i, t1 in enumerate(t):
            for j, t2 in enumerate(t):
                z = G.g_greater[i, j]
                out.writerow([f"{t1:.17g}", f"{t2:.17g}",
                              f"{z.real:.17g}", f"{z.imag:.17g}"])
