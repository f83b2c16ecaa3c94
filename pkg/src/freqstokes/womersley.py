"""Analytical references for oscillatory pipe and channel flow.

Conventions: time dependence ``exp(j omega t)``, a constant axial traction
``h`` drives the flow over a length ``L`` (pressure gradient ``-h/L``), and
``J0``/``J1`` take complex arguments along ``j**1.5 * alpha`` with the
principal branch ``j**1.5 = exp(3j pi/4)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

#: series/asymptotic switch-over radius
SERIES_RADIUS = 20.0
MAX_ARGUMENT = 64.0

J32 = np.exp(0.75j * np.pi)
J12 = np.exp(0.25j * np.pi)


# ---------------------------------------------------------------------------
# double-double helpers (error-free transformations) for the power series

_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_add(x, y):
    s, e = _two_sum(x[0], y[0])
    return _quick_two_sum(s, e + x[1] + y[1])


def _dd_neg(x):
    return -x[0], -x[1]


def _dd_mul(x, y):
    p, e = _two_prod(x[0], y[0])
    return _quick_two_sum(p, e + x[0] * y[1] + x[1] * y[0])


def _dd_div(x, d):
    q1 = x[0] / d
    p, e = _two_prod(q1, d)
    q2 = ((x[0] - p) - e + x[1]) / d
    return _quick_two_sum(q1, q2)


def _cdd_mul(a, b):
    # complex double-double: a = (re, im), each a (hi, lo) pair
    re = _dd_add(_dd_mul(a[0], b[0]), _dd_neg(_dd_mul(a[1], b[1])))
    im = _dd_add(_dd_mul(a[0], b[1]), _dd_mul(a[1], b[0]))
    return re, im


def _series(order: int, z: np.ndarray) -> np.ndarray:
    """J_order(z) by its power series, accumulated in double-double."""
    zero = np.zeros_like(z.real)
    half = ((z.real / 2, zero), (z.imag / 2, zero))  # halving is exact
    w = _cdd_mul(half, half)
    w = (_dd_neg(w[0]), _dd_neg(w[1]))  # -(z/2)^2
    term = half if order == 1 else ((np.ones_like(zero), zero), (zero.copy(), zero))
    total = term
    k = 0
    while True:
        k += 1
        t = _cdd_mul(term, w)
        den = float(k * (k + order))
        term = (_dd_div(t[0], den), _dd_div(t[1], den))
        total = (_dd_add(total[0], term[0]), _dd_add(total[1], term[1]))
        size = np.abs(term[0][0]) + np.abs(term[1][0])
        ref = np.abs(total[0][0]) + np.abs(total[1][0])
        if k > 4 and np.all(size <= 1e-34 * np.maximum(ref, 1e-300)) or k > 400:
            break
    return (total[0][0] + total[0][1]) + 1j * (total[1][0] + total[1][1])


def _asymptotic(order: int, z: np.ndarray) -> np.ndarray:
    """Hankel large-argument expansion, valid for Re z > 0."""
    mu = 4.0 * order * order
    P = np.ones_like(z)
    Q = np.zeros_like(z)
    term = np.ones_like(z)  # a_k(order) / z^k, built incrementally
    last = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 200):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        mag = np.abs(term)
        active &= mag < last  # stop before the series starts to diverge
        last = np.where(active, mag, last)
        if not active.any():
            break
        # P collects even k with sign (-1)^(k/2), Q odd k with sign (-1)^((k-1)/2)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            P = P + np.where(active, sign * term, 0)
        else:
            Q = Q + np.where(active, sign * term, 0)
        if np.all(~active | (mag < 1e-17 * np.abs(P))):
            break
    chi = z - (order / 2.0 + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * z)) * (P * np.cos(chi) - Q * np.sin(chi))


def bessel_j(order: int, z):
    """Bessel function of the first kind, order 0 or 1, for complex ``|z| <= 64``."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    zz = np.asarray(z, dtype=complex)
    scalar = zz.ndim == 0
    zz = np.atleast_1d(zz)
    if np.any(np.abs(zz) > MAX_ARGUMENT):
        raise ValueError(f"|z| beyond the validated range {MAX_ARGUMENT}")
    # J_n(-z) = (-1)^n J_n(z): fold onto Re z >= 0
    flip = zz.real < 0
    w = np.where(flip, -zz, zz)
    out = np.empty_like(w)
    small = np.abs(w) <= SERIES_RADIUS
    if small.any():
        out[small] = _series(order, w[small])
    if (~small).any():
        out[~small] = _asymptotic(order, w[~small])
    if order == 1:
        out = np.where(flip, -out, out)
    return complex(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# pipe


@dataclass(frozen=True)
class WomersleyReference:
    axis: ClassVar[int] = 2

    alpha: float
    radius: float = 1.0
    length: float = 15.0
    mu: float = 1.0
    rho: float = 1.0
    h: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @classmethod
    def from_omega(cls, omega, radius=1.0, length=15.0, mu=1.0, rho=1.0, h=1.0):
        return cls(radius * math.sqrt(rho * omega / mu), radius, length, mu, rho, h)

    @property
    def omega(self) -> float:
        return self.alpha**2 * self.mu / (self.rho * self.radius**2)

    @property
    def steady_centerline(self) -> float:
        return self.h * self.radius**2 / (4 * self.mu * self.length)

    @property
    def steady_flow_rate(self) -> float:
        return self.h * math.pi * self.radius**4 / (8 * self.mu * self.length)

    def velocity_at(self, coords) -> np.ndarray:
        """Complex axial (z) velocity at points of a z-aligned pipe centred on the axis."""
        coords = np.asarray(coords, dtype=float)
        r = np.hypot(coords[:, 0], coords[:, 1])
        return pipe_velocity(self, np.minimum(r, self.radius * (1 + 1e-12)))


def pipe_velocity(ref: WomersleyReference, r):
    """Complex axial velocity at radius ``r`` (scalar or array)."""
    r = np.asarray(r, dtype=float)
    R = ref.radius
    if np.any(r < 0) or np.any(r > R * (1 + 1e-12)):
        raise ValueError(f"radius outside [0, {R}]")
    r = np.minimum(r, R)
    if ref.alpha == 0:
        u = ref.h / (4 * ref.mu * ref.length) * (R**2 - r**2) + 0j
    else:
        k = J32 * ref.alpha
        ratio = bessel_j(0, k * np.atleast_1d(r) / R) / bessel_j(0, k)
        u = -1j * ref.h * R**2 / (ref.length * ref.mu * ref.alpha**2) * (1 - ratio)
        u = u.reshape(r.shape)
    return complex(u) if np.ndim(u) == 0 else u


def pipe_flow_rate(ref: WomersleyReference) -> complex:
    R = ref.radius
    if ref.alpha == 0:
        return complex(ref.steady_flow_rate)
    a = ref.alpha
    k = J32 * a
    bracket = 1 + 2 * J12 * bessel_j(1, k) / (a * bessel_j(0, k))
    return complex(-1j * math.pi * ref.h * R**4 / (ref.length * ref.mu * a**2) * bracket)


def womersley_table(alpha: float, n_points: int = 51) -> list[tuple[float, float, float]]:
    """Rows of (r/R, u_r*, u_i*) normalized by the steady centreline velocity."""
    ref = WomersleyReference(alpha)
    rr = np.linspace(0.0, 1.0, n_points)
    u = np.atleast_1d(pipe_velocity(ref, rr * ref.radius)) / ref.steady_centerline
    return [(float(a), float(b.real), float(b.imag)) for a, b in zip(rr, u)]


def write_womersley_table(alpha: float, path, n_points: int = 51) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r_over_R", "u_r_star", "u_i_star"])
        for row in womersley_table(alpha, n_points):
            w.writerow([f"{v:.17g}" for v in row])


# ---------------------------------------------------------------------------
# plane channel


@dataclass(frozen=True)
class ChannelReference:
    """Oscillatory flow between walls at ``y = y0 +- half_height``.

    ``alpha = half_height * sqrt(rho omega / mu)``.
    """

    axis: ClassVar[int] = 0

    alpha: float
    half_height: float = 0.5
    length: float = 10.0
    mu: float = 1.0
    rho: float = 1.0
    h: float = 1.0
    center: float | None = None

    @property
    def omega(self) -> float:
        return self.alpha**2 * self.mu / (self.rho * self.half_height**2)

    @property
    def steady_centerline(self) -> float:
        return self.h * self.half_height**2 / (2 * self.mu * self.length)

    def velocity_at(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        y0 = self.half_height if self.center is None else self.center
        y = np.clip(coords[:, 1] - y0, -self.half_height, self.half_height)
        return channel_velocity(self, y)


def channel_velocity(ref: ChannelReference, y):
    """Complex axial velocity at offset ``y`` from the channel midplane."""
    y = np.asarray(y, dtype=float)
    b = ref.half_height
    if np.any(np.abs(y) > b * (1 + 1e-12)):
        raise ValueError(f"|y| must not exceed the half height {b}")
    if ref.alpha == 0:
        u = ref.h / (2 * ref.mu * ref.length) * (b**2 - y**2) + 0j
    else:
        s = J12 * ref.alpha
        ratio = np.cosh(s * y / b) / np.cosh(s)
        u = -1j * ref.h * b**2 / (ref.length * ref.mu * ref.alpha**2) * (1 - ratio)
    return complex(u) if np.ndim(u) == 0 else u


def channel_flow_rate(ref: ChannelReference) -> complex:
    """Flow rate per unit depth through the channel cross-section."""
    b = ref.half_height
    if ref.alpha == 0:
        return complex(2 * ref.h * b**3 / (3 * ref.mu * ref.length))
    s = J12 * ref.alpha
    return complex(-1j * ref.h * b**2 / (ref.length * ref.mu * ref.alpha**2)
                   * (2 * b - 2 * b * np.tanh(s) / s))
