"""Exact solutions for concentric circles.

Jumps follow the convention ``jump = beta[p] - beta[n]`` of the curve
orientation; with phases numbered from the inside out, ``jump21 = beta_1 -
beta_2`` belongs to the inner circle, ``jump23 = beta_3 - beta_2`` to the
middle (or outer) one and ``jump13 = beta_3 - beta_1`` to the outermost circle
of the three-circle case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, RootBracketError

GAP_TOL = 1e-12


@dataclass(frozen=True)
class TwoCircleParams:
    jump21: float
    jump23: float
    R1: float
    R2: float

    def __post_init__(self):
        if self.jump21 == 0 or self.jump23 == 0:
            raise DomainError("jumps must be nonzero")
        if not 0 < self.R1 < self.R2:
            raise DomainError("radii must satisfy 0 < R1 < R2")

    @classmethod
    def from_beta(cls, beta, radii) -> "TwoCircleParams":
        b1, b2, b3 = beta
        return cls(b1 - b2, b3 - b2, *radii)

    @property
    def D2(self) -> float:
        return self.jump21 * self.R1**2 - self.jump23 * self.R2**2


@dataclass(frozen=True)
class ThreeCircleParams:
    jump21: float
    jump23: float
    jump13: float
    R1: float
    R2: float
    R3: float

    def __post_init__(self):
        if 0 in (self.jump21, self.jump23, self.jump13):
            raise DomainError("jumps must be nonzero")
        if not 0 < self.R1 < self.R2 < self.R3:
            raise DomainError("radii must satisfy 0 < R1 < R2 < R3")

    @classmethod
    def from_beta(cls, beta, radii) -> "ThreeCircleParams":
        b1, b2, b3 = beta
        return cls(b1 - b2, b3 - b2, b3 - b1, *radii)

    @property
    def conserved(self) -> float:
        return self.jump21 * self.R1**2 - self.jump23 * self.R2**2 + self.jump13 * self.R3**2


def alpha2(R1: float, R2: float, params) -> float:
    """Slope of the logarithmic potential in the annulus between two circles."""
    if not (R1 > 0 and R2 - R1 >= GAP_TOL):
        raise DomainError(f"need 0 < R1 < R2, got R1={R1}, R2={R2}")
    return (1.0 / (params.jump21 * R1) + 1.0 / (params.jump23 * R2)) / math.log(R2 / R1)


def _band_slope(ja: float, Ra: float, jb: float, Rb: float) -> float:
    # (1/(ja Ra) + 1/(jb Rb)) / log(Ra / Rb)
    return (1.0 / (ja * Ra) + 1.0 / (jb * Rb)) / math.log(Ra / Rb)


def two_circle_rhs(R: np.ndarray, params: TwoCircleParams) -> np.ndarray:
    R1, R2 = R
    a = alpha2(R1, R2, params)
    return np.array([-a / (params.jump21 * R1), -a / (params.jump23 * R2)])


def three_circle_rhs(R: np.ndarray, params: ThreeCircleParams) -> np.ndarray:
    R1, R2, R3 = R
    if not (R1 > 0 and R2 - R1 >= GAP_TOL and R3 - R2 >= GAP_TOL):
        raise DomainError("radii collapsed")
    inner = _band_slope(params.jump23, R2, params.jump21, R1)
    outer = _band_slope(params.jump23, R2, params.jump13, R3)
    return np.array(
        [
            -inner / (params.jump21 * R1),
            (outer - inner) / (params.jump23 * R2),
            outer / (params.jump13 * R3),
        ]
    )


@dataclass(frozen=True, eq=False)
class RadiusTrajectory:
    """Radii sampled on a uniform grid; ``stopped`` flags an early end."""

    t: np.ndarray
    R: np.ndarray
    stopped: bool = False

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def at(self, t: float) -> np.ndarray:
        """Linearly interpolated radii at time ``t`` (clamped to the computed range)."""
        if t > self.t_end + 1e-12:
            raise DomainError(f"time {t} beyond the computed trajectory (ends at {self.t_end})")
        return np.array([np.interp(t, self.t, self.R[:, i]) for i in range(self.R.shape[1])])


def rk4(rhs, y0, T: float, dt: float, stop=None) -> RadiusTrajectory:
    """Classical fourth-order Runge-Kutta with a fixed step (last step shortened)."""
    n = max(1, math.ceil(T / dt - 1e-9))
    ts = [0.0]
    ys = [np.asarray(y0, dtype=float)]
    y = ys[0]
    t = 0.0
    stopped = False
    for m in range(n):
        h = min(dt, T - t)
        try:
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
        except DomainError:
            stopped = True
            break
        y_new = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_new)) or (stop is not None and stop(y_new, y)):
            stopped = True
            break
        y = y_new
        t = (m + 1) * dt if m < n - 1 else T
        ts.append(t)
        ys.append(y)
    return RadiusTrajectory(np.array(ts), np.array(ys), stopped)


def _gap_stop(tol: float, dt: float, resolution: float = 1e-2):
    # stop when a gap closes or when one step would move a radius by more
    # than a small fraction of the smallest gap (the ODE turns stiff there)
    def stop(R, R_prev):
        gaps = np.concatenate([[R[0]], np.diff(R)])
        return gaps.min() <= tol or np.abs(R - R_prev).max() > resolution * gaps.min()

    return stop


def radii_ode_two(params: TwoCircleParams, T: float, dt: float = 1e-4, stop_tol: float = 1e-3) -> RadiusTrajectory:
    """RK4 trajectory of the two radii; stops early when a phase is about to vanish."""
    return rk4(lambda R: two_circle_rhs(R, params), [params.R1, params.R2], T, dt, _gap_stop(stop_tol, dt))


def radii_ode_three(params: ThreeCircleParams, T: float, dt: float = 1e-4, stop_tol: float = 1e-3) -> RadiusTrajectory:
    return rk4(
        lambda R: three_circle_rhs(R, params), [params.R1, params.R2, params.R3], T, dt, _gap_stop(stop_tol, dt)
    )


def inner_radius(u: float, params: TwoCircleParams) -> float:
    """R1 as a function of R2 along the conserved curve."""
    s = (params.D2 + params.jump23 * u * u) / params.jump21
    if s <= 0:
        raise DomainError(f"no inner radius for R2={u}")
    return math.sqrt(s)


def speed_two(u: float, params: TwoCircleParams) -> float:
    """F(u) with dR2/dt = -F(R2)."""
    return alpha2(inner_radius(u, params), u, params) / (params.jump23 * u)


def radius_rootfind_two(params: TwoCircleParams, t: float, *, rtol: float = 1e-13) -> float:
    """R2(t) from ``0 = t + int_{R2(0)}^{R2} du / F(u)``.

    Raises
    ------
    RootBracketError
        If no root is found before the admissible range for ``R2`` ends.
    """
    u0 = params.R2
    if t == 0:
        return u0
    F0 = speed_two(u0, params)
    if abs(F0) < 1e-14:
        return u0
    direction = -math.copysign(1.0, F0)

    def G(u):
        val, _ = integrate.quad(lambda s: 1.0 / speed_two(s, params), u0, u, epsabs=1e-14, epsrel=1e-13, limit=200)
        return t + val

    # march outwards until G changes sign, halving the step at the domain edge
    step = 1e-3 * u0
    lo = u0
    for _ in range(400):
        hi = lo + direction * step
        if hi <= 0:
            g = None
        else:
            try:
                g = G(hi)
            except DomainError:
                g = None
        if g is None:
            step *= 0.5
            if step < 1e-15 * u0:
                raise RootBracketError(f"R2 leaves the admissible range before t={t}")
            continue
        if g <= 0:
            break
        lo = hi
        step *= 1.5
    else:
        raise RootBracketError(f"no sign change found for t={t}")
    a, b = sorted((lo, hi))
    return optimize.brentq(G, a, b, xtol=1e-15, rtol=rtol)


def exact_w_two(x, t, radii, params) -> np.ndarray:
    """Exact potential of the two-circle solution at points ``x``.

    ``radii`` is either ``(R1, R2)`` at time ``t`` or a :class:`RadiusTrajectory`.
    """
    R1, R2 = radii.at(t) if isinstance(radii, RadiusTrajectory) else radii
    r = _radius(x)
    a = alpha2(R1, R2, params)
    inner = -1.0 / (params.jump21 * R1)
    out = np.where(r < R1, inner, inner + a * np.log(np.maximum(r, 1e-300) / R1))
    return np.where(r >= R2, 1.0 / (params.jump23 * R2), out)


def exact_w_three(x, t, radii, params) -> np.ndarray:
    R1, R2, R3 = radii.at(t) if isinstance(radii, RadiusTrajectory) else radii
    r = np.maximum(_radius(x), 1e-300)
    inner = -1.0 / (params.jump21 * R1)
    outer = -1.0 / (params.jump13 * R3)
    a_in = _band_slope(params.jump23, R2, params.jump21, R1)
    a_out = _band_slope(params.jump23, R2, params.jump13, R3)
    return np.select(
        [r < R1, r < R2, r < R3],
        [inner, a_in * np.log(r / R1) + inner, a_out * np.log(r / R3) + outer],
        outer,
    )


def _radius(x) -> np.ndarray:
    # (n, 2) arrays are points, anything else is a radius
    x = np.asarray(x, dtype=float)
    if x.ndim >= 2 and x.shape[-1] == 2:
        return np.hypot(x[..., 0], x[..., 1])
    return np.abs(x)
