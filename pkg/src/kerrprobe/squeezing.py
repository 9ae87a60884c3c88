"""
Bogoliubov (squeezon) parameters of the intra-resonator field.

For detuning ``D = omega_r'(alpha) + S(alpha) - omega_p`` and squeezing source
``Upsilon_p``, the pair (r, Theta) must cancel the a^2 terms of the transformed
Hamiltonian::

    -D sinh(2r)/2 + i kappa sinh(2r)/4
        + Upsilon_p e^{-2i Theta} cosh^2 r + Upsilon_p^* e^{2i Theta} sinh^2 r = 0

Splitting into real and imaginary parts with phi = arg(Upsilon_p) - 2 Theta::

    cos(phi) =  D tanh(2r) / (2|Upsilon_p|)
    sin(phi) = -kappa sinh(2r) / (4|Upsilon_p|)

Squaring and adding leaves one equation in r that is monotone on [0, r_max],
so it is bracketed and solved to 1e-12 in r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import brentq, minimize_scalar

from .dispersive import DispersiveQuantities

__all__ = [
    "SqueezingSolution",
    "r_max",
    "squeezing_from",
    "solve_squeezing",
    "condition_residual",
    "effective_temperature",
    "squeezing_detuning",
    "SqueezingSweep",
    "squeezing_sweep",
    "squeezing_supremum",
]

R_TOL = 1e-12
# the bracket is solved to machine precision: when |D| >> |Upsilon| the
# condition residual scales like D dr / |Upsilon|, so dr = R_TOL is not enough
_BRENT_XTOL = 1e-300


@dataclass(frozen=True)
class SqueezingSolution:
    r: float
    theta: float
    r_max: float
    n_th: float
    delta_r_tilde: float
    residual: float
    detuning: float
    upsilon: complex
    kappa: float

    @property
    def xi(self) -> complex:
        return self.r * complex(math.cos(2 * self.theta), math.sin(2 * self.theta))


def r_max(upsilon: complex, kappa: float) -> float:
    """Largest reachable squeezing, 1/2 arcsinh(4|Upsilon_p|/kappa)."""
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    return 0.5 * math.asinh(4 * abs(upsilon) / kappa)


def condition_residual(r: float, theta: float, upsilon: complex, detuning: float,
                       kappa: float) -> float:
    """|a^2 coefficient| after the transformation, relative to its term size.

    The terms grow like max(|Upsilon_p|, kappa) cosh(2r), which is the scale
    used, so the value is a relative backward error.
    """
    e = complex(math.cos(2 * theta), -math.sin(2 * theta))
    val = (
        -detuning * math.sinh(2 * r) / 2
        + 1j * kappa * math.sinh(2 * r) / 4
        + upsilon * e * math.cosh(r) ** 2
        + upsilon.conjugate() * e.conjugate() * math.sinh(r) ** 2
    )
    return abs(val) / (max(abs(upsilon), kappa) * math.cosh(2 * r))


def squeezing_from(upsilon: complex, detuning: float, kappa: float) -> SqueezingSolution:
    """Solve for (r, Theta) given the squeezing source, detuning and loss rate."""
    upsilon = complex(upsilon)
    rm = r_max(upsilon, kappa)
    a = abs(upsilon)
    if a == 0.0:
        return SqueezingSolution(0.0, 0.0, 0.0, 0.0, detuning, 0.0, detuning, upsilon, kappa)

    def h(r):
        u = 2 * r
        return (detuning * math.tanh(u)) ** 2 / 4 + (kappa * math.sinh(u)) ** 2 / 16 - a * a

    if h(rm) <= 0.0:  # only when detuning == 0: the bracket end is the root
        r = rm
    else:
        r = brentq(h, 0.0, rm, xtol=_BRENT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
    u = 2 * r
    phi = math.atan2(-kappa * math.sinh(u) / (4 * a), detuning * math.tanh(u) / (2 * a))
    theta = 0.5 * (math.atan2(upsilon.imag, upsilon.real) - phi)
    res = condition_residual(r, theta, upsilon, detuning, kappa)
    return SqueezingSolution(
        r=r,
        theta=theta,
        r_max=rm,
        n_th=math.sinh(r) ** 2,
        delta_r_tilde=detuning / math.cosh(u),
        residual=res,
        detuning=detuning,
        upsilon=upsilon,
        kappa=kappa,
    )


def squeezing_detuning(disp: DispersiveQuantities, state: int = 0, omega_p=None) -> float:
    wp = disp.omega_p if omega_p is None else omega_p
    return float(disp.omega_r_shifted[state] + disp.pull[state] - wp)


def solve_squeezing(
    disp: DispersiveQuantities,
    state: int = 0,
    omega_p: float | None = None,
) -> SqueezingSolution:
    """Squeezing parameters seen with the qubit in ``state``.

    By default the ground-state source and pull are used and the result is
    applied to every qubit state; pass another ``state`` for the per-state
    variant.
    """
    return squeezing_from(
        disp.upsilon[state], squeezing_detuning(disp, state, omega_p), disp.kappa
    )


def effective_temperature(n_th: float, omega: float) -> float:
    """Bose-Einstein temperature (K) of a mode at ``omega`` (rad/s) with occupation n_th."""
    if n_th <= 0.0:
        return 0.0
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    return constants.hbar * omega / (constants.k * math.log1p(1.0 / n_th))


@dataclass(frozen=True)
class SqueezingSweep:
    """r and Theta along a pump-frequency sweep at fixed source and loss rate."""

    omega_p: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    n_th: np.ndarray
    delta_r_tilde: np.ndarray
    r_max: float


def squeezing_sweep(upsilon: complex, kappa: float, omega_r_eff: float, omega_p) -> SqueezingSweep:
    """Solve the squeezing condition on every pump frequency of ``omega_p``.

    ``omega_r_eff`` is the pulled, Kerr-shifted resonator frequency, so the
    detuning at each point is ``omega_r_eff - omega_p``.
    """
    wp = np.atleast_1d(np.asarray(omega_p, float))
    sols = [squeezing_from(upsilon, omega_r_eff - w, kappa) for w in wp]
    return SqueezingSweep(
        omega_p=wp,
        r=np.array([s.r for s in sols]),
        theta=np.array([s.theta for s in sols]),
        n_th=np.array([s.n_th for s in sols]),
        delta_r_tilde=np.array([s.delta_r_tilde for s in sols]),
        r_max=r_max(upsilon, kappa),
    )


def squeezing_supremum(
    upsilon: complex,
    kappa: float,
    omega_r_eff: float,
    span: float | None = None,
    n_grid: int = 201,
) -> tuple[float, float]:
    """Largest r over pump frequencies within ``omega_r_eff`` +- ``span``.

    A coarse grid brackets the maximum and a bounded scalar search polishes
    it. Returns ``(r_sup, omega_p_at_sup)``; ``span`` defaults to 10 kappa.
    """
    span = 10 * kappa if span is None else span
    grid = np.linspace(omega_r_eff - span, omega_r_eff + span, n_grid)
    sw = squeezing_sweep(upsilon, kappa, omega_r_eff, grid)
    j = int(np.argmax(sw.r))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, n_grid - 1)]
    res = minimize_scalar(
        lambda w: -squeezing_from(upsilon, omega_r_eff - w, kappa).r,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 * max(kappa, abs(omega_r_eff))},
    )
    if -res.fun >= sw.r[j]:
        return float(-res.fun), float(res.x)
    return float(sw.r[j]), float(grid[j])
