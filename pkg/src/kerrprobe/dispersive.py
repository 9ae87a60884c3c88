"""
Drive- and field-dependent dispersive quantities of the multi-level qubit.

Index conventions: coupling-indexed quantities (Lambda, X, lambda, chi) live on
i = 0..M-2 and level-indexed ones (S, K, Lamb shift, cavity pull, shifted
frequencies) on i = 0..M-1. Any index outside its range evaluates to zero,
which is what the ladder structure forces at both ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .params import DriveSpec, SystemParams
from .semiclassical import PointerSolution

__all__ = [
    "ResonantDrive",
    "DispersiveBreakdown",
    "StarkCoefficients",
    "StarkTable",
    "DispersiveQuantities",
    "stark_coefficients",
    "stark_table",
    "shifted_resonator_frequency",
    "field_dispersives",
]


class ResonantDrive(ValueError):
    """A pump sits too close to a qubit transition for the dispersive expansion."""


class DispersiveBreakdown(RuntimeError):
    """|lambda_i(alpha)| exceeds the validity guard."""


@dataclass(frozen=True)
class StarkCoefficients:
    """Classical Stark coefficients of one drive."""

    Lambda: np.ndarray  # (M-1,)
    X: np.ndarray  # (M-1,) rad/s
    S: np.ndarray  # (M,) rad/s
    K: np.ndarray  # (M,) rad/s


@dataclass(frozen=True)
class StarkTable:
    """Stark coefficients for a whole drive set, columns ordered like the drives."""

    Lambda: np.ndarray  # (M-1, D)
    X: np.ndarray  # (M-1, D)
    S_coef: np.ndarray  # (M, D)
    K_coef: np.ndarray  # (M, D)


def _at(arr: np.ndarray, i: int) -> float:
    return float(arr[i]) if 0 <= i < len(arr) else 0.0


def stark_coefficients(
    params: SystemParams,
    drive: DriveSpec,
    resonance_guard: Optional[float] = None,
) -> StarkCoefficients:
    """Lambda, X, S and K coefficients for a single (non-resonant) drive.

    ``resonance_guard`` defaults to kappa; a transition closer than that to
    the drive frequency raises :class:`ResonantDrive`.
    """
    guard = params.kappa if resonance_guard is None else resonance_guard
    m = params.m_levels
    g = np.asarray(params.couplings, float)
    trans = np.array([params.omega_ij(i + 1, i) for i in range(m - 1)])
    det = trans - drive.frequency
    bad = np.nonzero(np.abs(det) < guard)[0]
    if bad.size:
        i = int(bad[0])
        raise ResonantDrive(
            f"drive at {drive.frequency:.6g} rad/s within {guard:.3g} rad/s of transition {i}->{i + 1}"
        )
    Lam = -g / det
    X = -g * Lam
    S = np.array([-(_at(X, i) - _at(X, i - 1)) for i in range(m)])
    L2 = Lam**2
    K = np.empty(m)
    for i in range(m):
        K[i] = (
            -4 * S[i] * (_at(L2, i) + _at(L2, i - 1))
            - (3 * _at(X, i + 1) * _at(L2, i) - _at(X, i) * _at(L2, i + 1))
            + (3 * _at(X, i - 2) * _at(L2, i - 1) - _at(X, i - 1) * _at(L2, i - 2))
        )
    return StarkCoefficients(Lam, X, S, K)


def stark_table(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    resonance_guard: Optional[float] = None,
) -> StarkTable:
    """Stack per-drive coefficients; spectroscopy drives get zero columns.

    The spectroscopy tone is near-resonant with the qubit by design, so the
    far-detuned Stark expansion does not apply to it; it still enters the
    pointer states through the total photon number.
    """
    m, nd = params.m_levels, len(drives)
    Lam = np.zeros((m - 1, nd))
    X = np.zeros((m - 1, nd))
    S = np.zeros((m, nd))
    K = np.zeros((m, nd))
    for k, d in enumerate(drives):
        if d.kind != "pump":
            continue
        c = stark_coefficients(params, d, resonance_guard)
        Lam[:, k], X[:, k], S[:, k], K[:, k] = c.Lambda, c.X, c.S, c.K
    return StarkTable(Lam, X, S, K)


def shifted_resonator_frequency(params: SystemParams, n) -> np.ndarray:
    """Mean-field Kerr-shifted resonator frequency omega_r + 2K n + 3K' n^2."""
    n = np.asarray(n, float)
    return params.omega_r + 2 * params.kerr_K * n + 3 * params.kerr_Kp * n**2


@dataclass(frozen=True)
class DispersiveQuantities:
    """Everything the squeezing and reduced-qubit stages need.

    Per-state arrays are indexed by qubit level i. ``omega_r_shifted[i]`` and
    ``upsilon[i]`` are evaluated on the pointer state of level i; ``upsilon``
    is the component oscillating at the pump frequency.
    """

    Lambda: np.ndarray
    X: np.ndarray
    S_coef: np.ndarray
    K_coef: np.ndarray
    lambda_alpha: np.ndarray  # (M-1,)
    chi_alpha: np.ndarray  # (M-1,)
    lamb: np.ndarray  # (M,)
    pull: np.ndarray  # (M,)
    omega_dd: np.ndarray  # (M,)
    omega_ddd: np.ndarray  # (M,)
    omega_r_shifted: np.ndarray  # (M,)
    upsilon: np.ndarray  # (M,) complex
    kappa: float
    omega_p: float
    pump_index: int

    @property
    def omega10_ddd(self) -> float:
        return float(self.omega_ddd[1] - self.omega_ddd[0])


def field_dispersives(
    params: SystemParams,
    sol: PointerSolution,
    table: Optional[StarkTable] = None,
    breakdown: Optional[float] = 0.5,
    resonance_guard: Optional[float] = None,
) -> DispersiveQuantities:
    """Field-dependent shifts, couplings and squeezing source for a pointer solution.

    Set ``breakdown=None`` to skip the |lambda| validity guard.
    """
    drives = sol.drives
    if table is None:
        table = stark_table(params, drives, resonance_guard)
    pumps = [k for k, d in enumerate(drives) if d.kind == "pump"]
    if len(pumps) != 1:
        raise ValueError(f"expected exactly one pump drive, found {len(pumps)}")
    p = pumps[0]
    m = params.m_levels
    a2 = np.abs(sol.alpha) ** 2  # (M, D)
    n = a2.sum(axis=1)

    omega = np.asarray(params.omegas, float)
    omega_dd = omega + np.sum(table.S_coef * a2, axis=1) + 0.25 * np.sum(table.K_coef * a2**2, axis=1)
    omega_r_sh = shifted_resonator_frequency(params, n)

    g = np.asarray(params.couplings, float)
    lam = np.array([
        -g[i] / ((omega_dd[i + 1] - omega_dd[i]) - omega_r_sh[i]) for i in range(m - 1)
    ])
    if breakdown is not None and np.any(np.abs(lam) > breakdown):
        i = int(np.argmax(np.abs(lam)))
        raise DispersiveBreakdown(f"|lambda_{i}(alpha)| = {abs(lam[i]):.3g} > {breakdown}")
    chi = -g * lam
    lamb = np.array([_at(chi, i - 1) for i in range(m)])
    pull = np.array([-(_at(chi, i) - _at(chi, i - 1)) for i in range(m)])

    ap = sol.alpha[:, p]
    ups = (params.kerr_K / 2 + params.kerr_Kp * np.abs(ap) ** 2) * ap**2

    return DispersiveQuantities(
        Lambda=table.Lambda,
        X=table.X,
        S_coef=table.S_coef,
        K_coef=table.K_coef,
        lambda_alpha=lam,
        chi_alpha=chi,
        lamb=lamb,
        pull=pull,
        omega_dd=omega_dd,
        omega_ddd=omega_dd + lamb,
        omega_r_shifted=omega_r_sh,
        upsilon=ups,
        kappa=params.kappa,
        omega_p=drives[p].frequency,
        pump_index=p,
    )
