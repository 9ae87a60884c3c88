"""
Brute-force Lindblad oracle on a truncated Fock space.

The resonator (Fock cutoff N) is tensored with the M-level qubit, resonator
first. Density matrices are vectorised row-major, so that

    vec(A rho B) = (A kron B^T) vec(rho)

and the generator is a sparse (N M)^2 square matrix. Two frames are offered:

``lab``
    Full Rabi coupling, every drive explicitly time dependent.
``rotating``
    Frame rotating at the pump frequency, coupling reduced to its
    rotating-wave (Jaynes-Cummings) form. The pump becomes static; any other
    drive keeps a residual time dependence at its offset from the pump. The
    reduction is recorded in the generator metadata.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .params import DriveSpec, SystemParams

__all__ = [
    "MAX_DIM",
    "CutoffTooSmall",
    "DegenerateSteadyState",
    "IntegrationFailed",
    "InvalidDensityMatrix",
    "TruncatedSpace",
    "DensityMatrix",
    "Generator",
    "Moments",
    "build_generator",
    "steady_state",
    "steady_state_auto",
    "time_evolve",
    "moments",
    "fluctuation_number",
    "min_quadrature_variance",
    "inferred_squeezing",
    "fock_distribution",
    "is_bimodal",
    "two_drive_P1",
    "oracle_spectrum",
]

log = logging.getLogger(__name__)

MAX_DIM = 200
CUTOFF_FRACTION = 0.7
TAIL_WEIGHT = 1e-6


class CutoffTooSmall(RuntimeError):
    """The Fock cutoff cannot hold the field, even after escalation."""


class DegenerateSteadyState(RuntimeError):
    """The generator has no unique steady state."""


class IntegrationFailed(RuntimeError):
    """The adaptive integrator gave up (typically step-size underflow)."""


class InvalidDensityMatrix(ValueError):
    """Trace, Hermiticity or positivity check failed."""


@dataclass(frozen=True)
class TruncatedSpace:
    """Resonator Fock cutoff ``n_fock`` times ``m_levels`` qubit states.

    ``m_levels = 1`` describes the bare resonator. A nonzero ``displacement``
    expands the field around a coherent amplitude, a = displacement + b, with
    the Fock basis counting quanta of b. The change of basis is exact; only
    the fluctuations need to fit below the cutoff.
    """

    n_fock: int
    m_levels: int
    displacement: complex = 0j

    def __post_init__(self):
        if self.n_fock < 2 or self.m_levels < 1:
            raise ValueError("need n_fock >= 2 and m_levels >= 1")
        if self.dim > MAX_DIM:
            raise ValueError(f"dimension {self.dim} exceeds the cap of {MAX_DIM}")

    @property
    def dim(self) -> int:
        return self.n_fock * self.m_levels

    def destroy(self) -> sp.csr_matrix:
        a = sp.diags(np.sqrt(np.arange(1, self.n_fock)), 1, format="csr")
        return sp.kron(a, sp.identity(self.m_levels), format="csr")

    def field(self) -> sp.csr_matrix:
        """The resonator field a = displacement + b."""
        b = self.destroy()
        if self.displacement == 0:
            return b
        return (b + self.displacement * sp.identity(self.dim, format="csr")).tocsr()

    def qubit_op(self, op) -> sp.csr_matrix:
        return sp.kron(sp.identity(self.n_fock), sp.csr_matrix(op), format="csr")

    def qubit_proj(self, i: int, j: int) -> sp.csr_matrix:
        op = sp.csr_matrix(([1.0], ([i], [j])), shape=(self.m_levels,) * 2)
        return self.qubit_op(op)


@dataclass
class DensityMatrix:
    rho: np.ndarray
    space: TruncatedSpace

    def check(self, trace_tol=1e-8, herm_tol=1e-10, pos_tol=1e-7) -> "DensityMatrix":
        """Raise :class:`InvalidDensityMatrix` unless all invariants hold."""
        tr = np.trace(self.rho)
        if abs(tr - 1) > trace_tol:
            raise InvalidDensityMatrix(f"trace {tr:.3e} differs from 1")
        herm = np.max(np.abs(self.rho - self.rho.conj().T))
        if herm > herm_tol:
            raise InvalidDensityMatrix(f"Hermiticity error {herm:.3e}")
        lo = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min()
        if lo < -pos_tol:
            raise InvalidDensityMatrix(f"negative eigenvalue {lo:.3e}")
        return self

    @classmethod
    def ground(cls, space: TruncatedSpace) -> "DensityMatrix":
        rho = np.zeros((space.dim, space.dim), complex)
        rho[0, 0] = 1.0
        return cls(rho, space)


def _spre_post(A, B) -> sp.csr_matrix:
    """Superoperator of rho -> A rho B."""
    return sp.kron(A, B.T, format="csr")


def _commutator(H, eye) -> sp.csr_matrix:
    return -1j * (sp.kron(H, eye, format="csr") - sp.kron(eye, H.T, format="csr"))


def _dissipator(C, eye) -> sp.csr_matrix:
    CdC = (C.conj().T @ C).tocsr()
    return (
        _spre_post(C, C.conj().T)
        - 0.5 * sp.kron(CdC, eye, format="csr")
        - 0.5 * sp.kron(eye, CdC.T, format="csr")
    ).tocsr()


@dataclass
class Generator:
    """L(t) = L0 + sum_k [amp_k e^{-i nu_k t} A_k + conj(amp_k) e^{i nu_k t} B_k].

    ``A_k`` and ``B_k`` are the commutator superoperators of a^dag and a.
    """

    space: TruncatedSpace
    L0: sp.csr_matrix
    drive_terms: list = field(default_factory=list)  # (amp, nu, A, B)
    frame: str = "rotating"
    metadata: dict = field(default_factory=dict)

    @property
    def time_independent(self) -> bool:
        return not any(nu != 0.0 for _, nu, _, _ in self.drive_terms)

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        L = self.L0.copy()
        for amp, nu, A, B in self.drive_terms:
            ph = complex(math.cos(nu * t), -math.sin(nu * t))
            L = L + (amp * ph) * A + (amp * ph).conjugate() * B
        return L.tocsr()

    def apply(self, t: float, vec: np.ndarray) -> np.ndarray:
        out = self.L0 @ vec
        for amp, nu, A, B in self.drive_terms:
            ph = complex(math.cos(nu * t), -math.sin(nu * t))
            out += (amp * ph) * (A @ vec) + (amp * ph).conjugate() * (B @ vec)
        return out

    @property
    def rate_scale(self) -> float:
        return float(np.max(np.abs(self.matrix(0.0).data)))


def build_generator(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    space: TruncatedSpace,
    frame: str = "rotating",
    frame_frequency: Optional[float] = None,
) -> Generator:
    """Assemble the master-equation generator on ``space``.

    With ``space.m_levels == 1`` the qubit is dropped entirely. Otherwise the
    first ``space.m_levels`` configured qubit levels are kept.
    ``frame_frequency`` defaults to the pump frequency (rotating frame only).
    """
    if frame not in ("lab", "rotating"):
        raise ValueError(f"unknown frame {frame!r}")
    m = space.m_levels
    if m > 1 and m > params.m_levels:
        raise ValueError(f"space has {m} qubit levels, params only {params.m_levels}")
    eye = sp.identity(space.dim, format="csr")
    a = space.field()
    ad = a.conj().T.tocsr()

    if frame == "rotating":
        if frame_frequency is None:
            pumps = [d for d in drives if d.kind == "pump"]
            if not pumps:
                raise ValueError("rotating frame needs a pump or an explicit frame_frequency")
            frame_frequency = pumps[0].frequency
        wf = float(frame_frequency)
    else:
        wf = 0.0

    # normal-ordered products stay exact under truncation, displaced or not
    ad2a2 = ad @ ad @ a @ a
    H = (params.omega_r - wf) * (ad @ a) + 0.5 * params.kerr_K * ad2a2
    if params.kerr_Kp != 0.0:
        H = H + params.kerr_Kp / 3 * (ad @ ad2a2 @ a)
    if m > 1:
        omegas = np.asarray(params.omegas[:m], float) - wf * np.arange(m)
        H = H + space.qubit_op(sp.diags(omegas.astype(complex), 0))
    H = H.astype(complex).tocsr()

    meta = {"frame": frame, "frame_frequency": wf, "n_fock": space.n_fock, "m_levels": m,
            "displacement": complex(space.displacement)}
    if m > 1:
        for i in range(m - 1):
            g = params.levels[i].g
            if g == 0.0:
                continue
            lower = space.qubit_proj(i, i + 1)
            raise_ = lower.conj().T
            if frame == "lab":
                H = H + g * (a + ad) @ (lower + raise_)
            else:
                H = H + g * (ad @ lower + a @ raise_)
        meta["coupling"] = "rabi" if frame == "lab" else "rotating_wave"

    L0 = _commutator(H.tocsr(), eye) + params.kappa * _dissipator(a, eye)
    if m > 1:
        g0 = params.levels[0].g
        for i in range(m - 1):
            if g0 != 0.0:
                w = (params.levels[i].g / g0) ** 2
            else:
                w = 1.0 if i == 0 else 0.0
            if params.gamma_down > 0 and w > 0:
                L0 = L0 + params.gamma_down * w * _dissipator(space.qubit_proj(i, i + 1), eye)
        if params.gamma_phi > 0:
            eps = np.asarray(params.epsilons[:m], float)
            Pi = space.qubit_op(sp.diags(eps.astype(complex), 0))
            L0 = L0 + 2 * params.gamma_phi * _dissipator(Pi, eye)

    b = space.destroy()
    A = _commutator(b.conj().T.tocsr(), eye)  # displacement adds only c-numbers
    B = _commutator(b, eye)
    terms = []
    for d in drives:
        if d.amplitude == 0:
            continue
        nu = d.frequency - wf
        if nu == 0.0:
            L0 = L0 + d.amplitude * A + d.amplitude.conjugate() * B
        else:
            terms.append((d.amplitude, nu, A, B))
    return Generator(space, L0.tocsr(), terms, frame, meta)


def steady_state(gen: Generator, check: bool = True) -> DensityMatrix:
    """Unique null vector of a time-independent generator, trace-normalised.

    The equation for rho_00 is replaced by the trace condition and the
    resulting system solved by sparse LU. ``metadata['residual']`` holds
    ||L rho|| relative to the largest generator entry.
    """
    if not gen.time_independent:
        raise ValueError("steady_state needs a time-independent generator")
    d = gen.space.dim
    L = gen.matrix().tolil()
    trace_idx = np.arange(d) * (d + 1)
    L[0, :] = 0.0
    L[0, trace_idx] = 1.0
    rhs = np.zeros(d * d, complex)
    rhs[0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            vec = spla.spsolve(L.tocsc(), rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise DegenerateSteadyState(str(exc)) from exc
    if not np.all(np.isfinite(vec)):
        raise DegenerateSteadyState("sparse solve returned non-finite values")
    full = gen.matrix()
    scale = gen.rate_scale
    residual = float(np.linalg.norm(full @ vec)) / scale
    rho = vec.reshape(d, d)
    gen.metadata["residual"] = residual
    if residual > 1e-9:
        raise DegenerateSteadyState(f"steady-state residual {residual:.2e} exceeds 1e-9")
    dm = DensityMatrix(rho, gen.space)
    return dm.check() if check else dm


def _cutoff_ok(dm: DensityMatrix) -> bool:
    # a hard-truncated driven mode can sit at a low mean photon number, so
    # the weight on the top Fock level is checked as well
    p = fock_distribution(dm)
    return fluctuation_number(dm) < CUTOFF_FRACTION * dm.space.n_fock and p[-1] < TAIL_WEIGHT


def steady_state_auto(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    n_fock: int = 30,
    m_levels: Optional[int] = None,
    frame: str = "rotating",
    growth: float = 1.5,
    displacement: complex = 0j,
) -> tuple[DensityMatrix, Generator]:
    """Steady state with automatic Fock-cutoff escalation.

    The cutoff grows by ``growth`` until the mean number of basis quanta is
    below 0.7 N and the top Fock level holds less than 1e-6, stopping at
    the dimension cap.
    """
    m = params.m_levels if m_levels is None else m_levels
    n = n_fock
    while True:
        space = TruncatedSpace(n, m, displacement)
        gen = build_generator(params, drives, space, frame)
        dm = steady_state(gen)
        if _cutoff_ok(dm):
            return dm, gen
        nxt = int(math.ceil(n * growth))
        if nxt * m > MAX_DIM:
            raise CutoffTooSmall(
                f"{fluctuation_number(dm):.2f} quanta need more than {n} Fock states (cap {MAX_DIM // m})"
            )
        log.info("escalating Fock cutoff %d -> %d", n, nxt)
        n = nxt


def time_evolve(
    gen: Generator,
    rho0: DensityMatrix,
    t_final: float,
    t0: float = 0.0,
    t_eval: Optional[np.ndarray] = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    check: bool = True,
):
    """Integrate the master equation with an adaptive explicit Runge-Kutta scheme.

    Returns the final :class:`DensityMatrix`; with ``t_eval`` also the array of
    vectorised states at those times, shape (len(t_eval), dim^2).
    """
    d = gen.space.dim

    def rhs(t, y):
        return gen.apply(t, y)

    res = solve_ivp(rhs, (t0, t_final), rho0.rho.reshape(-1).astype(complex), method="DOP853",
                    rtol=rtol, atol=atol, t_eval=t_eval)
    if res.status != 0:
        raise IntegrationFailed(res.message)
    if t_eval is None:
        final = res.y[:, -1]
        samples = None
    else:
        samples = res.y.T
        final = samples[-1]
        if check:
            for vec in samples:
                DensityMatrix(vec.reshape(d, d), gen.space).check()
    dm = DensityMatrix(final.reshape(d, d), gen.space)
    if check:
        dm.check()
    return (dm, samples) if t_eval is not None else dm


@dataclass(frozen=True)
class Moments:
    a: complex
    n: float
    a2: complex
    populations: np.ndarray

    @property
    def var_n(self) -> float:
        """<da^dag da> with da = a - <a>."""
        return float(self.n - abs(self.a) ** 2)

    @property
    def var_a2(self) -> complex:
        """<da^2>."""
        return self.a2 - self.a**2


def _reshape4(dm: DensityMatrix) -> np.ndarray:
    N, M = dm.space.n_fock, dm.space.m_levels
    return dm.rho.reshape(N, M, N, M)


def moments(dm: DensityMatrix) -> Moments:
    """Exact field moments and qubit populations of ``dm`` (original field a)."""
    r4 = _reshape4(dm)
    rho_r = np.einsum("imjm->ij", r4)
    N = dm.space.n_fock
    s = np.sqrt(np.arange(1, N))
    b = np.sum(s * rho_r[np.arange(1, N), np.arange(N - 1)])  # sum sqrt(k+1) rho[k+1, k]
    s2 = np.sqrt(np.arange(2, N) * np.arange(1, N - 1))
    b2 = np.sum(s2 * rho_r[np.arange(2, N), np.arange(N - 2)])
    nb = float(np.real(np.sum(np.arange(N) * np.diagonal(rho_r))))
    pops = np.real(np.einsum("imim->m", r4)) if dm.space.m_levels > 1 else np.ones(1)
    x = complex(dm.space.displacement)
    a_mean = x + b
    n = nb + 2 * (x.conjugate() * b).real + abs(x) ** 2
    a2 = x * x + 2 * x * b + b2
    return Moments(complex(a_mean), float(n), complex(a2), pops)


def fluctuation_number(dm: DensityMatrix) -> float:
    """Mean number of quanta counted by the Fock basis (of b when displaced)."""
    p = fock_distribution(dm)
    return float(np.sum(np.arange(len(p)) * p))


def min_quadrature_variance(mo: Moments) -> float:
    """Smallest quadrature variance, vacuum = 1/2."""
    return 0.5 + mo.var_n - abs(mo.var_a2)


def inferred_squeezing(mo: Moments) -> float:
    """r such that a pure squeezed vacuum has the same minimal variance."""
    v = min_quadrature_variance(mo)
    return max(0.0, -0.5 * math.log(2 * v))


def fock_distribution(dm: DensityMatrix) -> np.ndarray:
    r4 = _reshape4(dm)
    return np.real(np.einsum("imim->i", r4))


def is_bimodal(p: np.ndarray, depth: float = 0.8, floor: float = 1e-4) -> bool:
    """True if two humps above ``floor`` are separated by a dip below ``depth`` x the lower hump."""
    p = np.asarray(p, float)
    peaks = [
        k for k in range(len(p))
        if p[k] > floor and (k == 0 or p[k] >= p[k - 1]) and (k == len(p) - 1 or p[k] > p[k + 1])
    ]
    for i, j in zip(peaks, peaks[1:]):
        if p[i + 1:j].size and p[i + 1:j].min() < depth * min(p[i], p[j]):
            return True
    return False


@dataclass(frozen=True)
class TwoDriveResult:
    P1: float
    P1_halves: tuple
    converged: bool
    final: DensityMatrix


def two_drive_P1(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    space: TruncatedSpace,
    t_settle: float,
    n_periods: int = 20,
    samples_per_period: int = 16,
    rho0: Optional[DensityMatrix] = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    avg_tol: float = 1e-3,
) -> TwoDriveResult:
    """Time-averaged excited-state population under pump plus spectroscopy.

    Works in the pump frame. Starting from ``rho0`` (default: pump-only
    steady state) the system settles for ``t_settle`` and P(|1>) is then
    averaged over ``n_periods`` beat periods. ``converged`` compares the two
    halves of the averaging window against ``avg_tol``.
    """
    gen = build_generator(params, drives, space, "rotating")
    nus = [abs(nu) for _, nu, _, _ in gen.drive_terms]
    if rho0 is None:
        static = build_generator(params, [d for d in drives if d.kind == "pump"], space, "rotating",
                                 frame_frequency=gen.metadata["frame_frequency"])
        rho0 = steady_state(static)
    if not nus:
        dm = steady_state(gen)
        p = float(moments(dm).populations[1])
        return TwoDriveResult(p, (p, p), True, dm)
    period = 2 * math.pi / min(nus)
    t_end = t_settle + n_periods * period
    n_samp = n_periods * samples_per_period
    t_eval = t_settle + period * np.arange(n_samp + 1) / samples_per_period
    dm, samples = time_evolve(gen, rho0, t_end, t_eval=t_eval, rtol=rtol, atol=atol)
    d = space.dim
    N, M = space.n_fock, space.m_levels
    diag_idx = np.arange(d) * (d + 1)
    pops = np.real(samples[:, diag_idx]).reshape(-1, N, M).sum(axis=1)[:, 1]
    p_samples = pops[:-1]  # drop the duplicated end point of the last period
    half = n_samp // 2
    h1, h2 = float(p_samples[:half].mean()), float(p_samples[half:].mean())
    return TwoDriveResult(float(p_samples.mean()), (h1, h2), abs(h1 - h2) < avg_tol, dm)


def oracle_spectrum(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    omega_s_grid: Sequence[float],
    space: TruncatedSpace,
    t_settle_first: float,
    t_settle_next: Optional[float] = None,
    **kwargs,
):
    """Oracle P(|1>) over ``omega_s_grid`` for the configured pump.

    Each point warm-starts from the previous final state so that later points
    need only ``t_settle_next`` (default: a quarter of the first settle).
    Returns (P1 array, converged flags).
    """
    pump = [d for d in drives if d.kind == "pump"]
    spec = next(d for d in drives if d.kind == "spectroscopy")
    if t_settle_next is None:
        t_settle_next = t_settle_first / 4
    P = np.empty(len(omega_s_grid))
    ok = np.empty(len(omega_s_grid), bool)
    rho = None
    for j, ws in enumerate(omega_s_grid):
        res = two_drive_P1(params, pump + [spec.with_frequency(float(ws))], space,
                           t_settle_first if rho is None else t_settle_next, rho0=rho, **kwargs)
        P[j], ok[j], rho = res.P1, res.converged, res.final
    return P, ok
