"""Series solutions of the damped fractional wave equation.

Forward homogeneous flow, the exterior-controlled Duhamel series, their superposition
and the backward dual system with its exterior flux.  States are modal coefficient
vectors against the retained eigenfunctions.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import ClassVar, Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import linalg

from src.numerics.errors import ContractError, DomainError
from src.numerics.modal_dynamics import (
    DampingSpectrum,
    ModeRegime,
    Overdamped,
    coeff_A,
    coeff_B,
    coeff_C,
    coeff_D,
    d2A,
    d2B,
    d3B,
    dA,
    dB,
    dC,
    dD,
)
from src.numerics.nonlocal_ops import ExteriorProfile, FluxVector, modal_flux_pairing
from src.numerics.quadrature import adaptive_integral
from src.numerics.spectral_core import SpectralBasis, StiffnessSystem

logger = logging.getLogger(__name__)

ProfileKind = Literal["polynomial", "sine", "hann"]
_BUMP = Polynomial([0, 0, 0, 0, 1]) * Polynomial([1, -1]) ** 4 * 256.0
_BUMP_DERIVATIVES = tuple(_BUMP.deriv(k) if k else _BUMP for k in range(9))


@dataclass(frozen=True)
class TimeProfile:
    """Smooth bump supported on [t0, t1] with peak value ``amplitude``.

    polynomial: 256 σ⁴(1-σ)⁴, sine: sin⁴(πσ); both vanish to third order at the
    support ends.  hann: sin²(πσ), only C¹, kept to exercise the admissibility check.
    """

    kind: ProfileKind
    t0: float
    t1: float
    amplitude: float = 1.0
    VANISHING_ORDER: ClassVar[Dict[str, int]] = {"polynomial": 3, "sine": 3, "hann": 1}

    def __post_init__(self):
        if self.kind not in self.VANISHING_ORDER:
            raise DomainError(f"unknown time profile kind {self.kind!r}")
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)) or self.t1 <= self.t0:
            raise DomainError(f"time profile needs t0 < t1, got [{self.t0}, {self.t1}]")

    @property
    def width(self) -> float:
        return self.t1 - self.t0

    @property
    def vanishing_order(self) -> int:
        return self.VANISHING_ORDER[self.kind]

    def scaled(self, factor: float) -> "TimeProfile":
        return TimeProfile(self.kind, self.t0, self.t1, self.amplitude * factor)

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        sigma = (t - self.t0) / self.width
        inside = (sigma >= 0.0) & (sigma <= 1.0)
        sig = np.clip(sigma, 0.0, 1.0)
        if self.kind == "polynomial":
            raw = _BUMP_DERIVATIVES[order](sig)
        else:
            shift = order * np.pi / 2
            if self.kind == "sine":
                raw = (3.0 * (order == 0) - 4.0 * (2 * np.pi) ** order * np.cos(2 * np.pi * sig + shift)
                       + (4 * np.pi) ** order * np.cos(4 * np.pi * sig + shift)) / 8.0
            else:
                raw = (1.0 * (order == 0) - (2 * np.pi) ** order * np.cos(2 * np.pi * sig + shift)) / 2.0
        return np.where(inside, self.amplitude * raw / self.width ** order, 0.0)

    def sup(self, order: int = 0, samples: int = 401) -> float:
        return float(np.max(np.abs(self(np.linspace(self.t0, self.t1, samples), order))))


@dataclass(frozen=True, eq=False)
class ExteriorControl:
    """g(x, t) = Σ spatial_j(x) q_j(t) on the exterior, horizon T."""

    terms: Tuple[Tuple[ExteriorProfile, TimeProfile], ...]
    T: float

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise DomainError(f"horizon must be positive, got {self.T}")
        object.__setattr__(self, "terms", tuple(self.terms))
        for _, q in self.terms:
            if q.t0 < 0 or q.t1 > self.T:
                raise ContractError(f"time profile support [{q.t0}, {q.t1}] leaves [0, {self.T}]")
            if q.vanishing_order < 2:
                raise ContractError(f"time profile kind {q.kind!r} is not C² at its support ends")
            scale = max(1.0, abs(q.amplitude))
            start = [abs(float(q(0.0, k))) for k in range(3)]
            end = [abs(float(q(self.T, k))) for k in range(2)]
            if max(start + end) > 1e-12 * scale:
                raise ContractError("control does not vanish to second order at t = 0 or to first order at t = T")

    @classmethod
    def zero(cls, T: float) -> "ExteriorControl":
        return cls((), T)

    @property
    def profiles(self) -> Tuple[TimeProfile, ...]:
        return tuple(q for _, q in self.terms)

    def evaluate(self, t: float, order: int = 0) -> Optional[ExteriorProfile]:
        """∂_t^order g(·, t) as an exterior profile; None without terms."""
        if not self.terms:
            return None
        grid = self.terms[0][0].grid
        values = sum(float(q(t, order)) * p.values for p, q in self.terms)
        return ExteriorProfile(np.asarray(values, dtype=float), grid)

    def scaled(self, factor: float) -> "ExteriorControl":
        return ExteriorControl(tuple((p, q.scaled(factor)) for p, q in self.terms), self.T)


@dataclass(frozen=True, eq=False)
class StatePair:
    u_coeffs: np.ndarray
    ut_coeffs: np.ndarray
    t: float
    exterior_trace: Optional[ExteriorProfile] = None

    def __post_init__(self):
        u = np.asarray(self.u_coeffs, dtype=float)
        ut = np.asarray(self.ut_coeffs, dtype=float)
        if u.shape != ut.shape:
            raise DomainError("state components have different lengths")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
            raise DomainError("state has non-finite coefficients")
        object.__setattr__(self, "u_coeffs", u)
        object.__setattr__(self, "ut_coeffs", ut)

    def __add__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.u_coeffs + other.u_coeffs, self.ut_coeffs + other.ut_coeffs, self.t,
                         self.exterior_trace or other.exterior_trace)


def energy(state: StatePair, lambdas: np.ndarray) -> float:
    """‖u‖²_{+s} + ‖u_t‖²_0."""
    lam = lambdas[: state.u_coeffs.size]
    return float(np.sum(lam * state.u_coeffs ** 2) + np.sum(state.ut_coeffs ** 2))


def _as_modal(x, m: int) -> np.ndarray:
    v = np.zeros(m) if x is None else np.asarray(x, dtype=float)
    if v.shape != (m,):
        raise DomainError(f"expected {m} modal coefficients, got shape {v.shape}")
    return v


def solve_homogeneous(u0, u1, spectrum: DampingSpectrum, t: float) -> StatePair:
    m = spectrum.m
    u0, u1 = _as_modal(u0, m), _as_modal(u1, m)
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    A = np.array([coeff_A(r, t) for r in spectrum.regimes])
    B = np.array([coeff_B(r, t) for r in spectrum.regimes])
    A1 = np.array([dA(r, t) for r in spectrum.regimes])
    B1 = np.array([dB(r, t) for r in spectrum.regimes])
    return StatePair(A * u0 + B * u1, A1 * u0 + B1 * u1, float(t))


# ----- Duhamel series -----

def duhamel_response(
    regime: ModeRegime,
    lam: float,
    profile: TimeProfile,
    t: float,
    method: Literal["parts", "direct"] = "parts",
) -> Tuple[float, float]:
    """(v, v_t) at t of one mode driven by a unit flux pairing with time profile q.

    parts:  v = (∫₀ᵗ q''(τ) B(t-τ) dτ - q(t)) / λ
    direct: v = ∫₀ᵗ q(τ) B''(t-τ) dτ / λ
    """
    hi = min(t, profile.t1)
    if hi <= profile.t0:
        return 0.0, 0.0
    tol = 1e-10 * max(1.0, profile.sup(2 if method == "parts" else 0) / lam)
    points = None
    if isinstance(regime, Overdamped):
        points = [t - k * regime.decay_length for k in (1, 2, 4, 8)]

    if method == "parts":
        f = lambda tau: profile(tau, 2) * coeff_B(regime, t - tau)
        fp = lambda tau: profile(tau, 2) * dB(regime, t - tau)
        v = adaptive_integral(f, profile.t0, hi, tol, points=points) - float(profile(t))
        vt = adaptive_integral(fp, profile.t0, hi, tol, points=points) - float(profile(t, 1))
    elif method == "direct":
        f = lambda tau: profile(tau) * d2B(regime, t - tau)
        fp = lambda tau: profile(tau) * d3B(regime, t - tau)
        v = adaptive_integral(f, profile.t0, hi, tol, points=points)
        vt = adaptive_integral(fp, profile.t0, hi, tol, points=points) - regime.damping * float(profile(t))
    else:
        raise DomainError(f"unknown Duhamel method {method!r}")
    return v / lam, vt / lam


def modal_responses(
    spectrum: DampingSpectrum,
    profiles: Sequence[TimeProfile],
    t: float,
    method: Literal["parts", "direct"] = "parts",
    threads: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Unit responses, arrays (m, len(profiles)) for v and v_t."""

    def one_mode(j):
        r, lam = spectrum.regimes[j], spectrum.lambdas[j]
        return [duhamel_response(r, lam, q, t, method) for q in profiles]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one_mode, range(spectrum.m)))
    else:
        rows = [one_mode(j) for j in range(spectrum.m)]
    out = np.array(rows, dtype=float).reshape(spectrum.m, len(profiles), 2)
    return out[..., 0], out[..., 1]


def control_pairings(g: ExteriorControl, basis: SpectralBasis, sys: StiffnessSystem) -> np.ndarray:
    """P[n, j] = (spatial_j, N_s φ_n) for every term of g."""
    if not g.terms:
        return np.zeros((basis.m, 0))
    return np.column_stack([modal_flux_pairing(p, basis, sys) for p, _ in g.terms])


def solve_controlled(
    g: ExteriorControl,
    basis: SpectralBasis,
    sys: StiffnessSystem,
    spectrum: DampingSpectrum,
    t: float,
    method: Literal["parts", "direct"] = "parts",
    threads: int = 1,
    pairings: Optional[np.ndarray] = None,
) -> StatePair:
    """Modal coefficients of the solution with zero initial data and exterior datum g."""
    m = spectrum.m
    if not 0 <= t <= g.T:
        raise DomainError(f"time {t} outside [0, {g.T}]")
    if not g.terms:
        return StatePair(np.zeros(m), np.zeros(m), float(t))
    P = control_pairings(g, basis, sys) if pairings is None else pairings
    P = P[:m]
    V, Vt = modal_responses(spectrum, g.profiles, t, method, threads)
    u, ut = np.sum(P * V, axis=1), np.sum(P * Vt, axis=1)
    tail = np.max(np.abs(P[-1])) / spectrum.lambdas[-1]
    logger.debug("series tail estimate |p_m|/λ_m = %.3e", tail)
    return StatePair(u, ut, float(t), g.evaluate(t))


def solve_full(
    u0, u1, g: ExteriorControl, basis: SpectralBasis, sys: StiffnessSystem, spectrum: DampingSpectrum, t: float,
    **kwargs,
) -> StatePair:
    homogeneous = solve_homogeneous(u0, u1, spectrum, t)
    controlled = solve_controlled(g, basis, sys, spectrum, t, **kwargs)
    return StatePair(homogeneous.u_coeffs + controlled.u_coeffs, homogeneous.ut_coeffs + controlled.ut_coeffs,
                     float(t), controlled.exterior_trace)


# ----- dual system -----

def solve_dual(psi0, psi1, spectrum: DampingSpectrum, T: float, t: float) -> StatePair:
    """ψ_n(t) = C_n(T-t) ψ0_n + D_n(T-t) ψ1_n and its time derivative."""
    m = spectrum.m
    psi0, psi1 = _as_modal(psi0, m), _as_modal(psi1, m)
    if not 0 <= t <= T:
        raise DomainError(f"time {t} outside [0, {T}]")
    tau = T - t
    C = np.array([coeff_C(r, tau) for r in spectrum.regimes])
    D = np.array([coeff_D(r, tau) for r in spectrum.regimes])
    C1 = np.array([dC(r, tau) for r in spectrum.regimes])
    D1 = np.array([dD(r, tau) for r in spectrum.regimes])
    # d/dt of f(T - t) is -f'(T - t)
    return StatePair(C * psi0 + D * psi1, -(C1 * psi0 + D1 * psi1), float(t))


def dual_acceleration(psi0, psi1, spectrum: DampingSpectrum, T: float, t: float) -> np.ndarray:
    tau = T - t
    C2 = np.array([d2A(r, tau) for r in spectrum.regimes])
    D2 = np.array([-d2B(r, tau) for r in spectrum.regimes])
    return C2 * _as_modal(psi0, spectrum.m) + D2 * _as_modal(psi1, spectrum.m)


def dual_flux(psi0, psi1, flux_table: np.ndarray, x: np.ndarray, spectrum: DampingSpectrum, T: float,
              t: float) -> FluxVector:
    """N_s ψ(·, t) at the exterior points x; row p of the N_s φ_n table belongs to x[p]."""
    x = np.asarray(x, dtype=float)
    if flux_table.shape[0] != x.size:
        raise DomainError(f"flux table has {flux_table.shape[0]} rows for {x.size} points")
    psi = solve_dual(psi0, psi1, spectrum, T, t).u_coeffs
    return FluxVector(flux_table[:, : spectrum.m] @ psi, x)


@dataclass(frozen=True)
class DualEnergyReport:
    energy_constant: float
    acceleration_constant: float
    flux_constant: float

    def to_lines(self) -> list:
        return [f"dual_energy_constant: {self.energy_constant:.17g}",
                f"dual_acceleration_constant: {self.acceleration_constant:.17g}",
                f"dual_flux_constant: {self.flux_constant:.17g}"]


def dual_energy_audit(psi0, psi1, spectrum: DampingSpectrum, T: float, n_t: int = 100,
                      flux_table: Optional[np.ndarray] = None, cell_width: float = 1.0) -> DualEnergyReport:
    """Empirical constants of the dual energy, acceleration and flux estimates."""
    lam = spectrum.lambdas
    psi0, psi1 = _as_modal(psi0, spectrum.m), _as_modal(psi1, spectrum.m)
    data = float(np.sum(lam * psi0 ** 2) + np.sum(psi1 ** 2))
    if data == 0:
        return DualEnergyReport(0.0, 0.0, 0.0)
    e_max = acc_max = flux_max = 0.0
    for t in np.linspace(0.0, T, n_t):
        state = solve_dual(psi0, psi1, spectrum, T, t)
        e_max = max(e_max, float(np.sum(lam * state.u_coeffs ** 2) + np.sum(state.ut_coeffs ** 2)))
        acc = dual_acceleration(psi0, psi1, spectrum, T, t)
        acc_max = max(acc_max, float(np.sum(acc ** 2 / lam)))
        if flux_table is not None:
            fl = flux_table[:, : spectrum.m] @ state.u_coeffs
            flux_max = max(flux_max, float(cell_width * np.sum(fl ** 2)))
    report = DualEnergyReport(e_max / data, acc_max / data, flux_max / data)
    logger.info("dual energy constant %.4e, acceleration %.4e", report.energy_constant, report.acceleration_constant)
    return report


# ----- audits -----

@dataclass(frozen=True)
class DissipativityReport:
    delta: float
    trials: int
    max_ratio: float
    passed: bool

    def to_lines(self) -> list:
        return [f"dissipativity_delta: {self.delta:.17g}", f"dissipativity_trials: {self.trials}",
                f"dissipativity_max_ratio: {self.max_ratio:.17g}", f"dissipativity_passed: {self.passed}"]


def dissipativity_audit(sys: StiffnessSystem, delta: float, trials: int = 1000, seed: int = 0) -> DissipativityReport:
    """⟨B_δ U, U⟩ ≤ 0 in the energy inner product, B_δ = -A_δ - I, on random pairs."""
    if delta < 0:
        raise DomainError(f"damping must be nonnegative, got {delta}")
    rng = np.random.default_rng(seed)
    K, M = sys.K, sys.M
    mass_factor = linalg.cho_factor(M)
    worst = -np.inf
    for _ in range(trials):
        u1, u2 = rng.standard_normal(K.shape[0]), rng.standard_normal(K.shape[0])
        # A_δ U = (-u2, M⁻¹K(u1 + δ u2))
        b1 = u2 - u1
        b2 = -linalg.cho_solve(mass_factor, K @ (u1 + delta * u2)) - u2
        inner = b1 @ (M + K) @ u1 + b2 @ M @ u2
        size = u1 @ (M + K) @ u1 + u2 @ M @ u2
        worst = max(worst, float(inner / size))
    return DissipativityReport(float(delta), trials, worst, bool(worst <= 1e-10))


@dataclass(frozen=True, eq=False)
class RegularityReport:
    m_derivative: int
    ratios: np.ndarray
    ratios_half_modes: np.ndarray
    trending_up: bool

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if self.ratios.size else 0.0

    def to_lines(self) -> list:
        return [f"regularity_order: {self.m_derivative}", f"regularity_max_ratio: {self.max_ratio:.17g}",
                f"regularity_max_ratio_half_modes: {float(np.max(self.ratios_half_modes, initial=0.0)):.17g}",
                f"regularity_trending_up: {self.trending_up}"]


def regularity_audit(
    g: ExteriorControl,
    basis: SpectralBasis,
    sys: StiffnessSystem,
    spectrum: DampingSpectrum,
    m_derivative: int = 0,
    t_lattice: Optional[Sequence[float]] = None,
) -> RegularityReport:
    """Ratio ‖∂_t^m v(t)‖_0 / (sup‖∂_t^(m+2) g‖ + ‖∂_t^m g(t)‖) over a time lattice."""
    if m_derivative not in (0, 1, 2):
        raise DomainError(f"derivative order must be 0, 1 or 2, got {m_derivative}")
    t_lat = np.linspace(0.0, g.T, 21) if t_lattice is None else np.asarray(t_lattice, dtype=float)
    if not g.terms:
        z = np.zeros(t_lat.size)
        return RegularityReport(m_derivative, z, z, False)
    P = control_pairings(g, basis, sys)
    norms = np.array([p.l2_norm() for p, _ in g.terms])
    sup_high = float(sum(n * q.sup(m_derivative + 2) for n, (_, q) in zip(norms, g.terms)))

    def ratios_for(ds: DampingSpectrum) -> np.ndarray:
        out = []
        Pm = P[: ds.m]
        for t in t_lat:
            V, Vt = modal_responses(ds, g.profiles, t)
            v, vt = np.sum(Pm * V, axis=1), np.sum(Pm * Vt, axis=1)
            if m_derivative == 0:
                lhs = v
            elif m_derivative == 1:
                lhs = vt
            else:
                forcing = Pm @ np.array([float(q(t) + ds.delta * q(t, 1)) for q in g.profiles])
                lhs = -forcing - ds.delta * ds.lambdas * vt - ds.lambdas * v
            rhs = sup_high + float(sum(n * abs(float(q(t, m_derivative))) for n, (_, q) in zip(norms, g.terms)))
            out.append(np.linalg.norm(lhs) / rhs if rhs > 0 else 0.0)
        return np.array(out)

    full = ratios_for(spectrum)
    half = ratios_for(spectrum.truncated(max(1, spectrum.m // 2)))
    trending = bool(np.max(full) > 1.5 * max(np.max(half), np.finfo(float).tiny))
    if trending:
        logger.info("regularity ratio grows with mode count: %.3e -> %.3e", np.max(half), np.max(full))
    return RegularityReport(m_derivative, full, half, trending)
