"""Per-mode temporal machinery for w'' + δλ w' + λ w = 0.

A_n solves it with (w, w') = (1, 0) at t = 0, B_n with (0, 1).  Each regime stores the
characteristic roots; all derivatives are closed-form.
"""

import logging
from dataclasses import dataclass, field
from typing import ClassVar, Dict, Literal, Sequence, Tuple, Union

import numpy as np

from src.numerics.errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Oscillatory:
    alpha: float
    beta: float
    kind: ClassVar[str] = "oscillatory"

    @property
    def damping(self) -> float:
        return -2.0 * self.alpha

    @property
    def stiffness(self) -> float:
        return self.alpha ** 2 + self.beta ** 2

    def exponents(self) -> Tuple[complex, complex]:
        return complex(self.alpha, self.beta), complex(self.alpha, -self.beta)


@dataclass(frozen=True)
class Overdamped:
    lambda_plus: float
    lambda_minus: float
    kind: ClassVar[str] = "overdamped"

    @property
    def damping(self) -> float:
        return -(self.lambda_plus + self.lambda_minus)

    @property
    def stiffness(self) -> float:
        return self.lambda_plus * self.lambda_minus

    @property
    def decay_length(self) -> float:
        return 1.0 / abs(self.lambda_minus)

    def exponents(self) -> Tuple[complex, complex]:
        return complex(self.lambda_plus), complex(self.lambda_minus)


@dataclass(frozen=True)
class Critical:
    root: float
    kind: ClassVar[str] = "critical"

    @property
    def damping(self) -> float:
        return -2.0 * self.root

    @property
    def stiffness(self) -> float:
        return self.root ** 2

    def exponents(self) -> Tuple[complex, complex]:
        return complex(self.root), complex(self.root)


ModeRegime = Union[Oscillatory, Overdamped, Critical]


@dataclass(frozen=True, eq=False)
class DampingSpectrum:
    delta: float
    regimes: Tuple[ModeRegime, ...]
    n0: int
    lambdas: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.regimes)

    @property
    def accumulation_point(self) -> float:
        """Limit of λ_n^+ as n grows (−1/δ); -inf when undamped."""
        return -1.0 / self.delta if self.delta > 0 else -np.inf

    def truncated(self, m: int) -> "DampingSpectrum":
        return DampingSpectrum(self.delta, self.regimes[:m], min(self.n0, m), self.lambdas[:m])


def classify_mode(delta: float, lam: float, tol: float = 1e-12) -> ModeRegime:
    disc = delta ** 2 * lam ** 2 - 4.0 * lam
    if abs(disc) <= tol * lam ** 2:
        return Critical(-0.5 * delta * lam)
    if disc < 0:
        return Oscillatory(-0.5 * delta * lam, 0.5 * np.sqrt(-disc))
    root = np.sqrt(disc)
    # λ^+ from the product of roots to avoid cancellation
    lam_minus = 0.5 * (-delta * lam - root)
    return Overdamped(lam / lam_minus, lam_minus)


def classify(delta: float, lambdas: Sequence[float], tol: float = 1e-12) -> DampingSpectrum:
    """Regime of every mode from the sign of D = δ²λ² − 4λ."""
    if not np.isfinite(delta) or delta < 0:
        raise DomainError(f"damping must be a finite nonnegative number, got {delta}")
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= 0) or np.any(np.diff(lam) < 0):
        raise DomainError("eigenvalues must be positive and ascending")
    regimes = tuple(classify_mode(delta, x, tol) for x in lam)
    n0 = 0
    for r in regimes:
        if not isinstance(r, Oscillatory):
            break
        n0 += 1
    return DampingSpectrum(float(delta), regimes, n0, lam)


# ----- coefficient functions -----

def _b_derivative(regime: ModeRegime, t, order: int):
    t = np.asarray(t, dtype=float)
    if isinstance(regime, Oscillatory):
        a, b = regime.alpha, regime.beta
        env = np.exp(a * t) / b
        sn, cs = np.sin(b * t), np.cos(b * t)
        if order == 0:
            return env * sn
        if order == 1:
            return env * (a * sn + b * cs)
        if order == 2:
            return env * ((a * a - b * b) * sn + 2 * a * b * cs)
        return env * ((a ** 3 - 3 * a * b * b) * sn + (3 * a * a * b - b ** 3) * cs)
    if isinstance(regime, Overdamped):
        lp, lm = regime.lambda_plus, regime.lambda_minus
        gap = lm - lp
        if order == 0:
            return np.exp(lp * t) * np.expm1(gap * t) / gap
        return (lm ** order * np.exp(lm * t) - lp ** order * np.exp(lp * t)) / gap
    r = regime.root
    e = np.exp(r * t)
    # d^k/dt^k (t e^{rt}) = (k r^(k-1) + r^k t) e^{rt}
    return (order * r ** (order - 1) + r ** order * t) * e if order else t * e


def _a_derivative(regime: ModeRegime, t, order: int):
    t = np.asarray(t, dtype=float)
    if isinstance(regime, Oscillatory):
        a, b = regime.alpha, regime.beta
        env = np.exp(a * t)
        sn, cs = np.sin(b * t), np.cos(b * t)
        if order == 0:
            return env * (cs - (a / b) * sn)
        if order == 1:
            return -env * (a * a + b * b) / b * sn
        return -env * (a * a + b * b) / b * (a * sn + b * cs)
    if isinstance(regime, Overdamped):
        lp, lm = regime.lambda_plus, regime.lambda_minus
        return (lm * lp ** order * np.exp(lp * t) - lp * lm ** order * np.exp(lm * t)) / (lm - lp)
    r = regime.root
    e = np.exp(r * t)
    if order == 0:
        return (1.0 - r * t) * e
    if order == 1:
        return -r * r * t * e
    return -(r * r + r ** 3 * t) * e


def coeff_A(regime: ModeRegime, t):
    return _a_derivative(regime, t, 0)


def dA(regime: ModeRegime, t):
    return _a_derivative(regime, t, 1)


def d2A(regime: ModeRegime, t):
    return _a_derivative(regime, t, 2)


def coeff_B(regime: ModeRegime, t):
    return _b_derivative(regime, t, 0)


def dB(regime: ModeRegime, t):
    return _b_derivative(regime, t, 1)


def d2B(regime: ModeRegime, t):
    return _b_derivative(regime, t, 2)


def d3B(regime: ModeRegime, t):
    return _b_derivative(regime, t, 3)


def coeff_C(regime: ModeRegime, t):
    return coeff_A(regime, t)


def dC(regime: ModeRegime, t):
    return dA(regime, t)


def coeff_D(regime: ModeRegime, t):
    return -coeff_B(regime, t)


def dD(regime: ModeRegime, t):
    return -dB(regime, t)


def ode_residual(regime: ModeRegime, lam: float, delta: float, f: Literal["A", "B"], t_samples) -> float:
    """max |f'' + λ f + δλ f'| / (λ max |f|) over the samples."""
    t = np.asarray(t_samples, dtype=float)
    if f == "A":
        v, v1, v2 = coeff_A(regime, t), dA(regime, t), d2A(regime, t)
    elif f == "B":
        v, v1, v2 = coeff_B(regime, t), dB(regime, t), d2B(regime, t)
    else:
        raise DomainError(f"f must be 'A' or 'B', got {f!r}")
    scale = lam * max(np.max(np.abs(v)), np.finfo(float).tiny)
    return float(np.max(np.abs(v2 + lam * v + delta * lam * v1)) / scale)


# ----- bound audit -----

@dataclass(frozen=True, eq=False)
class BoundAudit:
    delta: float
    n0: int
    maxima: Dict[str, np.ndarray]
    slopes: Dict[str, float]
    growing: Tuple[str, ...]
    bound_delta_squared: float
    bound_delta_linear: float

    def to_lines(self) -> list:
        lines = [f"delta: {self.delta:.17g}", f"n0: {self.n0}"]
        for name, values in self.maxima.items():
            lines.append(f"max_{name}: {values.max():.17g}")
            lines.append(f"slope_{name}: {self.slopes[name]:.17g}")
        lines.append(f"growing_families: {','.join(self.growing) or 'none'}")
        lines.append(f"bound_lambda_B_squared: {self.bound_delta_squared:.17g}")
        lines.append(f"bound_lambda_B_squared_linear_delta: {self.bound_delta_linear:.17g}")
        return lines


def bound_audit(spectrum: DampingSpectrum, lambdas: Sequence[float], T: float, n_t: int = 200) -> BoundAudit:
    """Empirical maxima over the (n, t) lattice of the coefficient families."""
    lam = np.asarray(lambdas, dtype=float)[: spectrum.m]
    t = np.linspace(0.0, T, n_t)
    fam = {k: [] for k in ("lambda_B", "sqrt_lambda_B", "C", "sqrt_lambda_C", "dC", "dD", "sqrt_lambda_dD")}
    for r, x in zip(spectrum.regimes, lam):
        A, A1 = coeff_A(r, t), dA(r, t)
        B, B1 = coeff_B(r, t), dB(r, t)
        fam["lambda_B"].append(np.max(np.abs(x * B)))
        fam["sqrt_lambda_B"].append(np.max(np.abs(np.sqrt(x) * B)))
        fam["C"].append(np.max(np.abs(A)))
        fam["sqrt_lambda_C"].append(np.max(np.abs(np.sqrt(x) * A)))
        fam["dC"].append(np.max(np.abs(A1)))
        fam["dD"].append(np.max(np.abs(B1)))
        fam["sqrt_lambda_dD"].append(np.max(np.abs(np.sqrt(x) * B1)))
    maxima = {k: np.array(v) for k, v in fam.items()}

    n = np.arange(1, spectrum.m + 1)
    tail = n > spectrum.n0
    if tail.sum() < 2:
        # no overdamped tail: fit over every mode
        tail = np.ones_like(tail)
    slopes = {}
    for k, v in maxima.items():
        slopes[k] = float(np.polyfit(n[tail], v[tail], 1)[0]) if tail.sum() >= 2 else 0.0
    growing = tuple(k for k, sl in slopes.items() if sl > 1e-12 * max(1.0, maxima[k].max()))

    d = spectrum.delta
    l1 = lam[0]
    sq = 4.0 * l1 / (d * d * l1 - 4.0) if d * d * l1 > 4.0 else np.inf
    lin = 4.0 * l1 / (d * l1 - 4.0) if d * l1 > 4.0 else np.inf
    if d > 0:
        logger.info("overdamped |λB|² bound: %.6g (δ² form), %.6g (δ form)", sq, lin)
    if growing:
        logger.info("coefficient families growing with n: %s", ", ".join(growing))
    return BoundAudit(d, spectrum.n0, maxima, slopes, growing, sq, lin)


def coefficient_trace(spectrum: DampingSpectrum, t: Sequence[float]) -> list:
    """Rows (n, t, A, B, Bp, Bpp, regime) for the trace table."""
    rows = []
    t = np.asarray(t, dtype=float)
    for j, r in enumerate(spectrum.regimes):
        A, B, B1, B2 = coeff_A(r, t), coeff_B(r, t), dB(r, t), d2B(r, t)
        for k in range(t.size):
            rows.append((j + 1, t[k], A[k], B[k], B1[k], B2[k], r.kind))
    return rows
