"""Controllability experiments on top of the series solutions.

Duality bookkeeping, approximate control by weighted Tikhonov least squares, the
moment system behind the failure of null controllability under strong damping, the
exponential form of the dual solution and the flux Gram test for unique continuation.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.numerics.errors import DomainError, RegularizationRequiredError
from src.numerics.evolution import (
    ExteriorControl,
    StatePair,
    TimeProfile,
    control_pairings,
    modal_responses,
    solve_dual,
    solve_full,
    solve_homogeneous,
)
from src.numerics.modal_dynamics import (
    Critical,
    DampingSpectrum,
    Oscillatory,
    Overdamped,
    classify,
    coeff_C,
    coeff_D,
)
from src.numerics.nonlocal_ops import ExteriorProfile, mode_flux_table, modal_flux_pairing
from src.numerics.quadrature import adaptive_integral, gauss_legendre
from src.numerics.spectral_core import Grid1D, SpectralBasis, StiffnessSystem, norm

logger = logging.getLogger(__name__)

Region = Sequence[Tuple[float, float]]


def region_cells(grid: Grid1D, region: Region) -> np.ndarray:
    """Exterior cells whose midpoints fall in the union of the region's intervals."""
    cells = []
    for lo, hi in region:
        if lo >= hi:
            raise DomainError(f"empty control interval [{lo}, {hi}]")
        if hi > grid.a and lo < grid.b:
            raise DomainError(f"control interval [{lo}, {hi}] meets the closed domain [{grid.a}, {grid.b}]")
        cells.extend(grid.cells_in(lo, hi).tolist())
    cells = np.unique(np.asarray(cells, dtype=int))
    if cells.size == 0:
        raise DomainError("control region contains no exterior cell")
    return cells


def bump_family(T: float, n_profiles: int, kind: str = "polynomial") -> Tuple[TimeProfile, ...]:
    """n overlapping bumps of width 2T/(n+1) covering [0, T]."""
    if n_profiles < 1:
        raise DomainError("need at least one time profile")
    w = 2.0 * T / (n_profiles + 1)
    return tuple(TimeProfile(kind, 0.5 * k * w, min(T, 0.5 * k * w + w)) for k in range(n_profiles))


@dataclass(frozen=True, eq=False)
class ControlAnsatz:
    """Finite family of separable controls: exterior cell (or pooled region) × time bump."""

    grid: Grid1D
    spatial_cells: Tuple[int, ...]
    temporal_basis: Tuple[TimeProfile, ...]
    pooled: bool = False
    coefficients: Optional[np.ndarray] = None

    def __post_init__(self):
        cells = tuple(int(c) for c in self.spatial_cells)
        if any(c < 0 or c >= self.grid.n_cells for c in cells):
            raise DomainError("ansatz cell index outside the exterior grid")
        object.__setattr__(self, "spatial_cells", cells)
        object.__setattr__(self, "temporal_basis", tuple(self.temporal_basis))
        if self.coefficients is not None:
            c = np.asarray(self.coefficients, dtype=float).reshape(self.n_spatial, self.n_profiles)
            object.__setattr__(self, "coefficients", c)

    @classmethod
    def build(cls, grid: Grid1D, region: Region, n_profiles: int, T: float,
              kind: str = "polynomial", pooled: bool = False) -> "ControlAnsatz":
        return cls(grid, tuple(region_cells(grid, region)), bump_family(T, n_profiles, kind), pooled)

    @classmethod
    def spatial(cls, grid: Grid1D, region: Region, pooled: bool = False) -> "ControlAnsatz":
        """Region cells with no time profiles yet; grow it with ``enlarged``."""
        return cls(grid, tuple(region_cells(grid, region)), (), pooled)

    @property
    def n_spatial(self) -> int:
        if not self.spatial_cells:
            return 0
        return 1 if self.pooled else len(self.spatial_cells)

    @property
    def n_profiles(self) -> int:
        return len(self.temporal_basis)

    @property
    def size(self) -> int:
        return self.n_spatial * self.n_profiles

    def spatial_profiles(self) -> List[ExteriorProfile]:
        if self.pooled:
            return [ExteriorProfile.indicator(self.grid, self.spatial_cells)] if self.spatial_cells else []
        return [ExteriorProfile.indicator(self.grid, [c]) for c in self.spatial_cells]

    def with_coefficients(self, flat: np.ndarray) -> "ControlAnsatz":
        return replace(self, coefficients=np.asarray(flat, dtype=float).reshape(self.n_spatial, self.n_profiles))

    def enlarged(self, T: float, n_profiles: int, kind: Optional[str] = None) -> "ControlAnsatz":
        """The same ansatz with the bumps of ``bump_family(T, n_profiles)`` appended.

        Profiles already present are skipped, so the old family is a prefix of the new one.
        """
        if kind is None:
            kind = self.temporal_basis[0].kind if self.temporal_basis else "polynomial"
        seen = {(q.kind, q.t0, q.t1) for q in self.temporal_basis}
        extra = tuple(q for q in bump_family(T, n_profiles, kind) if (q.kind, q.t0, q.t1) not in seen)
        return replace(self, temporal_basis=self.temporal_basis + extra, coefficients=None)

    def embed(self, other: "ControlAnsatz") -> np.ndarray:
        """Flat coefficients of ``other`` in this ansatz, zero on the profiles it lacks."""
        k = other.n_profiles
        if (other.spatial_cells != self.spatial_cells or other.pooled != self.pooled
                or other.temporal_basis != self.temporal_basis[:k]):
            raise DomainError("prior ansatz is not nested in this one")
        if other.coefficients is None:
            raise DomainError("prior ansatz has no coefficients")
        c = np.zeros((self.n_spatial, self.n_profiles))
        c[:, :k] = other.coefficients
        return c.ravel()

    def to_control(self, T: float) -> ExteriorControl:
        if self.coefficients is None:
            raise DomainError("ansatz has no coefficients")
        terms = []
        for i, p in enumerate(self.spatial_profiles()):
            for k, q in enumerate(self.temporal_basis):
                if self.coefficients[i, k] != 0:
                    terms.append((p, q.scaled(self.coefficients[i, k])))
        return ExteriorControl(tuple(terms), T)


def _spatial_pairings(ansatz: ControlAnsatz, basis: SpectralBasis, sys: StiffnessSystem, m: int) -> np.ndarray:
    profiles = ansatz.spatial_profiles()
    if not profiles:
        return np.zeros((m, 0))
    return np.column_stack([modal_flux_pairing(p, basis, sys)[:m] for p in profiles])


def _gauss_nodes(profile: TimeProfile, order: int):
    return gauss_legendre(order, profile.t0, profile.t1)


def _forcing(profile: TimeProfile, delta: float, t: np.ndarray) -> np.ndarray:
    """q + δq' in closed form."""
    return profile(t) + delta * profile(t, 1)


# ----- reachability -----

@dataclass(frozen=True, eq=False)
class ReachabilityMap:
    matrix: np.ndarray
    u_rows: np.ndarray
    ut_rows: np.ndarray
    ut_weights: np.ndarray

    def weighted_target(self, target: StatePair) -> np.ndarray:
        m = self.u_rows.shape[0]
        return np.concatenate([target.u_coeffs[:m], self.ut_weights * target.ut_coeffs[:m]])


def _assemble_map(P: np.ndarray, V: np.ndarray, Vt: np.ndarray, lambdas: np.ndarray) -> ReachabilityMap:
    m = P.shape[0]
    U = np.einsum("ni,nk->nik", P, V).reshape(m, -1)
    Ut = np.einsum("ni,nk->nik", P, Vt).reshape(m, -1)
    weights = lambdas[:m] ** -0.5
    return ReachabilityMap(np.vstack([U, weights[:, None] * Ut]), U, Ut, weights)


def reachability_map(ansatz: ControlAnsatz, basis: SpectralBasis, sys: StiffnessSystem,
                     spectrum: DampingSpectrum, T: float, threads: int = 1) -> ReachabilityMap:
    """Final modal state (u(T), u_t(T)) of each ansatz element, rows weighted for L² × W^{-s}."""
    m = spectrum.m
    if ansatz.size == 0:
        z = np.zeros((m, 0))
        return ReachabilityMap(np.zeros((2 * m, 0)), z, z, spectrum.lambdas ** -0.5)
    P = _spatial_pairings(ansatz, basis, sys, m)
    V, Vt = modal_responses(spectrum, ansatz.temporal_basis, T, threads=threads)
    return _assemble_map(P, V, Vt, spectrum.lambdas)


def dual_reachability_map(ansatz: ControlAnsatz, basis: SpectralBasis, sys: StiffnessSystem,
                          spectrum: DampingSpectrum, T: float, order: int = 64) -> ReachabilityMap:
    """The same map assembled from the dual series through the duality pairing.

    ψ = (0, e_n) gives u_n(T); ψ = (e_n, 0) gives -u̇_n(T) - δλ_n u_n(T).
    """
    m = spectrum.m
    P = _spatial_pairings(ansatz, basis, sys, m)
    Dint = np.zeros((m, ansatz.n_profiles))
    Cint = np.zeros((m, ansatz.n_profiles))
    for k, q in enumerate(ansatz.temporal_basis):
        t, w = _gauss_nodes(q, order)
        f = w * _forcing(q, spectrum.delta, t)
        for n, r in enumerate(spectrum.regimes):
            Dint[n, k] = f @ coeff_D(r, T - t)
            Cint[n, k] = f @ coeff_C(r, T - t)
    V = Dint
    Vt = -spectrum.delta * spectrum.lambdas[:, None] * Dint - Cint
    return _assemble_map(P, V, Vt, spectrum.lambdas)


@dataclass(frozen=True, eq=False)
class ControlResult:
    ansatz: ControlAnsatz
    achieved_error: float
    objective: float
    eps_reg: float

    def to_lines(self) -> list:
        return [f"ansatz_size: {self.ansatz.size}", f"eps_reg: {self.eps_reg:.17g}",
                f"achieved_error: {self.achieved_error:.17g}", f"objective: {self.objective:.17g}"]


def approximate_control(target: StatePair, ansatz: ControlAnsatz, basis: SpectralBasis, sys: StiffnessSystem,
                        spectrum: DampingSpectrum, T: float, eps_reg: float,
                        reach: Optional[ReachabilityMap] = None,
                        prior: Optional[ControlResult] = None) -> ControlResult:
    """min ‖R c − target‖² + eps_reg ‖c − c0‖² in the L² × W^{-s} metric.

    c0 is the embedded solution of a ``prior`` run on a nested smaller ansatz, zero
    without one. With a prior the achieved error cannot exceed the prior's.
    """
    if eps_reg < 0 or not np.isfinite(eps_reg):
        raise DomainError(f"eps_reg must be a finite nonnegative number, got {eps_reg}")
    if ansatz.size == 0:
        raise DomainError("ansatz is empty")
    reach = reach or reachability_map(ansatz, basis, sys, spectrum, T)
    R = reach.matrix
    y = reach.weighted_target(target)
    if not np.all(np.isfinite(y)):
        raise DomainError("target has non-finite coefficients")
    c0 = np.zeros(R.shape[1]) if prior is None else ansatz.embed(prior.ansatz)
    shifted = y - R @ c0
    if eps_reg == 0:
        if np.linalg.matrix_rank(R) < R.shape[1]:
            raise RegularizationRequiredError("reachability map is rank deficient; set eps_reg > 0")
        d = linalg.lstsq(R, shifted)[0]
    else:
        A = np.vstack([R, np.sqrt(eps_reg) * np.eye(R.shape[1])])
        d = linalg.lstsq(A, np.concatenate([shifted, np.zeros(R.shape[1])]))[0]
    if prior is not None and np.linalg.norm(R @ d - shifted) > np.linalg.norm(shifted):
        # roundoff on a near-singular map; the prior itself is the better answer
        d = np.zeros_like(d)
    c = c0 + d
    residual = R @ c - y
    error = float(np.linalg.norm(residual))
    objective = float(residual @ residual + eps_reg * d @ d)
    logger.debug("control: size %d, eps %.1e, error %.4e", ansatz.size, eps_reg, error)
    return ControlResult(ansatz.with_coefficients(c), error, objective, eps_reg)


def nested_control(target: StatePair, base: ControlAnsatz, sizes: Sequence[int], basis: SpectralBasis,
                   sys: StiffnessSystem, spectrum: DampingSpectrum, T: float, eps_reg: Sequence[float],
                   threads: int = 1, kind: str = "polynomial") -> List[Tuple[ControlAnsatz, ReachabilityMap, List[ControlResult]]]:
    """Approximate control over successive enlargements of ``base`` by bump families of the given sizes.

    Every enlargement keeps the previous profiles and starts from the previous
    coefficients, one chain per regularization weight.
    """
    out, priors, ansatz = [], [None] * len(eps_reg), base
    for n_profiles in sizes:
        ansatz = ansatz.enlarged(T, n_profiles, kind)
        reach = reachability_map(ansatz, basis, sys, spectrum, T, threads=threads)
        results = [approximate_control(target, ansatz, basis, sys, spectrum, T, eps, reach, prior)
                   for eps, prior in zip(eps_reg, priors)]
        priors = results
        out.append((ansatz, reach, results))
    return out


def null_control_attempt(u0, u1, ansatz: ControlAnsatz, basis: SpectralBasis, sys: StiffnessSystem,
                         spectrum: DampingSpectrum, T: float, eps_reg: float,
                         reach: Optional[ReachabilityMap] = None) -> ControlResult:
    """Least-squares attempt to steer (u0, u1) to rest at T."""
    free = solve_homogeneous(u0, u1, spectrum, T)
    target = StatePair(-free.u_coeffs, -free.ut_coeffs, T)
    return approximate_control(target, ansatz, basis, sys, spectrum, T, eps_reg, reach)


# ----- duality -----

def _dual_boundary(u: StatePair, psi: StatePair, spectrum: DampingSpectrum) -> float:
    lam = spectrum.lambdas
    return float(np.sum(-u.ut_coeffs * psi.u_coeffs + u.u_coeffs * psi.ut_coeffs
                        - spectrum.delta * lam * u.u_coeffs * psi.u_coeffs))


def duality_residual(u0, u1, g: ExteriorControl, psi0, psi1, basis: SpectralBasis, sys: StiffnessSystem,
                     spectrum: DampingSpectrum, T: float, order: int = 64) -> float:
    """Relative gap between the two sides of the forward/dual duality identity."""
    m = spectrum.m
    u0 = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float)
    u1 = np.zeros(m) if u1 is None else np.asarray(u1, dtype=float)
    final = solve_full(u0, u1, g, basis, sys, spectrum, T)
    start = StatePair(u0, u1, 0.0)
    lhs = _dual_boundary(final, solve_dual(psi0, psi1, spectrum, T, T), spectrum) \
        - _dual_boundary(start, solve_dual(psi0, psi1, spectrum, T, 0.0), spectrum)

    rhs = 0.0
    if g.terms:
        P = control_pairings(g, basis, sys)[:m]
        for j, q in enumerate(g.profiles):
            t, w = _gauss_nodes(q, order)
            f = w * _forcing(q, spectrum.delta, t)
            for n, r in enumerate(spectrum.regimes):
                psi_n = coeff_C(r, T - t) * psi0[n] + coeff_D(r, T - t) * psi1[n]
                rhs += P[n, j] * float(f @ psi_n)
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale < 1e-300 else abs(lhs - rhs) / scale


# ----- moment problem -----

@dataclass(frozen=True, eq=False)
class MomentSystem:
    """Rows e^{μ(T-t)}-moments of each ansatz element, two real rows per mode."""

    exponents: np.ndarray
    row_kinds: Tuple[str, ...]
    observation_rows: np.ndarray
    rhs: Optional[np.ndarray]

    def residual(self, coeffs: np.ndarray) -> np.ndarray:
        if self.rhs is None:
            raise DomainError("moment system was built without initial data")
        return self.observation_rows @ coeffs - self.rhs


def _moment_rows(regime, lam, delta, P_n, profiles, T, order, u0n, u1n):
    """Two rows and right-hand sides for one mode."""
    rows, rhs, kinds, exps = [], [], [], []
    temporal = []
    for q in profiles:
        t, w = _gauss_nodes(q, order)
        temporal.append((t, w * _forcing(q, delta, t)))

    def moments(weight):
        return np.array([f @ weight(t) for t, f in temporal])

    def initial(mu):
        return np.exp(mu * T) * (u1n + mu * u0n + delta * lam * u0n)

    if isinstance(regime, Oscillatory):
        mu = complex(regime.alpha, regime.beta)
        E = moments(lambda t: np.exp(mu * (T - t)))
        row = np.kron(P_n, E)
        b = initial(mu)
        rows += [row.real, row.imag]
        rhs += [b.real, b.imag]
        kinds += ["re", "im"]
        exps += [mu, mu.conjugate()]
    elif isinstance(regime, Overdamped):
        for mu in (regime.lambda_plus, regime.lambda_minus):
            rows.append(np.kron(P_n, moments(lambda t, mu=mu: np.exp(mu * (T - t)))))
            rhs.append(initial(mu))
            kinds.append("real")
            exps.append(complex(mu))
    else:
        r = regime.root
        rows.append(np.kron(P_n, moments(lambda t: np.exp(r * (T - t)))))
        rows.append(np.kron(P_n, moments(lambda t: (T - t) * np.exp(r * (T - t)))))
        rhs += [initial(r), T * initial(r) + np.exp(r * T) * u0n]
        kinds += ["real", "confluent"]
        exps += [complex(r), complex(r)]
    return rows, rhs, kinds, exps


def moment_matrix(spectrum: DampingSpectrum, ansatz: ControlAnsatz, basis: SpectralBasis, sys: StiffnessSystem,
                  T: float, M_modes: int, u0=None, u1=None, order: int = 64) -> MomentSystem:
    """Moment equations a null control must satisfy, for the first M_modes modes."""
    if not 1 <= M_modes <= spectrum.m:
        raise DomainError(f"M_modes must lie in 1..{spectrum.m}, got {M_modes}")
    P = _spatial_pairings(ansatz, basis, sys, M_modes)
    with_data = u0 is not None or u1 is not None
    u0 = np.zeros(M_modes) if u0 is None else np.asarray(u0, dtype=float)
    u1 = np.zeros(M_modes) if u1 is None else np.asarray(u1, dtype=float)
    rows, rhs, kinds, exps = [], [], [], []
    for n in range(M_modes):
        r_, b_, k_, e_ = _moment_rows(spectrum.regimes[n], spectrum.lambdas[n], spectrum.delta, P[n],
                                      ansatz.temporal_basis, T, order, u0[n], u1[n])
        rows += r_
        rhs += b_
        kinds += k_
        exps += e_
    return MomentSystem(np.array(exps), tuple(kinds), np.array(rows),
                        np.array(rhs, dtype=float) if with_data else None)


def moment_function(profile: TimeProfile, pairing: float, delta: float, T: float, z: complex) -> complex:
    """F(z) = pairing · ∫₀ᵀ (q + δq')(t) e^{izt} dt by adaptive quadrature."""
    z = complex(z)

    def part(t, imag):
        val = np.exp(1j * z * t) * float(_forcing(profile, delta, np.asarray(t)))
        return val.imag if imag else val.real

    lo, hi = profile.t0, min(profile.t1, T)
    re = adaptive_integral(lambda t: part(t, False), lo, hi, 1e-13, 1e-13)
    im = adaptive_integral(lambda t: part(t, True), lo, hi, 1e-13, 1e-13)
    return pairing * complex(re, im)


@dataclass(frozen=True, eq=False)
class SpectralDiagnostic:
    delta: float
    k: np.ndarray
    sigma_min: np.ndarray
    sigma_min_undamped: np.ndarray
    exponents: np.ndarray

    def decades(self, k_lo: int, k_hi: int, undamped: bool = False) -> float:
        s = self.sigma_min_undamped if undamped else self.sigma_min
        return float(np.log10(s[k_lo - 1] / s[k_hi - 1]))

    def to_lines(self) -> list:
        lines = [f"delta: {self.delta:.17g}"]
        for k, a, b in zip(self.k, self.sigma_min, self.sigma_min_undamped):
            lines.append(f"sigma_min_{k}: {a:.17g} (undamped {b:.17g})")
        return lines


def _sigma_sequence(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1)
    rows = rows / np.where(norms > 0, norms, 1.0)[:, None]
    out = []
    for k in range(1, rows.shape[0] // 2 + 1):
        sv = linalg.svdvals(rows[: 2 * k])
        out.append(sv[min(2 * k, rows.shape[1]) - 1])
    return np.array(out)


def spectral_control_diagnostic(basis: SpectralBasis, sys: StiffnessSystem, delta: float, T: float,
                                M_modes: int, ansatz: ControlAnsatz) -> SpectralDiagnostic:
    """σ_min of the row-normalized moment matrix restricted to the first k modes, k = 1..M_modes,
    at the given damping and undamped."""
    if ansatz.size < 2 * M_modes:
        logger.warning("ansatz has %d columns for %d moment rows; σ_min is then not monotone",
                       ansatz.size, 2 * M_modes)
    damped = classify(delta, basis.lambdas)
    undamped = classify(0.0, basis.lambdas)
    sys_damped = moment_matrix(damped, ansatz, basis, sys, T, M_modes)
    sys_free = moment_matrix(undamped, ansatz, basis, sys, T, M_modes)
    sig = _sigma_sequence(sys_damped.observation_rows)
    sig0 = _sigma_sequence(sys_free.observation_rows)
    logger.info("σ_min(%d)=%.3e at δ=%g, %.3e undamped", M_modes, sig[-1], delta, sig0[-1])
    return SpectralDiagnostic(float(delta), np.arange(1, M_modes + 1), sig, sig0, sys_damped.exponents)


# ----- exponential form of the dual solution -----

@dataclass(frozen=True)
class ExponentialPair:
    """ψ_n(t) = c1 e^{μ1 τ} + c2 e^{μ2 τ} with τ = T - t; confluent: c1 e^{μτ} + c2 τ e^{μτ}."""

    kind: str
    exponents: Tuple[complex, complex]
    coeffs: Tuple[complex, complex]

    @property
    def confluent(self) -> bool:
        return self.kind == "critical"


def dual_exponential_coeffs(psi0, psi1, spectrum: DampingSpectrum) -> List[ExponentialPair]:
    psi0 = np.asarray(psi0, dtype=float)
    psi1 = np.asarray(psi1, dtype=float)
    out = []
    for n, r in enumerate(spectrum.regimes):
        p0, p1 = psi0[n], psi1[n]
        if isinstance(r, Oscillatory):
            mu = complex(r.alpha, r.beta)
            cp = 0.5 * ((1 + 1j * r.alpha / r.beta) * p0 + (1j / r.beta) * p1)
            out.append(ExponentialPair(r.kind, (mu, mu.conjugate()), (cp, cp.conjugate())))
        elif isinstance(r, Overdamped):
            gap = r.lambda_minus - r.lambda_plus
            a = (r.lambda_minus * p0 + p1) / gap
            b = -(r.lambda_plus * p0 + p1) / gap
            out.append(ExponentialPair(r.kind, (complex(r.lambda_plus), complex(r.lambda_minus)),
                                       (complex(a), complex(b))))
        else:
            out.append(ExponentialPair(r.kind, (complex(r.root), complex(r.root)),
                                       (complex(p0), complex(-r.root * p0 - p1))))
    return out


def reconstruct_dual(pairs: Sequence[ExponentialPair], T: float, t: float) -> np.ndarray:
    tau = T - t
    out = np.zeros(len(pairs))
    for n, p in enumerate(pairs):
        (m1, m2), (c1, c2) = p.exponents, p.coeffs
        if p.confluent:
            val = (c1 + c2 * tau) * np.exp(m1 * tau)
        else:
            val = c1 * np.exp(m1 * tau) + c2 * np.exp(m2 * tau)
        out[n] = complex(val).real
    return out


# ----- unique continuation -----

@dataclass(frozen=True, eq=False)
class UCReport:
    sigma_min: float
    trace: float
    threshold: float
    holds: bool
    gram: np.ndarray

    def to_lines(self) -> list:
        return [f"uc_sigma_min: {self.sigma_min:.17g}", f"uc_trace: {self.trace:.17g}",
                f"uc_threshold: {self.threshold:.17g}",
                f"uc_verdict: {'UC holds at this resolution' if self.holds else 'rank deficient'}"]


def region_points(grid: Grid1D, region: Region) -> np.ndarray:
    return grid.exterior_midpoints[region_cells(grid, region)]


def unique_continuation_test(x_points: np.ndarray, basis: SpectralBasis, sys: StiffnessSystem, M_modes: int,
                             tol: float = 1e-10, weights: Optional[np.ndarray] = None) -> UCReport:
    """Gram matrix of N_s φ_n on the observation points and its rank verdict."""
    x = np.atleast_1d(np.asarray(x_points, dtype=float))
    if x.size == 0:
        raise DomainError("observation set is empty")
    if not 1 <= M_modes <= basis.m:
        raise DomainError(f"M_modes must lie in 1..{basis.m}, got {M_modes}")
    w = np.full(x.size, sys.grid.exterior_width) if weights is None else np.asarray(weights, dtype=float)
    F = mode_flux_table(basis.truncated(M_modes), sys, x)
    G = F.T @ (w[:, None] * F)
    G = 0.5 * (G + G.T)
    sigma = float(np.min(linalg.eigvalsh(G)))
    trace = float(np.trace(G))
    threshold = tol * trace / M_modes
    return UCReport(sigma, trace, threshold, bool(sigma > threshold), G)
