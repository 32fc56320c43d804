"""Exterior data: the s-harmonic Dirichlet lift, the nonlocal normal derivative N_s and
the two identities tying them to the bilinear form."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.numerics.errors import DomainError
from src.numerics.quadrature import power_difference
from src.numerics.spectral_core import Grid1D, SpectralBasis, StiffnessSystem, element_power_moments

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExteriorProfile:
    """Piecewise-constant exterior datum, one value per exterior cell.

    With ``extend_tail`` the outermost value on each side continues to infinity.
    """

    values: np.ndarray
    grid: Grid1D
    extend_tail: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise DomainError(f"exterior profile needs {self.grid.n_cells} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("exterior profile has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid1D) -> "ExteriorProfile":
        return cls(np.zeros(grid.n_cells), grid)

    @classmethod
    def constant(cls, grid: Grid1D, value: float = 1.0, extend_tail: bool = True) -> "ExteriorProfile":
        return cls(np.full(grid.n_cells, float(value)), grid, extend_tail)

    @classmethod
    def indicator(cls, grid: Grid1D, cells: Sequence[int], value: float = 1.0) -> "ExteriorProfile":
        v = np.zeros(grid.n_cells)
        v[np.asarray(cells, dtype=int)] = value
        return cls(v, grid)

    @classmethod
    def on_interval(cls, grid: Grid1D, lo: float, hi: float, value: float = 1.0) -> "ExteriorProfile":
        return cls.indicator(grid, grid.cells_in(lo, hi), value)

    @property
    def tail_values(self) -> np.ndarray:
        if not self.extend_tail:
            return np.zeros(2)
        return np.array([self.values[0], self.values[-1]])

    def scaled(self, factor: float) -> "ExteriorProfile":
        return ExteriorProfile(self.values * factor, self.grid, self.extend_tail)

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.exterior_width * np.sum(self.values ** 2)))


@dataclass(frozen=True, eq=False)
class FluxVector:
    values: np.ndarray
    x: np.ndarray
    source_mode: Optional[int] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise DomainError("flux vector has non-finite values")


def dirichlet_lift(g: ExteriorProfile, sys: StiffnessSystem) -> np.ndarray:
    """Interior nodal values of the s-harmonic extension of g."""
    rhs = -(sys.K_coupling @ g.values + sys.K_tail @ g.tail_values)
    if not np.any(rhs):
        return np.zeros(sys.grid.n_interior)
    u = sys.solve(rhs)
    logger.debug("lift stability ratio %.4e", _stability_ratio(u, g, sys))
    return u


def _stability_ratio(u: np.ndarray, g: ExteriorProfile, sys: StiffnessSystem) -> float:
    gn = g.l2_norm()
    if gn == 0:
        return 0.0
    return float(np.sqrt(u @ sys.M @ u + u @ sys.K @ u + gn ** 2) / gn)


def lift_stability(g: ExteriorProfile, sys: StiffnessSystem) -> float:
    """Measured ratio ‖U_g‖ / ‖g‖ (energy plus L² inside, L² outside)."""
    ratio = _stability_ratio(dirichlet_lift(g, sys), g, sys)
    logger.info("lift stability constant %.4e", ratio)
    return ratio


def _check_exterior(x: np.ndarray, grid: Grid1D) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inside = (x >= grid.a) & (x <= grid.b)
    if np.any(inside):
        raise DomainError(f"evaluation points {x[inside][:3]} lie in the closure of the domain")
    return x


def hat_kernel_matrix(x: np.ndarray, grid: Grid1D, s: float) -> np.ndarray:
    """H[p, i] = ∫ φ̂_i(y) |x_p - y|^(-1-2s) dy for exterior points x_p."""
    x = _check_exterior(x, grid)
    h = grid.h
    left_edges = grid.a + h * np.arange(grid.n_elements)
    p = -1.0 - 2.0 * s
    elem = np.zeros((x.size, grid.n_elements, 2))
    lft = x < grid.a
    if np.any(lft):
        near, far = element_power_moments(left_edges[None, :] - x[lft, None], h, p)
        elem[lft] = np.stack([near, far], axis=-1)
    rgt = ~lft
    if np.any(rgt):
        near, far = element_power_moments(x[rgt, None] - (left_edges[None, :] + h), h, p)
        elem[rgt] = np.stack([far, near], axis=-1)
    nodes = np.zeros((x.size, grid.n_elements + 1))
    nodes[:, :-1] += elem[..., 0]
    nodes[:, 1:] += elem[..., 1]
    return nodes[:, 1:-1]


def domain_kernel_mass(x: np.ndarray, grid: Grid1D, s: float) -> np.ndarray:
    """∫_Ω |x - y|^(-1-2s) dy for exterior points."""
    x = _check_exterior(x, grid)
    near = np.where(x < grid.a, grid.a - x, x - grid.b)
    return -power_difference(near, grid.b - grid.a, -2.0 * s) / (2.0 * s)


def _exterior_value(u_ext: np.ndarray, x: np.ndarray, grid: Grid1D) -> np.ndarray:
    cells = grid.exterior_cells
    out = np.zeros_like(x)
    for k, (lo, hi) in enumerate(cells):
        out[(x >= lo) & (x < hi)] = u_ext[k]
    return out


def nonlocal_normal_derivative(
    u_full: np.ndarray,
    sys: StiffnessSystem,
    x_ext: Optional[np.ndarray] = None,
    source_mode: Optional[int] = None,
) -> FluxVector:
    """N_s u at exterior points; u_full is interior nodal values followed by cell values."""
    grid = sys.grid
    u_full = np.asarray(u_full, dtype=float)
    if u_full.shape != (grid.n_interior + grid.n_cells,):
        raise DomainError(f"u_full needs {grid.n_interior + grid.n_cells} entries, got {u_full.shape}")
    if not np.all(np.isfinite(u_full)):
        raise DomainError("u_full has non-finite values")
    x = grid.exterior_midpoints if x_ext is None else _check_exterior(x_ext, grid)
    u_int, u_ext = u_full[: grid.n_interior], u_full[grid.n_interior:]
    at_x = _exterior_value(u_ext, x, grid)
    values = sys.c_ns * (at_x * domain_kernel_mass(x, grid, sys.s) - hat_kernel_matrix(x, grid, sys.s) @ u_int)
    return FluxVector(values, x, source_mode)


def mode_flux_table(basis: SpectralBasis, sys: StiffnessSystem, x_ext: Optional[np.ndarray] = None) -> np.ndarray:
    """Columns N_s φ_n at the exterior points (default: all cell midpoints)."""
    x = sys.grid.exterior_midpoints if x_ext is None else x_ext
    return -sys.c_ns * hat_kernel_matrix(x, sys.grid, sys.s) @ basis.modes


def modal_flux_pairing(g: ExteriorProfile, basis: SpectralBasis, sys: StiffnessSystem) -> np.ndarray:
    """(g, N_s φ_n) over the exterior, via -λ_n (φ_n, U_g)."""
    lift = dirichlet_lift(g, sys)
    return -basis.lambdas * (basis.modes.T @ (sys.M @ lift))


def flux_pairing_direct(g: ExteriorProfile, basis: SpectralBasis, sys: StiffnessSystem) -> np.ndarray:
    """(g, N_s φ_n) by the midpoint rule on the exterior cells, tails in closed form."""
    table = mode_flux_table(basis, sys)
    direct = sys.grid.exterior_width * (g.values @ table)
    return direct + basis.modes.T @ (sys.K_tail @ g.tail_values)


def check_integration_by_parts(
    u: np.ndarray, v_full: np.ndarray, sys: StiffnessSystem, basis: SpectralBasis
) -> float:
    """Relative defect of 𝓕(u, v) = (v, (-Δ)^s u)_Ω + (v, N_s u)_ext for u in the mode span."""
    grid = sys.grid
    v_full = np.asarray(v_full, dtype=float)
    v_int, v_ext = v_full[: grid.n_interior], v_full[grid.n_interior:]
    form = float(u @ (sys.K @ v_int + sys.K_coupling @ v_ext))
    c = basis.project(u)
    volume = float(np.sum(basis.lambdas * c * (basis.modes.T @ (sys.M @ v_int))))
    u_full = np.concatenate([u, np.zeros(grid.n_cells)])
    flux = nonlocal_normal_derivative(u_full, sys).values
    boundary = float(grid.exterior_width * np.sum(v_ext * flux))
    return abs(form - (volume + boundary)) / max(1.0, abs(form))


def check_flux_identity(g: ExteriorProfile, basis: SpectralBasis, sys: StiffnessSystem, n: int) -> float:
    """Relative defect of ∫ g N_s φ_n = -λ_n (φ_n, U_g) for mode n (1-based)."""
    if not 1 <= n <= basis.m:
        raise DomainError(f"mode index {n} outside 1..{basis.m}")
    j = n - 1
    lam = basis.lambdas[j]
    inner = float(basis.modes[:, j] @ (sys.M @ dirichlet_lift(g, sys)))
    direct = float(flux_pairing_direct(g, basis.truncated(n), sys)[j])
    return abs(direct + lam * inner) / (1.0 + lam * abs(inner))


def flux_boundedness(basis: SpectralBasis, sys: StiffnessSystem) -> np.ndarray:
    """‖N_s φ_n‖ on the exterior cells divided by ‖φ_n‖_{+s} = λ_n^(1/2)."""
    table = mode_flux_table(basis, sys)
    norms = np.sqrt(sys.grid.exterior_width * np.sum(table ** 2, axis=0))
    ratios = norms / np.sqrt(basis.lambdas)
    logger.info("flux boundedness ratios: max %.4e over %d modes", ratios.max(), basis.m)
    return ratios
