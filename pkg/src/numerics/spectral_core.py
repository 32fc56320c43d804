"""Piecewise-linear Galerkin discretization of the restricted fractional Laplacian on an
interval, its generalized eigenproblem and the modal fractional norms.

All element integrals are computed on a reference grid of unit spacing; the bilinear
form is homogeneous of degree 1 - 2s in the spacing, so every stiffness contribution
is a reference value times ``c_ns * h**(1 - 2s)``.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np
from scipy import linalg, special

from src.numerics.errors import AssemblyError, DomainError, NumericalError
from src.numerics.quadrature import gauss_legendre, power_difference

logger = logging.getLogger(__name__)

NormOrder = Literal[-1, 0, 1]
_ORDER_ALIASES = {"-s": -1, "0": 0, "+s": 1, "s": 1, -1: -1, 0: 0, 1: 1}


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on (a, b) with a cell-centred exterior collar on each side."""

    a: float = -1.0
    b: float = 1.0
    n_interior: int = 128
    exterior_halo: Optional[float] = None
    n_exterior: int = 32

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.b <= self.a:
            raise DomainError(f"need finite a < b, got a={self.a}, b={self.b}")
        if int(self.n_interior) < 1 or int(self.n_exterior) < 1:
            raise DomainError("n_interior and n_exterior must be positive")
        halo = 4.0 * (self.b - self.a) if self.exterior_halo is None else float(self.exterior_halo)
        if not np.isfinite(halo) or halo <= 0:
            raise DomainError(f"exterior_halo must be positive, got {halo}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n_interior", int(self.n_interior))
        object.__setattr__(self, "n_exterior", int(self.n_exterior))
        object.__setattr__(self, "exterior_halo", halo)

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n_interior + 1)

    @property
    def n_elements(self) -> int:
        return self.n_interior + 1

    @property
    def nodes(self) -> np.ndarray:
        """All nodes including the two boundary points."""
        return self.a + self.h * np.arange(self.n_interior + 2)

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def exterior_width(self) -> float:
        return self.exterior_halo / self.n_exterior

    @property
    def n_cells(self) -> int:
        return 2 * self.n_exterior

    @property
    def exterior_cells(self) -> np.ndarray:
        """Cell edges, shape (n_cells, 2): left collar ascending, then right collar."""
        he = self.exterior_width
        k = np.arange(self.n_exterior)
        left = np.column_stack([self.a - self.exterior_halo + k * he, self.a - self.exterior_halo + (k + 1) * he])
        left[-1, 1] = self.a
        right = np.column_stack([self.b + k * he, self.b + (k + 1) * he])
        right[0, 0] = self.b
        return np.vstack([left, right])

    @property
    def exterior_midpoints(self) -> np.ndarray:
        return self.exterior_cells.mean(axis=1)

    def cells_in(self, lo: float, hi: float) -> np.ndarray:
        """Indices of exterior cells whose midpoints lie in [lo, hi]."""
        mid = self.exterior_midpoints
        return np.flatnonzero((mid >= lo) & (mid <= hi))


@dataclass(frozen=True, eq=False)
class StiffnessSystem:
    """Assembled Galerkin matrices for one grid and one fractional order."""

    grid: Grid1D
    s: float
    c_ns: float
    K: np.ndarray
    M: np.ndarray
    K_coupling: np.ndarray
    K_tail: np.ndarray
    factor: tuple = field(repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.factor, rhs)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """The m lowest eigenpairs; ``modes`` holds nodal values column-wise."""

    lambdas: np.ndarray
    modes: np.ndarray
    grid: Grid1D
    s: float
    m: int

    @property
    def mass(self) -> np.ndarray:
        return mass_matrix(self.grid)

    def project(self, nodal: np.ndarray) -> np.ndarray:
        """Modal coefficients (u, φ_n) of an interior nodal vector."""
        return self.modes.T @ (self.mass @ nodal)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        return self.modes[:, : coeffs.shape[0]] @ coeffs

    def truncated(self, m: int) -> "SpectralBasis":
        if not 1 <= m <= self.m:
            raise DomainError(f"cannot truncate {self.m} modes to {m}")
        return SpectralBasis(self.lambdas[:m].copy(), self.modes[:, :m].copy(), self.grid, self.s, m)


def c_ns(s: float) -> float:
    """Normalization constant C_{1,s} of the one-dimensional fractional Laplacian."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {s}")
    return float(s * 4.0 ** s * special.gamma(s + 0.5) / (np.sqrt(np.pi) * special.gamma(1.0 - s)))


def mass_matrix(grid: Grid1D) -> np.ndarray:
    n, h = grid.n_interior, grid.h
    M = np.zeros((n, n))
    idx = np.arange(n)
    M[idx, idx] = 4.0 * h / 6.0
    M[idx[:-1], idx[:-1] + 1] = h / 6.0
    M[idx[:-1] + 1, idx[:-1]] = h / 6.0
    return M


# ----- reference element integrals (unit spacing) -----

def _self_pair(s: float) -> np.ndarray:
    return np.array([[1.0, -1.0], [-1.0, 1.0]]) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))


def _adjacent_pair(s: float, order: int) -> np.ndarray:
    # Duffy split of the two triangles meeting at the shared vertex; the radial
    # integral is exact, the angular one is smooth.
    t, w = gauss_legendre(order, 0.0, 1.0)
    v1 = np.stack([np.ones_like(t), t - 1.0, -t])
    v2 = np.stack([t, 1.0 - t, -np.ones_like(t)])
    weight = w * (1.0 + t) ** (-1.0 - 2.0 * s)
    J = np.einsum("q,aq,bq->ab", weight, v1, v1) + np.einsum("q,aq,bq->ab", weight, v2, v2)
    return J / (3.0 - 2.0 * s)


def _separated_pairs(s: float, offsets: np.ndarray, order: int) -> np.ndarray:
    x, w = gauss_legendre(order, 0.0, 1.0)
    X, Y = np.meshgrid(x, x, indexing="ij")
    WW = np.outer(w, w)
    dvec = np.stack([1.0 - X, X, -(1.0 - Y), -Y], axis=-1)
    dist = offsets[:, None, None] + Y[None] - X[None]
    kern = WW[None] * dist ** (-1.0 - 2.0 * s)
    return np.einsum("dij,ija,ijb->dab", kern, dvec, dvec)


def element_power_moments(r0, width: float, p: float):
    """∫ N_near r^p dr and ∫ N_far r^p dr over r in [r0, r0 + width].

    r is the distance from a point outside the element; N_near is the hat restricted to
    the element that equals 1 at the end nearest the point.  Requires r0 > 0 unless
    only the far moment is used with p > -2.
    """
    r0 = np.asarray(r0, dtype=float)
    safe = np.where(r0 > 0, r0, 1.0)

    def primitive(q):
        if abs(q) < 1e-12:
            return np.log1p(width / safe)
        return power_difference(safe, width, q) / q

    P0 = primitive(p + 1.0)
    P1 = primitive(p + 2.0)
    far = (P1 - safe * P0) / width
    near = ((safe + width) * P0 - P1) / width
    touching = r0 <= 0
    if np.any(touching):
        far = np.where(touching, width ** (p + 1.0) / (p + 2.0), far)
        near = np.where(touching, np.nan, near)
    return near, far


def _kappa_mass(grid: Grid1D, s: float, order: int) -> np.ndarray:
    """Reference values of ∫ φ_i φ_j κ with κ(x) = ((x-a)^(-2s) + (b-x)^(-2s)) / (2s)."""
    n_el = grid.n_elements
    k = np.arange(n_el, dtype=float)
    x, w = gauss_legendre(order, 0.0, 1.0)
    N = np.stack([1.0 - x, x])
    left_dist = k[:, None] + x[None]
    right_dist = (n_el - k)[:, None] - x[None]
    with np.errstate(divide="ignore"):
        kern = np.where(k[:, None] > 0, left_dist ** (-2.0 * s), 0.0)
        kern = kern + np.where(k[:, None] < n_el - 1, right_dist ** (-2.0 * s), 0.0)
    local = np.einsum("kq,q,aq,bq->kab", kern, w, N, N)
    # singular ends: only the hat of the interior node survives
    exact = 1.0 / (3.0 - 2.0 * s)
    local[0, 1, 1] += exact
    local[-1, 0, 0] += exact
    full = np.zeros((n_el + 1, n_el + 1))
    for a_ in range(2):
        for b_ in range(2):
            np.add.at(full, (np.arange(n_el) + a_, np.arange(n_el) + b_), local[:, a_, b_])
    return full / (2.0 * s)


def _scatter(full: np.ndarray, dofs: np.ndarray, local: np.ndarray) -> None:
    rows = np.broadcast_to(dofs[:, :, None], dofs.shape + (dofs.shape[1],))
    cols = np.broadcast_to(dofs[:, None, :], rows.shape)
    np.add.at(full, (rows, cols), np.broadcast_to(local, rows.shape))


def _coupling(grid: Grid1D, s: float) -> tuple:
    """Reference coupling of interior hats against exterior cells and the two tails."""
    h = grid.h
    n_el = grid.n_elements
    left_edges = grid.a + h * np.arange(n_el)
    cells = grid.exterior_cells
    ne = grid.n_exterior

    def hat_moments(points: np.ndarray, side: str):
        # returns (n_el, n_points, 2) with [..., 0] the element's left hat, [..., 1] its right hat
        if side == "left":
            r0 = left_edges[:, None] - points[None, :]
            near, far = element_power_moments(r0, h, -2.0 * s)
            return np.stack([near, far], axis=-1)
        r0 = points[None, :] - (left_edges[:, None] + h)
        near, far = element_power_moments(r0, h, -2.0 * s)
        return np.stack([far, near], axis=-1)

    def scatter_nodes(elem: np.ndarray) -> np.ndarray:
        out = np.zeros((n_el + 1,) + elem.shape[1:-1])
        out[:-1] += elem[..., 0]
        out[1:] += elem[..., 1]
        return out[1:-1]

    left_cells, right_cells = cells[:ne], cells[ne:]
    # cell integral of the kernel = (near-edge moment - far-edge moment) / 2s
    left = hat_moments(left_cells[:, 1], "left") - hat_moments(left_cells[:, 0], "left")
    right = hat_moments(right_cells[:, 0], "right") - hat_moments(right_cells[:, 1], "right")
    coupling = np.concatenate([scatter_nodes(np.nan_to_num(left)), scatter_nodes(np.nan_to_num(right))], axis=1)
    far_left = np.array([grid.a - grid.exterior_halo])
    far_right = np.array([grid.b + grid.exterior_halo])
    tail = np.concatenate(
        [scatter_nodes(hat_moments(far_left, "left")), scatter_nodes(hat_moments(far_right, "right"))], axis=1
    )
    return coupling / (2.0 * s), tail / (2.0 * s)


def assemble(grid: Grid1D, s: float, quad_order: int = 10, tol: float = 1e-9) -> StiffnessSystem:
    """Assemble K, M and the exterior couplings for the fractional order s."""
    const = c_ns(s)
    n_el = grid.n_elements

    adjacent = _adjacent_pair(s, quad_order)
    check = _adjacent_pair(s, quad_order + 6)
    err = np.max(np.abs(adjacent - check)) / np.max(np.abs(check))
    if err > tol:
        raise AssemblyError("adjacent element pair quadrature did not converge", pair=(0, 1), estimate=err)

    offsets = np.arange(2, n_el, dtype=float)
    separated = _separated_pairs(s, offsets, quad_order)
    if offsets.size:
        ref = _separated_pairs(s, offsets[:1], quad_order + 4)[0]
        err = np.max(np.abs(separated[0] - ref)) / np.max(np.abs(ref))
        if err > tol:
            raise AssemblyError("separated element pair quadrature did not converge", pair=(0, 2), estimate=err)

    full = np.zeros((n_el + 1, n_el + 1))
    k = np.arange(n_el)
    _scatter(full, np.column_stack([k, k + 1]), _self_pair(s))
    if n_el > 1:
        k1 = np.arange(n_el - 1)
        _scatter(full, np.column_stack([k1, k1 + 1, k1 + 2]), adjacent)
    for j, d in enumerate(offsets.astype(int)):
        kd = np.arange(n_el - d)
        _scatter(full, np.column_stack([kd, kd + 1, kd + d, kd + d + 1]), separated[j])
    full += _kappa_mass(grid, s, quad_order)

    scale = const * grid.h ** (1.0 - 2.0 * s)
    K = scale * full[1:-1, 1:-1]
    K = 0.5 * (K + K.T)
    coupling, tail = _coupling(grid, s)
    # the form between disjointly supported functions carries a minus sign
    K_coupling = -const * coupling
    K_tail = -const * tail

    try:
        factor = linalg.cho_factor(K)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"stiffness matrix is not positive definite: {exc}") from exc
    logger.debug("assembled n=%d s=%.3f C=%.6f", grid.n_interior, s, const)
    return StiffnessSystem(grid, float(s), const, K, mass_matrix(grid), K_coupling, K_tail, factor)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Make the first extremum from the left endpoint positive."""
    d = np.diff(v)
    turns = np.flatnonzero(np.sign(d[1:]) != np.sign(d[:-1]))
    idx = turns[0] + 1 if turns.size else int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def eigenpairs(sys: StiffnessSystem, m: int, cluster_gap: float = 1e-10) -> SpectralBasis:
    """The m smallest eigenpairs of K x = λ M x, M-orthonormal, ascending."""
    n = sys.grid.n_interior
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n_interior={n}, got m={m}")
    try:
        lam, vec = linalg.eigh(sys.K, sys.M, subset_by_index=[0, m - 1])
    except linalg.LinAlgError as exc:
        raise NumericalError(f"generalized eigensolver failed: {exc}") from exc

    # re-orthonormalize clusters of (numerically) repeated eigenvalues
    start = 0
    for i in range(1, m + 1):
        if i == m or (lam[i] - lam[i - 1]) > cluster_gap * abs(lam[i]):
            if i - start > 1:
                block = vec[:, start:i]
                G = block.T @ sys.M @ block
                L = linalg.cholesky(G, lower=True)
                vec[:, start:i] = linalg.solve_triangular(L, block.T, lower=True).T
            start = i

    vec = np.column_stack([_fix_sign(vec[:, j]) for j in range(m)])
    residual = np.linalg.norm(sys.K @ vec - sys.M @ vec * lam, axis=0) / np.linalg.norm(sys.M @ vec * lam, axis=0)
    if lam[0] <= 0 or np.any(residual > 1e-8):
        raise NumericalError("eigenpairs failed the residual check", residuals=residual)
    return SpectralBasis(lam, vec, sys.grid, sys.s, m)


def norm(coeffs: np.ndarray, basis: SpectralBasis, order: Union[NormOrder, str] = 0) -> float:
    """Modal norm of order -s, 0 or +s (weights λ^-1, 1, λ on squared coefficients)."""
    try:
        k = _ORDER_ALIASES[order]
    except KeyError:
        raise DomainError(f"norm order must be one of -s, 0, +s; got {order!r}") from None
    c = np.asarray(coeffs, dtype=float)
    if c.shape[0] > basis.m:
        raise DomainError(f"{c.shape[0]} coefficients for a basis of {basis.m} modes")
    weights = basis.lambdas[: c.shape[0]] ** k
    return float(np.sqrt(np.sum(weights * c * c)))


def rayleigh_quotient(v: np.ndarray, sys: StiffnessSystem) -> float:
    return float(v @ sys.K @ v / (v @ sys.M @ v))


# ----- basis table -----

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def basis_to_text(basis: SpectralBasis) -> str:
    """Header line (a b h s m) then one row per mode: λ_n followed by nodal values."""
    g = basis.grid
    lines = [" ".join(_fmt(v) for v in (g.a, g.b, g.h, basis.s)) + f" {basis.m}"]
    for j in range(basis.m):
        lines.append(" ".join([_fmt(basis.lambdas[j])] + [_fmt(v) for v in basis.modes[:, j]]))
    return "\n".join(lines) + "\n"


def basis_from_text(text: str, halo: Optional[float] = None, n_exterior: int = 32) -> SpectralBasis:
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    if not rows:
        raise DomainError("empty basis table")
    a, b, h, s = (float(v) for v in rows[0][:4])
    m = int(rows[0][4])
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    if body.shape[0] != m:
        raise DomainError(f"basis header announces {m} modes, table has {body.shape[0]}")
    grid = Grid1D(a, b, body.shape[1] - 1, halo, n_exterior)
    if not np.isclose(grid.h, h, rtol=1e-12):
        raise DomainError("basis header spacing does not match node count")
    return SpectralBasis(body[:, 0].copy(), body[:, 1:].T.copy(), grid, s, m)


def mirror_defect(basis: SpectralBasis, modes: Optional[Sequence[int]] = None) -> np.ndarray:
    """max |φ_n(x) - (-1)^(n+1) φ_n(-x)| per mode on a symmetric interval."""
    idx = range(basis.m) if modes is None else modes
    out = []
    for j in idx:
        v = basis.modes[:, j]
        out.append(np.max(np.abs(v - (-1) ** j * v[::-1])))
    return np.array(out)
