import mpmath
import numpy as np
import pytest

from src.numerics.errors import DomainError
from src.numerics.quadrature import gauss_legendre
from src.numerics.spectral_core import (
    Grid1D,
    assemble,
    basis_from_text,
    basis_to_text,
    c_ns,
    eigenpairs,
    mirror_defect,
    norm,
    rayleigh_quotient,
)

LAMBDA_1_HALF = 1.1577738


@pytest.mark.parametrize("s", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_c_ns_matches_high_precision_gamma(s):
    ms = mpmath.mpf(s)
    expected = ms * mpmath.power(4, ms) * mpmath.gamma(ms + 0.5) / (mpmath.sqrt(mpmath.pi) * mpmath.gamma(1 - ms))
    assert c_ns(s) == pytest.approx(float(expected), rel=1e-14)


def test_c_ns_at_one_half_is_one_over_pi():
    assert c_ns(0.5) == pytest.approx(1.0 / np.pi, rel=1e-15)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.5])
def test_c_ns_rejects_order_outside_unit_interval(s):
    with pytest.raises(DomainError):
        c_ns(s)


def test_grid_rejects_empty_interval():
    with pytest.raises(DomainError):
        Grid1D(1.0, 1.0)


def test_grid_exterior_layout(grid):
    cells = grid.exterior_cells
    assert cells.shape == (grid.n_cells, 2)
    assert cells[grid.n_exterior - 1, 1] == grid.a
    assert cells[grid.n_exterior, 0] == grid.b
    assert np.all(np.diff(cells, axis=1) > 0)
    assert grid.exterior_halo == pytest.approx(4 * (grid.b - grid.a))


def test_assembled_matrices_are_symmetric_and_definite(system):
    assert np.allclose(system.K, system.K.T, atol=0)
    assert np.all(np.linalg.eigvalsh(system.K) > 0)
    assert np.all(np.linalg.eigvalsh(system.M) > 0)
    assert np.all(system.K_coupling <= 0)
    assert np.all(system.K_tail <= 0)


def test_eigenpairs_contract(system, basis):
    lam, Phi = basis.lambdas, basis.modes
    assert np.all(lam > 0)
    assert np.all(np.diff(lam) > 0)
    assert np.max(np.abs(Phi.T @ system.M @ Phi - np.eye(basis.m))) <= 1e-8
    residual = np.linalg.norm(system.K @ Phi - system.M @ Phi * lam, axis=0)
    assert np.max(residual / np.linalg.norm(system.M @ Phi * lam, axis=0)) <= 1e-8


def test_first_mode_is_positive(basis):
    assert np.all(basis.modes[:, 0] > 0)


def test_modes_are_even_or_odd(basis):
    assert np.max(mirror_defect(basis)) <= 1e-8


def test_rayleigh_quotient_recovers_eigenvalue(system, basis):
    assert rayleigh_quotient(basis.modes[:, 2], system) == pytest.approx(basis.lambdas[2], rel=1e-10)


def test_eigenpairs_rejects_too_many_modes(system):
    with pytest.raises(DomainError):
        eigenpairs(system, system.grid.n_interior + 1)


def test_first_eigenvalue_at_one_half_against_refined_grid():
    # n_interior + 1 doubles, so the coarse space is nested in the fine one
    coarse = eigenpairs(assemble(Grid1D(-1.0, 1.0, 512, None, 8), 0.5), 1).lambdas[0]
    fine_sys = assemble(Grid1D(-1.0, 1.0, 1025, None, 8), 0.5)
    fine = eigenpairs(fine_sys, 1)
    oracle = rayleigh_quotient(fine.modes[:, 0], fine_sys)
    assert oracle <= coarse <= oracle * 1.01
    assert coarse == pytest.approx(LAMBDA_1_HALF, rel=1e-2)
    assert oracle >= LAMBDA_1_HALF


def test_first_eigenvalue_decreases_under_nested_refinement():
    values = [eigenpairs(assemble(Grid1D(-1.0, 1.0, n, None, 8), 0.5), 1).lambdas[0] for n in (31, 63, 127)]
    assert values[0] > values[1] > values[2]


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_eigenvalues_grow_like_n_to_the_2s(s):
    sys = assemble(Grid1D(-1.0, 1.0, 127, None, 8), s)
    lam = eigenpairs(sys, 16).lambdas
    slope = np.polyfit(np.log(np.arange(8, 17)), np.log(lam[7:]), 1)[0]
    assert slope == pytest.approx(2 * s, abs=0.15)


def test_norm_orders(small_basis):
    e1 = np.zeros(small_basis.m)
    e1[0] = 2.0
    lam = small_basis.lambdas[0]
    assert norm(e1, small_basis, "+s") == pytest.approx(2.0 * np.sqrt(lam))
    assert norm(e1, small_basis, 0) == pytest.approx(2.0)
    assert norm(e1, small_basis, "-s") == pytest.approx(2.0 / np.sqrt(lam))


def test_norm_rejects_unknown_order(small_basis):
    with pytest.raises(DomainError):
        norm(np.ones(small_basis.m), small_basis, 2)


def test_basis_text_is_lossless(basis):
    again = basis_from_text(basis_to_text(basis), basis.grid.exterior_halo, basis.grid.n_exterior)
    assert np.array_equal(again.lambdas, basis.lambdas)
    assert np.array_equal(again.modes, basis.modes)
    assert again.grid.n_interior == basis.grid.n_interior
    assert again.s == basis.s


def test_basis_text_rejects_wrong_mode_count(basis):
    text = basis_to_text(basis.truncated(3))
    broken = "\n".join(text.splitlines()[:-1])
    with pytest.raises(DomainError):
        basis_from_text(broken)


def _hat_form(s: float, h: float, k: int) -> float:
    """Full-line form of two unit hats k nodes apart, from the Fourier symbol |ξ|^{2s}.

    sin⁴u cos(2ku) expands into cosines at 2|k+j|, j = -2..2, whose Mellin transforms
    are Γ(μ) cos(πμ/2) ω^{-μ} with μ = 2s - 3; at s = 1/2 the pole cancels and leaves
    ½ Σ c ω² ln ω.
    """
    with mpmath.workdps(40):
        return _hat_form_mp(s, h, k)


def _hat_form_mp(s: float, h: float, k: int) -> float:
    coeffs = {-2: mpmath.mpf(1) / 16, -1: mpmath.mpf(-1) / 4, 0: mpmath.mpf(3) / 8,
              1: mpmath.mpf(-1) / 4, 2: mpmath.mpf(1) / 16}
    omegas = {j: mpmath.mpf(2 * abs(k + j)) for j in coeffs}
    ms = mpmath.mpf(s)
    if ms == mpmath.mpf("0.5"):
        total = sum(c * omegas[j] ** 2 * mpmath.log(omegas[j]) for j, c in coeffs.items() if omegas[j] > 0) / 2
    else:
        mu = 2 * ms - 3
        total = mpmath.gamma(mu) * mpmath.cos(mpmath.pi * mu / 2) * sum(
            c * omegas[j] ** (-mu) for j, c in coeffs.items() if omegas[j] > 0)
    return float(2 ** (2 * ms + 1) * mpmath.mpf(h) ** (1 - 2 * ms) / mpmath.pi * total)


def test_scalar_rule_and_small_grid_assembly():
    x, w = gauss_legendre(6, 0.0, 2.0)
    assert x.shape == (6,) and w.shape == (6,)
    assert np.sum(w * x ** 3) == pytest.approx(4.0, rel=1e-14)
    system = assemble(Grid1D(-1.0, 1.0, 8, None, 8), 0.5)
    assert system.K.shape == (8, 8)
    assert np.all(np.isfinite(system.K))
    np.testing.assert_allclose(system.K, system.K.T, rtol=0, atol=1e-14)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_stiffness_entries_match_fourier_symbol(s):
    grid = Grid1D(-1.0, 1.0, 8, None, 8)
    K = assemble(grid, s).K
    oracle = np.array([[_hat_form(s, grid.h, abs(i - j)) for j in range(8)] for i in range(8)])
    np.testing.assert_allclose(K, oracle, rtol=1e-5, atol=1e-7 * np.max(np.abs(oracle)))


def test_hat_form_at_one_half_is_scale_free():
    assert _hat_form(0.5, 0.1, 0) == pytest.approx(4.0 * np.log(2.0) / np.pi, rel=1e-14)
    assert _hat_form(0.5, 0.3, 0) == pytest.approx(_hat_form(0.5, 0.1, 0), rel=1e-14)


def test_stiffness_is_invariant_under_reflection():
    K = assemble(Grid1D(-1.0, 1.0, 9, None, 8), 0.5).K
    np.testing.assert_allclose(K, K[::-1, ::-1], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("n_interior", [127, 255])
def test_modes_are_even_or_odd_on_fine_grids(n_interior):
    basis = eigenpairs(assemble(Grid1D(-1.0, 1.0, n_interior, None, 16), 0.5), 6)
    assert np.max(mirror_defect(basis)) <= 1e-8


def test_eigenvalues_are_cauchy_under_refinement():
    lam = np.array([eigenpairs(assemble(Grid1D(-1.0, 1.0, n, None, 8), 0.5), 2).lambdas
                    for n in (31, 63, 127, 255)])
    diffs = -np.diff(lam, axis=0)
    assert np.all(diffs > 0)
    assert np.all(diffs[:-1] / diffs[1:] >= 1.5)
