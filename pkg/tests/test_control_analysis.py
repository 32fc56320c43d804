import numpy as np
import pytest

from src.numerics.control_analysis import (
    ControlAnsatz,
    _gauss_nodes,
    approximate_control,
    bump_family,
    dual_exponential_coeffs,
    dual_reachability_map,
    duality_residual,
    moment_function,
    moment_matrix,
    nested_control,
    null_control_attempt,
    reachability_map,
    reconstruct_dual,
    region_cells,
    region_points,
    spectral_control_diagnostic,
    unique_continuation_test,
)
from src.numerics.errors import DomainError, RegularizationRequiredError
from src.numerics.evolution import StatePair, TimeProfile, solve_dual, solve_full
from src.numerics.modal_dynamics import classify
from src.numerics.nonlocal_ops import modal_flux_pairing

T = 2.0
REGION = [(1.5, 2.5)]


@pytest.fixture(scope="module")
def ansatz(grid):
    return ControlAnsatz.build(grid, REGION, 3, T)


@pytest.fixture(scope="module")
def reach(ansatz, small_basis, system, damped):
    return reachability_map(ansatz, small_basis, system, damped, T)


# ----- ansatz -----

def test_region_cells_reject_domain_overlap(grid):
    with pytest.raises(DomainError):
        region_cells(grid, [(0.5, 1.5)])
    with pytest.raises(DomainError):
        region_cells(grid, [(2.0, 2.0)])
    with pytest.raises(DomainError):
        ControlAnsatz.build(grid, [(-1.5, -0.5)], 2, T)


def test_region_points_are_midpoints_inside_region(grid):
    x = region_points(grid, [(1.5, 2.5), (-3.0, -2.0)])
    assert x.size == 16
    assert np.all(((x > 1.5) & (x < 2.5)) | ((x > -3.0) & (x < -2.0)))


def test_bump_family_covers_horizon():
    family = bump_family(T, 5)
    assert family[0].t0 == 0.0
    assert family[-1].t1 == pytest.approx(T)
    assert all(q.t1 <= T for q in family)
    with pytest.raises(DomainError):
        bump_family(T, 0)


def test_ansatz_sizes(grid, ansatz):
    assert ansatz.n_spatial == 8
    assert ansatz.size == 24
    pooled = ControlAnsatz.build(grid, REGION, 3, T, pooled=True)
    assert pooled.size == 3
    assert len(pooled.spatial_profiles()) == 1
    with pytest.raises(DomainError):
        ansatz.to_control(T)


def test_gauss_nodes_span_the_profile_support():
    t, w = _gauss_nodes(TimeProfile("polynomial", 0.0, 1.0), 16)
    assert t.shape == (16,) and w.shape == (16,)
    assert np.all((t > 0.0) & (t < 1.0))
    assert w.sum() == pytest.approx(1.0, rel=1e-14)


def test_enlarged_ansatz_keeps_old_profiles_first(grid):
    base = ControlAnsatz.spatial(grid, REGION)
    assert base.size == 0
    small = base.enlarged(T, 2)
    large = small.enlarged(T, 4).enlarged(T, 2)
    assert large.temporal_basis[:2] == small.temporal_basis
    assert large.n_profiles == 6
    assert large.coefficients is None


def test_embed_pads_prior_coefficients(grid, rng):
    small = ControlAnsatz.spatial(grid, REGION, pooled=True).enlarged(T, 2)
    large = small.enlarged(T, 3)
    c = rng.standard_normal(2)
    np.testing.assert_array_equal(large.embed(small.with_coefficients(c)), [c[0], c[1], 0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        large.embed(small)
    with pytest.raises(DomainError):
        small.embed(large.with_coefficients(np.zeros(5)))
    with pytest.raises(DomainError):
        ControlAnsatz.build(grid, REGION, 2, T).embed(small.with_coefficients(c))


# ----- duality -----

@pytest.mark.parametrize("delta", [0.0, 1.0])
def test_duality_identity(grid, small_basis, system, rng, delta):
    spectrum = classify(delta, small_basis.lambdas)
    m = spectrum.m
    a = ControlAnsatz.build(grid, REGION, 2, T, pooled=True).with_coefficients([1.0, -0.5])
    g = a.to_control(T)
    u0, u1 = rng.standard_normal(m) / small_basis.lambdas, rng.standard_normal(m)
    psi0, psi1 = rng.standard_normal(m), rng.standard_normal(m)
    assert duality_residual(u0, u1, g, psi0, psi1, small_basis, system, spectrum, T) <= 1e-4


def test_dual_reachability_map_matches_forward_map(ansatz, reach, small_basis, system, damped):
    dual = dual_reachability_map(ansatz, small_basis, system, damped, T)
    scale = np.max(np.abs(reach.matrix))
    np.testing.assert_allclose(dual.matrix, reach.matrix, atol=1e-6 * scale)


def test_exponential_form_reconstructs_dual_solution(damped, undamped, rng):
    psi0, psi1 = rng.standard_normal(damped.m), rng.standard_normal(damped.m)
    for spectrum in (damped, undamped):
        pairs = dual_exponential_coeffs(psi0, psi1, spectrum)
        for t in np.linspace(0.0, T, 7):
            expected = solve_dual(psi0, psi1, spectrum, T, t).u_coeffs
            np.testing.assert_allclose(reconstruct_dual(pairs, T, t), expected,
                                       atol=1e-10 * max(1.0, np.max(np.abs(expected))))


def test_confluent_exponential_form():
    lam = np.array([4.0])
    spectrum = classify(1.0, lam, tol=1e-9)
    pairs = dual_exponential_coeffs([0.7], [-0.3], spectrum)
    assert pairs[0].confluent
    for t in (0.0, 0.5, 1.9):
        expected = solve_dual([0.7], [-0.3], spectrum, T, t).u_coeffs
        np.testing.assert_allclose(reconstruct_dual(pairs, T, t), expected, atol=1e-12)


# ----- approximate control -----

def test_reachable_target_is_hit(ansatz, reach, small_basis, system, damped):
    j = 7
    target = StatePair(reach.u_rows[:, j], reach.ut_rows[:, j], T)
    result = approximate_control(target, ansatz, small_basis, system, damped, T, 1e-14, reach=reach)
    assert result.achieved_error <= 1e-6
    assert result.ansatz.coefficients.shape == (ansatz.n_spatial, ansatz.n_profiles)


def test_objective_decreases_over_nested_families(grid, small_basis, system, damped):
    cells = tuple(region_cells(grid, REGION))
    first = bump_family(T, 2)
    nested = first + bump_family(T, 3)
    target = StatePair(np.ones(damped.m) / np.arange(1, damped.m + 1), np.zeros(damped.m), T)
    objectives = []
    for family in (first, nested):
        a = ControlAnsatz(grid, cells, family, pooled=True)
        objectives.append(approximate_control(target, a, small_basis, system, damped, T, 1e-6).objective)
    assert objectives[1] <= objectives[0] * (1 + 1e-9)


def test_error_grows_with_regularization(ansatz, reach, small_basis, system, damped):
    target = StatePair(np.ones(damped.m) / np.arange(1, damped.m + 1), np.zeros(damped.m), T)
    errors = [approximate_control(target, ansatz, small_basis, system, damped, T, eps, reach=reach).achieved_error
              for eps in (1e-6, 1e-4, 1e-2, 1.0)]
    assert np.all(np.diff(errors) >= -1e-9 * max(errors))


def test_nested_enlargements_never_lose_accuracy(grid, small_basis, system, damped):
    target = StatePair(np.ones(damped.m) / np.arange(1, damped.m + 1), np.zeros(damped.m), T)
    base = ControlAnsatz.spatial(grid, REGION, pooled=True)
    eps = [1e-2, 1e-6, 1e-10]
    steps = nested_control(target, base, [2, 3, 5], small_basis, system, damped, T, eps)
    assert [a.n_profiles for a, _, _ in steps] == [2, 5, 10]
    for chain in zip(*(results for _, _, results in steps)):
        errors = [r.achieved_error for r in chain]
        for old, new in zip(errors, errors[1:]):
            assert new <= old * (1 + 1e-9) + 1e-12
    assert [r.eps_reg for r in steps[-1][2]] == eps


def test_lightly_damped_target_is_reached_from_short_region(grid, basis, system):
    modes = basis.truncated(12)
    spectrum = classify(0.1, modes.lambdas)
    horizon = 4.0
    target = StatePair(np.eye(modes.m)[0], np.zeros(modes.m), horizon)
    base = ControlAnsatz.spatial(grid, [(1.25, 1.75)])
    assert base.n_spatial == 4
    eps = [1e-8, 1e-10, 1e-12, 1e-14]
    steps = nested_control(target, base, [12, 24, 48], modes, system, spectrum, horizon, eps)
    final = [r.achieved_error for r in steps[-1][2]]
    for chain in zip(*(results for _, _, results in steps)):
        errors = [r.achieved_error for r in chain]
        assert all(new <= old * (1 + 1e-9) + 1e-12 for old, new in zip(errors, errors[1:]))
    assert min(final) <= 1e-3


def test_rank_deficient_map_needs_regularization(grid, small_basis, system, damped):
    q = bump_family(T, 1)[0]
    a = ControlAnsatz(grid, tuple(region_cells(grid, REGION)), (q, q), pooled=True)
    target = StatePair(np.ones(damped.m), np.zeros(damped.m), T)
    with pytest.raises(RegularizationRequiredError):
        approximate_control(target, a, small_basis, system, damped, T, 0.0)
    assert np.isfinite(approximate_control(target, a, small_basis, system, damped, T, 1e-8).objective)


def test_negative_regularization_is_rejected(ansatz, reach, small_basis, system, damped):
    target = StatePair(np.zeros(damped.m), np.zeros(damped.m), T)
    with pytest.raises(DomainError):
        approximate_control(target, ansatz, small_basis, system, damped, T, -1e-3, reach=reach)


def test_null_control_of_rest_is_zero(ansatz, reach, small_basis, system, damped):
    result = null_control_attempt(np.zeros(damped.m), None, ansatz, small_basis, system, damped, T, 1e-8, reach=reach)
    assert np.all(result.ansatz.coefficients == 0)
    assert result.achieved_error == 0.0


# ----- moment problem -----

def _final_state_relation(moments, state, spectrum, M):
    """-(u_t(T) + (μ + δλ) u(T)) arranged like the moment rows."""
    out = []
    row = 0
    for n in range(M):
        u, ut = state.u_coeffs[n], state.ut_coeffs[n]
        shift = spectrum.delta * spectrum.lambdas[n]
        kinds = moments.row_kinds[row: row + 2]
        if kinds == ("re", "im"):
            z = -(ut + (moments.exponents[row] + shift) * u)
            out += [z.real, z.imag]
        else:
            out += [-(ut + (moments.exponents[row + k].real + shift) * u) for k in range(2)]
        row += 2
    return np.array(out)


def test_moment_residual_measures_final_state(grid, small_basis, system, damped, rng):
    M = 6
    a = ControlAnsatz.build(grid, REGION, 4, T, pooled=True)
    c = rng.standard_normal(a.size)
    u0, u1 = rng.standard_normal(damped.m) / small_basis.lambdas, rng.standard_normal(damped.m)
    moments = moment_matrix(damped, a, small_basis, system, T, M, u0[:M], u1[:M])
    assert set(moments.row_kinds) <= {"re", "im", "real"}
    final = solve_full(u0, u1, a.with_coefficients(c).to_control(T), small_basis, system, damped, T)
    expected = _final_state_relation(moments, final, damped, M)
    np.testing.assert_allclose(moments.residual(c), expected, atol=1e-7 * max(1.0, np.max(np.abs(expected))))


def test_moment_system_without_initial_data(grid, small_basis, system, undamped):
    M = 4
    a = ControlAnsatz.build(grid, REGION, 4, T, pooled=True)
    moments = moment_matrix(undamped, a, small_basis, system, T, M)
    assert moments.rhs is None
    with pytest.raises(DomainError):
        moments.residual(np.zeros(a.size))
    assert moments.observation_rows.shape == (2 * M, a.size)


def test_moment_row_is_moment_function_on_exponent(grid, small_basis, system, damped):
    a = ControlAnsatz.build(grid, REGION, 3, T, pooled=True)
    moments = moment_matrix(damped, a, small_basis, system, T, 1)
    mu = moments.exponents[0]
    pairing = modal_flux_pairing(a.spatial_profiles()[0], small_basis, system)[0]
    row = moments.observation_rows[0] + 1j * moments.observation_rows[1]
    for k, q in enumerate(a.temporal_basis):
        entry = np.exp(mu * T) * moment_function(q, pairing, damped.delta, T, 1j * mu)
        assert abs(entry - row[k]) <= 1e-9 * abs(row[k])


def test_moment_matrix_rejects_mode_count(ansatz, small_basis, system, damped):
    with pytest.raises(DomainError):
        moment_matrix(damped, ansatz, small_basis, system, T, damped.m + 1)


@pytest.fixture(scope="module")
def diagnostic(grid, basis, system):
    a = ControlAnsatz.build(grid, REGION, 48, T, pooled=True)
    return spectral_control_diagnostic(basis, system, 1.0, T, 20, a)


def test_strong_damping_collapses_moment_rows(diagnostic):
    diag = diagnostic
    assert diag.sigma_min[0] > 0
    assert np.all(np.diff(diag.sigma_min) <= 1e-12)
    assert diag.sigma_min[19] / diag.sigma_min[4] <= 1e-6
    assert diag.decades(5, 20) >= 6.0
    assert any(line.startswith("sigma_min_20:") for line in diag.to_lines())


def test_undamped_moment_rows_also_degrade_at_short_horizon(diagnostic):
    diag = diagnostic
    assert np.all(diag.sigma_min_undamped > 0)
    assert np.all(np.diff(diag.sigma_min_undamped) <= 1e-12)
    # frequency gaps shrink faster than T = 2 resolves them
    assert diag.decades(5, 20, undamped=True) >= 2.0


# ----- unique continuation -----

def test_flux_gram_is_nonsingular_on_full_halo(grid, basis, system):
    report = unique_continuation_test(grid.exterior_midpoints, basis, system, 6)
    assert report.holds
    assert report.gram.shape == (6, 6)
    assert report.sigma_min > report.threshold


def test_single_mode_gram_on_small_region(grid, basis, system):
    report = unique_continuation_test(region_points(grid, REGION), basis, system, 1)
    assert report.sigma_min > 0
    assert report.holds


def test_unique_continuation_rejects_bad_input(basis, system):
    with pytest.raises(DomainError):
        unique_continuation_test(np.array([0.2]), basis, system, 2)
    with pytest.raises(DomainError):
        unique_continuation_test(np.array([]), basis, system, 2)
    with pytest.raises(DomainError):
        unique_continuation_test(np.array([3.0]), basis, system, basis.m + 1)


def test_repeated_observation_points_scale_the_gram(grid, basis, system):
    x = grid.exterior_midpoints
    once = unique_continuation_test(x, basis, system, 6)
    twice = unique_continuation_test(np.concatenate([x, x]), basis, system, 6)
    assert twice.sigma_min == pytest.approx(2.0 * once.sigma_min, rel=1e-6, abs=1e-13 * twice.trace)
    assert twice.trace == pytest.approx(2.0 * once.trace, rel=1e-12)
    assert twice.holds == once.holds
