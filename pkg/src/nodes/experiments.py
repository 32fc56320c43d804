import logging

import numpy as np

from src.agents.state import LabState
from src.integrations import tables
from src.numerics.control_analysis import (
    ControlAnsatz,
    dual_exponential_coeffs,
    dual_reachability_map,
    moment_function,
    moment_matrix,
    nested_control,
    null_control_attempt,
    reconstruct_dual,
    region_points,
    spectral_control_diagnostic,
    unique_continuation_test,
)
from src.numerics.evolution import (
    ExteriorControl,
    StatePair,
    TimeProfile,
    dual_energy_audit,
    dual_flux,
    energy,
    regularity_audit,
    solve_dual,
    solve_full,
)
from src.numerics.modal_dynamics import bound_audit, coefficient_trace
from src.numerics.nonlocal_ops import (
    ExteriorProfile,
    flux_boundedness,
    lift_stability,
    modal_flux_pairing,
    mode_flux_table,
)
from src.numerics.spectral_core import mirror_defect
from src.numerics.verification import run_invariant_suite

logger = logging.getLogger(__name__)


def _unit(m: int, mode, amplitude: float) -> np.ndarray:
    v = np.zeros(m)
    if mode is not None:
        v[mode - 1] = amplitude
    return v


def _region_profile(state: LabState) -> ExteriorProfile:
    sc, grid = state["scenario"], state["system"].grid
    cells = np.concatenate([grid.cells_in(lo, hi) for lo, hi in sc.control.region])
    return ExteriorProfile.indicator(grid, np.unique(cells))


def _finish(state: LabState, written: list, lines: list) -> LabState:
    for path in written:
        print(f"   💾 {path}")
    return {
        **state,
        "artifacts": list(state.get("artifacts") or []) + [str(p) for p in written],
        "report_lines": list(state.get("report_lines") or []) + lines,
    }


def spectrum_node(state: LabState) -> LabState:
    """
    Eigenvalues, basis export, flux table and coefficient trace.
    """
    sc, sys, basis, spectrum = state["scenario"], state["system"], state["basis"], state["spectrum"]
    out = state["output_dir"]
    print("\n📊 SPECTRUM EXPERIMENT")

    written = [
        tables.write_csv(out, "spectrum.csv",
                         ((n + 1, lam, r.kind) for n, (lam, r) in enumerate(zip(basis.lambdas, spectrum.regimes)))),
        tables.write_basis(out, basis),
    ]
    x = sys.grid.exterior_midpoints
    flux = mode_flux_table(basis, sys, x)
    written.append(tables.write_csv(out, "flux_table.csv",
                                    ((x[p], n + 1, flux[p, n]) for n in range(basis.m) for p in range(x.size))))
    written.append(tables.write_csv(out, "coefficient_trace.csv",
                                    coefficient_trace(spectrum, np.linspace(0.0, sc.T, 21))))
    written.append(tables.write_csv(out, "exponents.csv", (
        (n + 1, r.kind, mu.real, mu.imag) for n, r in enumerate(spectrum.regimes) for mu in r.exponents())))

    lines = [f"lambda_1: {basis.lambdas[0]:.17g}", f"n0: {spectrum.n0}",
             f"flux_boundedness_max: {flux_boundedness(basis, sys).max():.17g}",
             f"lift_stability: {lift_stability(_region_profile(state), sys):.17g}"]
    if np.isclose(sys.grid.a, -sys.grid.b):
        lines.append(f"mirror_defect_max: {mirror_defect(basis).max():.17g}")
    lines += bound_audit(spectrum, basis.lambdas, sc.T).to_lines()
    written.append(tables.write_report(out, "spectrum_report.txt", lines))

    print(f"   ✓ λ_1 = {basis.lambdas[0]:.10g}")
    return _finish(state, written, lines)


def evolve_node(state: LabState) -> LabState:
    """
    Forward solution from modal initial data under the scenario's exterior control.
    """
    sc, sys, basis, spectrum = state["scenario"], state["system"], state["basis"], state["spectrum"]
    out, ev = state["output_dir"], sc.evolve
    print("\n⏩ EVOLVE EXPERIMENT")

    m = spectrum.m
    u0 = _unit(m, ev.u0_mode, ev.u0_amplitude)
    u1 = _unit(m, ev.u1_mode, ev.u1_amplitude)
    start = 0.0 if ev.control_start is None else ev.control_start
    end = sc.T if ev.control_end is None else ev.control_end
    g = ExteriorControl(((_region_profile(state), TimeProfile(sc.control.profile, start, end, ev.control_amplitude)),),
                        sc.T)
    print(f"   🎛️  Control on {list(sc.control.region)} over [{start:g}, {end:g}]")

    kwargs = {"method": ev.method, "threads": sc.threads}
    x = sys.grid.interior_nodes
    snapshots = []
    for t in np.linspace(0.0, sc.T, ev.snapshots):
        st = solve_full(u0, u1, g, basis, sys, spectrum, t, **kwargs)
        u, ut = basis.synthesize(st.u_coeffs), basis.synthesize(st.ut_coeffs)
        snapshots += [(t, x[i], u[i], ut[i]) for i in range(x.size)]
    trace = []
    final = None
    for t in np.linspace(0.0, sc.T, ev.trace_points):
        final = solve_full(u0, u1, g, basis, sys, spectrum, t, **kwargs)
        trace += [(t, n + 1, final.u_coeffs[n], final.ut_coeffs[n]) for n in range(m)]

    written = [tables.write_csv(out, "snapshots.csv", snapshots), tables.write_csv(out, "modal_trace.csv", trace)]
    lines = [f"energy_initial: {energy(StatePair(u0, u1, 0.0), basis.lambdas):.17g}",
             f"energy_final: {energy(final, basis.lambdas):.17g}"]
    lines += regularity_audit(g, basis, sys, spectrum, 0, np.linspace(0.0, sc.T, 9)).to_lines()
    written.append(tables.write_report(out, "evolve_report.txt", lines))

    print(f"   ✓ {ev.snapshots} snapshots, {ev.trace_points} trace times")
    return _finish(state, written, lines)


def dual_node(state: LabState) -> LabState:
    """
    Backward dual solution, its exterior flux and the dual energy constants.
    """
    sc, sys, basis, spectrum = state["scenario"], state["system"], state["basis"], state["spectrum"]
    out, du = state["output_dir"], sc.dual
    print("\n⏪ DUAL EXPERIMENT")

    m = spectrum.m
    psi0 = _unit(m, du.psi0_mode, du.psi0_amplitude)
    psi1 = _unit(m, du.psi1_mode, du.psi1_amplitude)
    x = sys.grid.exterior_midpoints
    table = mode_flux_table(basis, sys, x)
    times = np.linspace(0.0, sc.T, du.samples)

    trace, flux = [], []
    for t in times:
        st = solve_dual(psi0, psi1, spectrum, sc.T, t)
        trace += [(t, n + 1, st.u_coeffs[n], st.ut_coeffs[n]) for n in range(m)]
        fv = dual_flux(psi0, psi1, table, x, spectrum, sc.T, t)
        flux += [(t, fv.x[p], fv.values[p]) for p in range(x.size)]

    pairs = dual_exponential_coeffs(psi0, psi1, spectrum)
    gap = max(float(np.max(np.abs(reconstruct_dual(pairs, sc.T, t) - solve_dual(psi0, psi1, spectrum, sc.T, t).u_coeffs)))
              for t in times)
    report = dual_energy_audit(psi0, psi1, spectrum, sc.T, du.samples, table, sys.grid.exterior_width)
    lines = report.to_lines() + [f"dual_reconstruction_gap: {gap:.17g}"]

    written = [tables.write_csv(out, "dual_trace.csv", trace), tables.write_csv(out, "dual_flux.csv", flux),
               tables.write_report(out, "dual_report.txt", lines)]
    print(f"   ✓ energy constant {report.energy_constant:.4e}, reconstruction gap {gap:.2e}")
    return _finish(state, written, lines)


def control_node(state: LabState) -> LabState:
    """
    Approximate control toward a target over growing ansatz families.
    """
    sc, sys, basis, spectrum = state["scenario"], state["system"], state["basis"], state["spectrum"]
    out, cc = state["output_dir"], sc.control
    print("\n🎯 CONTROL EXPERIMENT")

    m = spectrum.m
    if cc.target:
        print(f"   📂 Target from {cc.target}")
        u_target, ut_target = tables.read_target(cc.target, m)
    else:
        u_target, ut_target = _unit(m, cc.target_mode, cc.target_amplitude), np.zeros(m)
    target = StatePair(u_target, ut_target, sc.T)

    rows, best, best_reach = [], None, None
    base = ControlAnsatz.spatial(sys.grid, cc.region, cc.pooled)
    steps = nested_control(target, base, cc.ansatz_sizes, basis, sys, spectrum, sc.T, cc.eps_reg, sc.threads,
                           cc.profile)
    for ansatz, reach, results in steps:
        for result in results:
            rows.append((ansatz.size, result.eps_reg, result.achieved_error))
            print(f"   ✓ ansatz {ansatz.size:4d}, eps {result.eps_reg:.1e}: error {result.achieved_error:.4e}")
            if best is None or result.achieved_error < best.achieved_error:
                best, best_reach = result, reach

    coeffs = best.ansatz.coefficients
    labels = ["pooled"] if best.ansatz.pooled else [str(c) for c in best.ansatz.spatial_cells]
    coeff_rows = [(labels[i], k + 1, q.t0, q.t1, coeffs[i, k])
                  for i in range(coeffs.shape[0]) for k, q in enumerate(best.ansatz.temporal_basis)]

    dual_map = dual_reachability_map(best.ansatz, basis, sys, spectrum, sc.T)
    scale = max(float(np.max(np.abs(best_reach.matrix))), np.finfo(float).tiny)
    transposition = float(np.max(np.abs(dual_map.matrix - best_reach.matrix))) / scale

    lines = best.to_lines() + [f"transposition_gap: {transposition:.17g}"]
    written = [tables.write_csv(out, "control_error.csv", rows),
               tables.write_csv(out, "control_coefficients.csv", coeff_rows),
               tables.write_report(out, "control_report.txt", lines)]
    return _finish(state, written, lines)


def moments_node(state: LabState) -> LabState:
    """
    Moment-matrix conditioning, damped against undamped, and null-control attempts.
    """
    sc, sys, basis, spectrum = state["scenario"], state["system"], state["basis"], state["spectrum"]
    out, mo = state["output_dir"], sc.moments
    print("\n📉 MOMENTS EXPERIMENT")

    region = sc.control.region
    ansatz = ControlAnsatz.build(sys.grid, region, mo.n_profiles, sc.T, sc.control.profile, pooled=True)
    diag = spectral_control_diagnostic(basis, sys, sc.domain.delta, sc.T, mo.M_modes, ansatz)
    rows = [(k, s_, sc.domain.delta) for k, s_ in zip(diag.k, diag.sigma_min)]
    rows += [(k, s_, 0.0) for k, s_ in zip(diag.k, diag.sigma_min_undamped)]

    u0 = _unit(spectrum.m, mo.u0_mode, 1.0)
    null_rows = []
    for n_profiles in mo.null_sizes:
        attempt_ansatz = ControlAnsatz.build(sys.grid, region, n_profiles, sc.T, sc.control.profile, pooled=True)
        result = null_control_attempt(u0, None, attempt_ansatz, basis, sys, spectrum, sc.T, 1e-12)
        null_rows.append((attempt_ansatz.size, result.achieved_error))
        print(f"   ✓ null-control attempt with {attempt_ansatz.size} profiles: residual {result.achieved_error:.4e}")

    # row entries are e^{μT} F(iμ) for the first exponent
    system = moment_matrix(spectrum, ansatz, basis, sys, sc.T, 1)
    mu = system.exponents[0]
    pairing = float(modal_flux_pairing(ansatz.spatial_profiles()[0], basis, sys)[0])
    F = moment_function(ansatz.temporal_basis[0], pairing, sc.domain.delta, sc.T, 1j * mu)
    direct = complex(np.exp(mu * sc.T) * F)
    imag = system.observation_rows[1][0] if system.row_kinds[1] == "im" else 0.0
    entry = complex(system.observation_rows[0][0], imag)
    consistency = abs(direct - entry) / max(abs(entry), np.finfo(float).tiny)

    lines = diag.to_lines()
    if mo.M_modes >= 2:
        lines.append(f"sigma_min_decades: {diag.decades(1, mo.M_modes):.17g}")
        lines.append(f"sigma_min_decades_undamped: {diag.decades(1, mo.M_modes, undamped=True):.17g}")
    lines += [f"accumulation_point: {spectrum.accumulation_point:.17g}",
              f"moment_function_consistency: {consistency:.17g}"]

    written = [tables.write_csv(out, "sigma_min.csv", rows),
               tables.write_csv(out, "null_control.csv", null_rows),
               tables.write_csv(out, "exponents.csv", (
                   (n + 1, r.kind, z.real, z.imag) for n, r in enumerate(spectrum.regimes) for z in r.exponents())),
               tables.write_report(out, "moments_report.txt", lines)]
    print(f"   ✓ σ_min({mo.M_modes}) = {diag.sigma_min[-1]:.3e} (undamped {diag.sigma_min_undamped[-1]:.3e})")
    return _finish(state, written, lines)


def uc_node(state: LabState) -> LabState:
    """
    Flux Gram rank test on each observation region.
    """
    sc, sys, basis = state["scenario"], state["system"], state["basis"]
    out = state["output_dir"]
    print("\n🔍 UNIQUE CONTINUATION EXPERIMENT")

    rows, lines = [], []
    for lo, hi in (sc.uc.regions or sc.control.region):
        report = unique_continuation_test(region_points(sys.grid, [(lo, hi)]), basis, sys, sc.uc.M_modes, sc.uc.tol)
        label = f"{lo:g} {hi:g}"
        rows.append((label, report.sigma_min, report.threshold, report.holds))
        lines += [f"region: {label}"] + report.to_lines()
        print(f"   {'✓' if report.holds else '✗'} [{label}]: σ_min = {report.sigma_min:.3e}")

    written = [tables.write_csv(out, "uc_gram.csv", rows), tables.write_report(out, "uc_report.txt", lines)]
    return _finish(state, written, lines)


def verify_node(state: LabState) -> LabState:
    """
    Run the invariant suite; the CLI turns a failed check into exit status 1.
    """
    sc, sys, basis = state["scenario"], state["system"], state["basis"]
    out = state["output_dir"]
    print("\n✅ VERIFY EXPERIMENT")

    report = run_invariant_suite(sys, basis, sc.domain.delta, sc.T, sc.control.region, seed=sc.seed,
                                 dissipativity_trials=sc.verify.dissipativity_trials,
                                 flux_modes=sc.verify.flux_modes, uc_modes=sc.verify.uc_modes,
                                 profile_kind=sc.control.profile)
    for check in report.checks:
        print(f"   {'✓' if check.passed else '✗'} {check.name}: {check.value:.3e}")

    lines = report.to_lines()
    written = [tables.write_report(out, "verify_report.txt", lines)]
    new_state = _finish(state, written, lines)
    return {
        **new_state,
        "verification_passed": report.all_passed,
    }
