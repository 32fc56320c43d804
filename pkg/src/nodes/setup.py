import logging
from pathlib import Path

import numpy as np

from src.agents.state import LabState
from src.integrations.tables import read_basis
from src.numerics.errors import DomainError
from src.numerics.modal_dynamics import classify
from src.numerics.spectral_core import Grid1D, assemble, eigenpairs

logger = logging.getLogger(__name__)


def assemble_node(state: LabState) -> LabState:
    """
    Assemble the stiffness, mass and exterior coupling matrices.
    """
    sc = state["scenario"]
    print("\n🧮 ASSEMBLING STIFFNESS SYSTEM")

    grid = Grid1D(sc.domain.a, sc.domain.b, sc.grid.n_interior, sc.grid.halo, sc.grid.n_exterior)
    system = assemble(grid, sc.domain.s, quad_order=sc.grid.quad_order)

    print(f"   ✓ s = {sc.domain.s:g}, n_interior = {grid.n_interior}, exterior cells = {grid.n_cells}")
    print(f"   ✓ C(1,s) = {system.c_ns:.6f}")

    return {
        **state,
        "system": system,
        "status": "running",
    }


def eigenpairs_node(state: LabState) -> LabState:
    """
    Solve the generalized eigenproblem, or reload a previously exported basis.
    """
    sc = state["scenario"]
    system = state["system"]
    print("\n📐 COMPUTING EIGENPAIRS")

    if sc.basis_file:
        print(f"   📂 Importing basis from {sc.basis_file}")
        basis = read_basis(Path(sc.basis_file), system.grid.exterior_halo, system.grid.n_exterior)
        g = system.grid
        if basis.grid.n_interior != g.n_interior or not np.allclose([basis.grid.a, basis.grid.b], [g.a, g.b]):
            raise DomainError("imported basis does not live on the scenario grid")
        if not np.isclose(basis.s, system.s, rtol=1e-12, atol=0.0):
            raise DomainError(f"imported basis has s = {basis.s:g}, scenario uses s = {system.s:g}")
        if basis.m < sc.m:
            raise DomainError(f"imported basis has {basis.m} modes, scenario asks for {sc.m}")
        basis = basis.truncated(sc.m)
    else:
        basis = eigenpairs(system, sc.m)

    print(f"   ✓ {basis.m} modes, λ_1 = {basis.lambdas[0]:.10g}, λ_m = {basis.lambdas[-1]:.10g}")

    return {
        **state,
        "basis": basis,
    }


def classify_node(state: LabState) -> LabState:
    """
    Split the modes into oscillatory, critical and overdamped regimes.
    """
    sc = state["scenario"]
    basis = state["basis"]
    print("\n🌊 CLASSIFYING DAMPING REGIMES")

    spectrum = classify(sc.domain.delta, basis.lambdas)
    kinds = [r.kind for r in spectrum.regimes]

    print(f"   ✓ δ = {sc.domain.delta:g}: threshold index N0 = {spectrum.n0}")
    print(f"   ✓ oscillatory {kinds.count('oscillatory')}, critical {kinds.count('critical')}, "
          f"overdamped {kinds.count('overdamped')}")
    if sc.domain.delta > 0:
        logger.info("λ^+ accumulates at %.6g", spectrum.accumulation_point)

    return {
        **state,
        "spectrum": spectrum,
    }
