from typing import TypedDict, Literal, Optional

from src.integrations.scenario_io import Scenario
from src.numerics.modal_dynamics import DampingSpectrum
from src.numerics.spectral_core import SpectralBasis, StiffnessSystem


class LabState(TypedDict):
    """Complete state for one experiment run."""

    # ===== INPUT =====
    scenario: Scenario
    experiment: str
    output_dir: str
    started_at: float

    # ===== DISCRETIZATION =====
    system: Optional[StiffnessSystem]
    basis: Optional[SpectralBasis]

    # ===== DAMPING =====
    spectrum: Optional[DampingSpectrum]

    # ===== RESULTS =====
    artifacts: list
    report_lines: list
    verification_passed: Optional[bool]

    # ===== STATUS =====
    status: Literal["running", "success", "failed"]
    wall_time: Optional[float]
