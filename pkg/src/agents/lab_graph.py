import time

from langgraph.graph import StateGraph, END
from src.agents.state import LabState
from src.integrations.scenario_io import EXPERIMENTS, Scenario
from src.nodes.setup import assemble_node, eigenpairs_node, classify_node
from src.nodes.experiments import (
    spectrum_node,
    evolve_node,
    dual_node,
    control_node,
    moments_node,
    uc_node,
    verify_node,
)
from src.nodes.manifest import manifest_node

EXPERIMENT_NODES = {
    "spectrum": spectrum_node,
    "evolve": evolve_node,
    "dual": dual_node,
    "control": control_node,
    "moments": moments_node,
    "uc": uc_node,
    "verify": verify_node,
}


def create_lab_pipeline():
    """Creates the experiment pipeline: discretize, classify, run one experiment, write the manifest."""

    workflow = StateGraph(LabState)

    # Add all nodes
    workflow.add_node("assemble", assemble_node)
    workflow.add_node("eigenpairs", eigenpairs_node)
    workflow.add_node("classify", classify_node)
    for name, node in EXPERIMENT_NODES.items():
        workflow.add_node(name, node)
    workflow.add_node("manifest", manifest_node)

    # Entry point
    workflow.set_entry_point("assemble")

    # Assemble → Eigenpairs → Classify
    workflow.add_edge("assemble", "eigenpairs")
    workflow.add_edge("eigenpairs", "classify")

    # Experiment routing
    def route_by_experiment(state: LabState) -> str:
        experiment = state["experiment"]
        if experiment in EXPERIMENT_NODES:
            return experiment
        raise ValueError(f"unknown experiment {experiment!r}")

    workflow.add_conditional_edges(
        "classify",
        route_by_experiment,
        {name: name for name in EXPERIMENTS},
    )

    # Experiment → Manifest → End
    for name in EXPERIMENT_NODES:
        workflow.add_edge(name, "manifest")
    workflow.add_edge("manifest", END)

    return workflow.compile()


def initial_state(scenario: Scenario) -> LabState:
    return {
        "scenario": scenario,
        "experiment": scenario.experiment,
        "output_dir": scenario.output_dir,
        "started_at": time.perf_counter(),
        "system": None,
        "basis": None,
        "spectrum": None,
        "artifacts": [],
        "report_lines": [],
        "verification_passed": None,
        "status": "running",
        "wall_time": None,
    }


def run_pipeline(scenario: Scenario) -> LabState:
    return graph.invoke(initial_state(scenario))


graph = create_lab_pipeline()
