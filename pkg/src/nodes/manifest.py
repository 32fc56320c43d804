import platform
import time
from datetime import datetime, timezone
from importlib import metadata

from src.agents.state import LabState
from src.integrations import tables
from src.numerics import __version__

_PACKAGES = ("numpy", "scipy", "pydantic", "langgraph", "python-dotenv")


def _version(name: str) -> str:
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "unknown"


def manifest_node(state: LabState) -> LabState:
    """
    Write manifest.txt: timestamp, versions, the scenario echo and the artifact list.
    """
    print("\n🧾 WRITING MANIFEST")

    wall = time.perf_counter() - state["started_at"]
    lines = [f"timestamp: {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
             f"experiment: {state['experiment']}",
             f"fraclab: {__version__}",
             f"python: {platform.python_version()}"]
    lines += [f"{name}: {_version(name)}" for name in _PACKAGES]
    lines += state["scenario"].echo()
    lines += [f"artifact: {path}" for path in state.get("artifacts") or []]
    if state.get("verification_passed") is not None:
        lines.append(f"verification_passed: {state['verification_passed']}")
    lines.append(f"wall_time_s: {wall:.3f}")
    path = tables.write_report(state["output_dir"], "manifest.txt", lines)

    print(f"   💾 {path}")
    print(f"   ✓ Finished in {wall:.2f} s")

    return {
        **state,
        "artifacts": list(state.get("artifacts") or []) + [str(path)],
        "status": "success",
        "wall_time": wall,
    }
