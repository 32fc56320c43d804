"""CSV tables, key: value reports and basis files.

Every float is written with 17 significant digits so a table read back reproduces the
binary64 values exactly.
"""

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.numerics.errors import ScenarioParseError
from src.numerics.spectral_core import SpectralBasis, basis_from_text, basis_to_text

PathLike = Union[str, Path]

# column layout of every table, also printed by ``run_lab.py --help``
COLUMNS: Dict[str, Tuple[str, ...]] = {
    "spectrum.csv": ("n", "lambda", "regime"),
    "flux_table.csv": ("x", "mode", "value"),
    "coefficient_trace.csv": ("n", "t", "A", "B", "Bp", "Bpp", "regime"),
    "snapshots.csv": ("t", "x", "u", "ut"),
    "modal_trace.csv": ("t", "n", "u_n", "ut_n"),
    "dual_trace.csv": ("t", "n", "psi_n", "psit_n"),
    "dual_flux.csv": ("t", "x", "flux"),
    "control_error.csv": ("ansatz_size", "eps_reg", "error"),
    "control_coefficients.csv": ("spatial", "profile", "t0", "t1", "coefficient"),
    "null_control.csv": ("ansatz_size", "residual"),
    "sigma_min.csv": ("k", "sigma_min", "delta"),
    "exponents.csv": ("n", "regime", "mu_re", "mu_im"),
    "uc_gram.csv": ("region", "sigma_min", "threshold", "holds"),
}


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: PathLike, name: str, rows: Iterable[Sequence]) -> Path:
    """Write ``rows`` under the registered header of table ``name`` into directory ``path``."""
    target = Path(path) / name
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COLUMNS[name])
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return target


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_report(path: PathLike, name: str, lines: Iterable[str]) -> Path:
    target = Path(path) / name
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return target


def write_basis(path: PathLike, basis: SpectralBasis, name: str = "basis.txt") -> Path:
    target = Path(path) / name
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(basis_to_text(basis), encoding="utf-8")
    return target


def read_basis(path: PathLike, halo: Optional[float] = None, n_exterior: int = 32) -> SpectralBasis:
    return basis_from_text(Path(path).read_text(encoding="utf-8"), halo, n_exterior)


def read_target(path: PathLike, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Modal target (u, u_t) from a CSV with columns n, u, ut; missing modes are zero."""
    u, ut = np.zeros(m), np.zeros(m)
    try:
        rows = read_csv(path)
    except OSError as exc:
        raise ScenarioParseError(f"cannot read target file {path}: {exc.strerror}", field="control.target") from exc
    for line, row in enumerate(rows, 2):
        try:
            n = int(row["n"])
            value_u, value_ut = float(row["u"]), float(row["ut"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioParseError(f"bad target row in {path}", line=line, field="control.target") from exc
        if not 1 <= n <= m:
            raise ScenarioParseError(f"target mode {n} outside 1..{m}", line=line, field="control.target")
        u[n - 1], ut[n - 1] = value_u, value_ut
    return u, ut


def columns_help() -> str:
    return "\n".join(f"  {name}: {', '.join(cols)}" for name, cols in COLUMNS.items())
