"""Scenario files: INI text in, a validated ``Scenario`` out.

Layout::

    [scenario]   experiment, seed, output_dir, threads, T, m, basis_file
    [domain]     a, b, s, delta
    [grid]       n_interior, halo, n_exterior
    [control]    region, profile, pooled, ansatz_sizes, eps_reg, target, target_mode, ...
    [evolve] [dual] [moments] [uc] [verify]   experiment parameters

Intervals are written ``lo hi`` and separated by commas; lists are comma separated.
"""

import configparser
import os
import re
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_core import PydanticCustomError

from src.numerics.errors import ScenarioParseError, ScenarioValidationError

Experiment = Literal["spectrum", "evolve", "dual", "control", "moments", "uc", "verify"]
EXPERIMENTS: Tuple[str, ...] = ("spectrum", "evolve", "dual", "control", "moments", "uc", "verify")
Interval = Tuple[float, float]

# pydantic error types that mean "could not read the value" rather than "value breaks a rule"
_PARSE_ERRORS = {"float_parsing", "int_parsing", "bool_parsing", "extra_forbidden", "missing",
                 "float_type", "int_type", "int_from_float", "list_type", "tuple_type", "interval_parsing"}


def _split_list(value):
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def _split_intervals(value):
    if isinstance(value, str):
        out = []
        for chunk in _split_list(value):
            parts = chunk.split()
            try:
                if len(parts) != 2:
                    raise ValueError
                out.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise PydanticCustomError(
                    "interval_parsing", "interval {chunk!r} needs two numbers 'lo hi'", {"chunk": chunk}
                ) from None
        return out
    return value


Intervals = Annotated[List[Interval], BeforeValidator(_split_intervals)]
IntList = Annotated[List[int], BeforeValidator(_split_list)]
FloatList = Annotated[List[float], BeforeValidator(_split_list)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainConfig(_Section):
    a: float = -1.0
    b: float = 1.0
    s: float = Field(0.5, gt=0.0, lt=1.0)
    delta: float = Field(0.0, ge=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def check_interval(self):
        if self.b <= self.a:
            raise ValueError(f"domain needs b > a, got a={self.a}, b={self.b}")
        return self


class GridConfig(_Section):
    n_interior: int = Field(128, ge=1, le=4096)
    halo: Optional[float] = Field(None, gt=0.0)
    n_exterior: int = Field(32, ge=1, le=4096)
    quad_order: int = Field(10, ge=4, le=40)


class ControlConfig(_Section):
    region: Intervals = [(1.25, 1.75)]
    profile: Literal["polynomial", "sine", "hann"] = "polynomial"
    pooled: bool = False
    ansatz_sizes: IntList = [2, 4, 6, 8]
    eps_reg: FloatList = [1e-8]
    target: Optional[str] = None
    target_mode: int = Field(1, ge=1)
    target_amplitude: float = 1.0
    method: Literal["parts", "direct"] = "parts"

    @field_validator("ansatz_sizes")
    @classmethod
    def positive_sizes(cls, v):
        if not v or any(k < 1 for k in v):
            raise ValueError("ansatz sizes must be positive integers")
        return sorted(v)

    @field_validator("eps_reg")
    @classmethod
    def nonnegative_eps(cls, v):
        if not v or any(e < 0 for e in v):
            raise ValueError("eps_reg values must be nonnegative")
        return v


class EvolveConfig(_Section):
    u0_mode: Optional[int] = Field(1, ge=1)
    u0_amplitude: float = 1.0
    u1_mode: Optional[int] = Field(None, ge=1)
    u1_amplitude: float = 0.0
    control_amplitude: float = 1.0
    control_start: Optional[float] = Field(None, ge=0.0)
    control_end: Optional[float] = None
    snapshots: int = Field(5, ge=2)
    trace_points: int = Field(41, ge=2)
    method: Literal["parts", "direct"] = "parts"


class DualConfig(_Section):
    psi0_mode: Optional[int] = Field(1, ge=1)
    psi0_amplitude: float = 1.0
    psi1_mode: Optional[int] = Field(None, ge=1)
    psi1_amplitude: float = 0.0
    samples: int = Field(100, ge=2)


class MomentsConfig(_Section):
    M_modes: int = Field(10, ge=1)
    n_profiles: int = Field(24, ge=1)
    null_sizes: IntList = [4, 8, 16]
    u0_mode: int = Field(1, ge=1)


class UCConfig(_Section):
    M_modes: int = Field(6, ge=1)
    tol: float = Field(1e-10, gt=0.0)
    regions: Optional[Intervals] = None


class VerifyConfig(_Section):
    dissipativity_trials: int = Field(1000, ge=1)
    flux_modes: int = Field(8, ge=1)
    uc_modes: int = Field(6, ge=1)


class Scenario(_Section):
    experiment: Experiment
    seed: int = Field(0, ge=0, le=2 ** 64 - 1)
    output_dir: str = "out"
    threads: int = Field(1, ge=1, le=256)
    T: float = Field(4.0, gt=0.0, allow_inf_nan=False)
    m: int = Field(16, ge=1)
    basis_file: Optional[str] = None
    domain: DomainConfig = DomainConfig()
    grid: GridConfig = GridConfig()
    control: ControlConfig = ControlConfig()
    evolve: EvolveConfig = EvolveConfig()
    dual: DualConfig = DualConfig()
    moments: MomentsConfig = MomentsConfig()
    uc: UCConfig = UCConfig()
    verify: VerifyConfig = VerifyConfig()

    @model_validator(mode="after")
    def check_cross_section(self):
        if self.m > self.grid.n_interior:
            raise ValueError(f"m = {self.m} exceeds n_interior = {self.grid.n_interior}")
        a, b = self.domain.a, self.domain.b
        regions = list(self.control.region) + list(self.uc.regions or [])
        for lo, hi in regions:
            if hi <= lo:
                raise ValueError(f"control interval [{lo}, {hi}] is empty")
            if hi > a and lo < b:
                raise ValueError(f"control interval [{lo}, {hi}] is not disjoint from [{a}, {b}]")
        # section defaults only bind the experiment that reads them
        truncations = {"moments": self.moments.M_modes, "uc": self.uc.M_modes}
        if self.experiment in truncations and truncations[self.experiment] > self.m:
            raise ValueError(f"{self.experiment}.M_modes = {truncations[self.experiment]} exceeds m = {self.m}")
        for name in ("u0_mode", "u1_mode"):
            mode = getattr(self.evolve, name)
            if mode is not None and mode > self.m:
                raise ValueError(f"evolve.{name} = {mode} exceeds m = {self.m}")
        if self.control.target_mode > self.m:
            raise ValueError(f"control.target_mode exceeds m = {self.m}")
        return self

    def echo(self) -> List[str]:
        """Flat ``key: value`` lines of every setting."""
        lines = []
        for key, value in self.model_dump().items():
            if isinstance(value, dict):
                lines += [f"{key}.{k}: {v}" for k, v in value.items()]
            else:
                lines.append(f"{key}: {value}")
        return lines


def _line_of(text: str, section: Optional[str], key: Optional[str]) -> Optional[int]:
    """1-based line of ``key`` inside ``[section]``, None when not found."""
    current = None
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        header = re.match(r"^\[(.+)\]$", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return number
            continue
        if key and current == section and re.match(rf"^{re.escape(key)}\s*[=:]", line):
            return number
    return None


def _to_dict(parser: configparser.ConfigParser) -> dict:
    data = {}
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "scenario":
            data.update(items)
        else:
            data[section] = items
    return data


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text.

    Raises ScenarioParseError for unreadable text or values and
    ScenarioValidationError when a value breaks a range or cross-field rule.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioParseError("missing section header", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ScenarioParseError("malformed line", line=line) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ScenarioParseError(f"duplicate entry: {exc.message}", line=exc.lineno) from exc

    if not parser.has_section("scenario"):
        raise ScenarioParseError("missing [scenario] section", field="scenario")

    try:
        return Scenario.model_validate(_to_dict(parser))
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = [str(p) for p in err["loc"] if not isinstance(p, int)]
        section = loc[0] if len(loc) > 1 else "scenario"
        key = loc[1] if len(loc) > 1 else (loc[0] if loc else None)
        field = ".".join(loc) or None
        if err["type"] in _PARSE_ERRORS:
            line = _line_of(text, section, key) or _line_of(text, key, None)
            raise ScenarioParseError(err["msg"], line=line, field=field) from exc
        where = f" [{field}]" if field else ""
        raise ScenarioValidationError(f"{err['msg']}{where}") from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    return parse_scenario(text)


def apply_overrides(
    scenario: Scenario,
    experiment: Optional[str] = None,
    output_dir: Optional[str] = None,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> Scenario:
    """Flags win over environment, environment over the file."""
    load_dotenv()
    update = {}
    env_out = os.getenv("FRACLAB_OUTPUT_DIR")
    env_threads = os.getenv("FRACLAB_THREADS")
    if env_out:
        update["output_dir"] = env_out
    if env_threads:
        try:
            update["threads"] = int(env_threads)
        except ValueError as exc:
            raise ScenarioParseError(f"FRACLAB_THREADS is not an integer: {env_threads!r}",
                                     field="threads") from exc
    for key, value in (("experiment", experiment), ("output_dir", output_dir), ("threads", threads), ("seed", seed)):
        if value is not None:
            update[key] = value
    if not update:
        return scenario
    try:
        return Scenario.model_validate({**scenario.model_dump(), **update})
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ScenarioValidationError(f"{err['msg']} [{'.'.join(str(p) for p in err['loc'])}]") from exc
