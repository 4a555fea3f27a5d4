"""Case documents: parsing, serialization, bundled systems and uncertainty boxes"""

import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import tomli_w
from pydantic import ValidationError

from rtep.core.exceptions import CaseParseError, CaseValidationError, UncertaintyError
from rtep.models.network import NetworkCase, UncertaintyBox

logger = logging.getLogger(__name__)

# Document section -> NetworkCase field
SECTIONS = {
    "bus": "buses",
    "gen": "generators",
    "line0": "existing_lines",
    "candidate": "candidate_corridors",
}
_FIELD_TO_SECTION = {v: k for k, v in SECTIONS.items()}

# pydantic error types that mean "the document is malformed" rather than
# "the data breaks an invariant"
_PARSE_ERROR_TYPES = {
    "missing", "extra_forbidden", "int_parsing", "int_type", "int_from_float",
    "float_parsing", "float_type", "finite_number", "list_type", "dict_type",
    "model_type", "model_attributes_type", "bool_type", "bool_parsing", "string_type",
}

BUNDLED_CASES = ("three_bus", "garver6", "garver6_gf")


def parse_case(path: Union[str, Path]) -> NetworkCase:
    """Parse and validate a TOML case document

    Args:
        path: Case file

    Returns:
        NetworkCase: Validated, immutable case

    Raises:
        CaseParseError: If the document is malformed
        CaseValidationError: If the data violates a case invariant
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CaseParseError(str(path), f"cannot read file: {e}")
    case = parse_case_text(text, source=str(path))
    logger.info(
        f"Loaded case '{case.name}' from {path}: {case.n_buses} buses, "
        f"{len(case.corridors)} corridors, {len(case.candidate_lines)} candidate lines"
    )
    return case


def parse_case_text(text: str, source: str = "<string>") -> NetworkCase:
    """Parse a case document held in memory"""
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise CaseParseError(source, str(e), line=_decode_error_line(e))

    unknown = set(document) - {"system", *SECTIONS}
    if unknown:
        name = sorted(unknown)[0]
        raise CaseParseError(source, f"unknown section [{name}]", line=_find_header(text, name), field=name)
    if "system" not in document or not isinstance(document["system"], dict):
        raise CaseParseError(source, "missing [system] table", field="system")
    if "bus" not in document:
        raise CaseParseError(source, "missing [[bus]] entries", field="bus")

    payload: Dict[str, Any] = dict(document["system"])
    for section, field in SECTIONS.items():
        entries = document.get(section, [])
        if not isinstance(entries, list):
            raise CaseParseError(
                source, f"[{section}] must be an array of tables ([[{section}]])",
                line=_find_header(text, section), field=section,
            )
        payload[field] = entries

    try:
        return NetworkCase.model_validate(payload)
    except ValidationError as e:
        raise _translate_validation_error(e, text, source)


def serialize_case(case: NetworkCase) -> str:
    """Serialize a case to its TOML document"""
    system = case.model_dump(
        exclude={"buses", "generators", "existing_lines", "candidate_corridors"},
        exclude_none=True,
    )
    document: Dict[str, Any] = {"system": system}
    for section, field in SECTIONS.items():
        entries = [
            item.model_dump(by_alias=True, exclude_none=True)
            for item in getattr(case, field)
        ]
        if entries:
            document[section] = entries
    return tomli_w.dumps(document)


def write_case(case: NetworkCase, path: Union[str, Path]) -> Path:
    """Write a case document to disk"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_case(case), encoding="utf-8")
    return path


def bundled_case_path(name: str) -> Path:
    """Path of a bundled case document"""
    if name not in BUNDLED_CASES:
        raise CaseParseError(name, f"no bundled case named '{name}'. Available: {', '.join(BUNDLED_CASES)}")
    return Path(str(resources.files("rtep.data.cases").joinpath(f"{name}.toml")))


def load_bundled_case(name: str) -> NetworkCase:
    """Parse one of the bundled systems"""
    return parse_case(bundled_case_path(name))


def resolve_case(reference: Union[str, Path]) -> NetworkCase:
    """Load a case from a path, or from a bundled case name"""
    reference = str(reference)
    if reference in BUNDLED_CASES:
        return load_bundled_case(reference)
    return parse_case(reference)


def build_uncertainty_box(case: NetworkCase, u_d: float, u_r: float) -> UncertaintyBox:
    """Interval box for loads (symmetric) and RES (one-sided, downwards)

    Args:
        case: Network case
        u_d: Load uncertainty [%], applied to real and (through delta) reactive load
        u_r: RES uncertainty [%]

    Returns:
        UncertaintyBox: Bounds with loads first, then RES, one entry per bus
    """
    if u_d < 0 or u_r < 0:
        raise UncertaintyError(f"percentages must be non-negative (u_d={u_d}, u_r={u_r})")
    if u_r > 100:
        raise UncertaintyError(f"u_r must not exceed 100% (got {u_r})")

    d_max = u_d * case.p_load / 100.0
    r_min = -u_r * case.p_res / 100.0
    xi_max = np.concatenate([d_max, np.zeros(case.n_buses)])
    xi_min = np.concatenate([-d_max, r_min])
    # Avoid -0.0 in serialized boxes
    xi_min = np.where(xi_min == 0, 0.0, xi_min)
    return UncertaintyBox(u_d=u_d, u_r=u_r, xi_min=xi_min.tolist(), xi_max=xi_max.tolist())


def _decode_error_line(error: tomllib.TOMLDecodeError) -> Optional[int]:
    line = getattr(error, "lineno", None)
    if line is not None:
        return int(line)
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def _find_header(text: str, section: str, occurrence: int = 0) -> Optional[int]:
    """1-based line of the occurrence-th [[section]] (or [section]) header"""
    pattern = re.compile(rf"^\s*\[\[?\s*{re.escape(section)}\s*\]\]?\s*(#.*)?$")
    seen = 0
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            if seen == occurrence:
                return number
            seen += 1
    return None


def _find_key(text: str, start: Optional[int], key: str) -> Optional[int]:
    """First line at or after start assigning key, before the next header"""
    if start is None:
        return None
    lines = text.splitlines()
    pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
    for number in range(start, len(lines) + 1):
        line = lines[number - 1]
        if number > start and line.lstrip().startswith("["):
            break
        if pattern.match(line):
            return number
    return start


def _translate_validation_error(error: ValidationError, text: str, source: str):
    """Map the first pydantic error to a parse or validation error with a location"""
    first = error.errors()[0]
    loc: List[Any] = list(first.get("loc", ()))
    message = first.get("msg", "invalid value")

    if loc and loc[0] in _FIELD_TO_SECTION:
        section = _FIELD_TO_SECTION[loc[0]]
        index = loc[1] if len(loc) > 1 and isinstance(loc[1], int) else 0
        key = next((str(x) for x in loc[2:] if isinstance(x, str)), None)
        field = f"{section}[{index}]" + (f".{key}" if key else "")
        header = _find_header(text, section, index)
        line = _find_key(text, header, key) if key else header
    else:
        key = str(loc[0]) if loc else None
        field = f"system.{key}" if key else "system"
        header = _find_header(text, "system")
        line = _find_key(text, header, key) if key else header

    if first.get("type") in _PARSE_ERROR_TYPES:
        return CaseParseError(source, message, line=line, field=field)
    return CaseValidationError(field, message)
