"""Scenario files: versioned JSON documents describing one system and the
analyses to run on it.

A scenario is validated against a JSON schema (Draft 2020-12, unknown keys
rejected everywhere) before anything is built from it.

Example::

    {
      "schema": "bw-planner/1",
      "seed": 7,
      "system": {
        "ell": 2,
        "arrival": {"family": "exponential", "rate": 1.4},
        "thinning": [0.5, 0.5],
        "mu": 1.0,
        "C": 2,
        "cumulative_quotas": [4, 9]
      },
      "optimize": {"decision": "quota_N1", "epsilon": 0.01}
    }
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from jsonschema import Draft202012Validator

from .distributions import from_record, unit_length_from_record
from .errors import PlannerError, ScenarioError
from .log import get_logger
from .optimizer import OptimizationProblem
from .simulator import SystemConfig

log = get_logger(__name__)

SCHEMA_ID = "bw-planner/1"
FORMATS = ("table", "json", "csv")


# ============================================================================
# Schema
# ============================================================================

def _closed(properties: Dict[str, Any], required: Tuple[str, ...] = ()) -> Dict[str, Any]:
    return {
        "type": "object",
        "properties": properties,
        "required": list(required),
        "additionalProperties": False,
    }


_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEGATIVE = {"type": "number", "minimum": 0}
_COUNT = {"type": "integer", "minimum": 1}
_QUOTAS = {"type": "array", "items": {"type": ["integer", "null"], "minimum": 0}, "minItems": 1}
_COSTS = {"type": "array", "items": _NONNEGATIVE, "minItems": 1}


def _family(name: str, **properties: Any) -> Dict[str, Any]:
    return _closed({"family": {"const": name}, **properties}, ("family",) + tuple(properties))


SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {
        "distribution": {
            "oneOf": [
                _family("exponential", rate=_POSITIVE),
                _family("deterministic", d=_POSITIVE),
                _family("erlang", shape=_COUNT, rate=_POSITIVE),
                _family("hyperexponential2", p={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        rate1=_POSITIVE, rate2=_POSITIVE),
                _family("thinned", base={"$ref": "#/$defs/distribution"},
                        q={"type": "number", "exclusiveMinimum": 0, "maximum": 1}),
            ]
        },
        "unit_length": {
            "oneOf": [
                _family("constant", value=_COUNT),
                _family("geometric", mean={"type": "number", "minimum": 1}),
                _family("uniform", low=_COUNT, high=_COUNT),
            ]
        },
    },
    **_closed(
        {
            "schema": {"const": SCHEMA_ID},
            "name": {"type": "string"},
            "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
            "replications": _COUNT,
            "system": _closed(
                {
                    "ell": _COUNT,
                    "arrival": {"$ref": "#/$defs/distribution"},
                    "thinning": {"type": "array", "items": _POSITIVE, "minItems": 1},
                    "mu": _POSITIVE,
                    "C": _COUNT,
                    "unit_lengths": {"type": "array", "items": {"$ref": "#/$defs/unit_length"}},
                    "service": {"$ref": "#/$defs/distribution"},
                    "class_quotas": _QUOTAS,
                    "cumulative_quotas": _QUOTAS,
                    "buffer_mode": {"enum": ["infinite", "finite_per_class", "finite_cumulative"]},
                    "class_costs": _COSTS,
                    "cumulative_costs": _COSTS,
                    "horizon": {"type": "integer", "minimum": 0},
                    "arrival_mode": {"enum": ["thinned", "independent"]},
                    "record_every": _COUNT,
                },
                ("ell", "arrival", "thinning", "mu", "C"),
            ),
            "solve": _closed(
                {
                    "quotas": _QUOTAS,
                    "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.2},
                    "Delta": _POSITIVE,
                }
            ),
            "simulate": _closed({"trajectory": {"type": "boolean"}}),
            "optimize": _closed(
                {
                    "decision": {"enum": ["quota_N1", "depletion_C"]},
                    "epsilon": _POSITIVE,
                    "alpha": _COSTS,
                    "beta": {"type": "array", "items": _POSITIVE},
                    "N_1": {"type": "integer", "minimum": 0},
                    "mode": {"enum": ["infinite", "finite"]},
                },
                ("epsilon",),
            ),
            "validate": _closed(
                {
                    "levels": _COUNT,
                    "horizon": {"type": "integer", "minimum": 0},
                    "tv_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "seeds": _COUNT,
                }
            ),
            "output": _closed(
                {
                    "dir": {"type": "string", "minLength": 1},
                    "format": {"enum": list(FORMATS)},
                }
            ),
        },
        ("schema", "system"),
    ),
}

_VALIDATOR = Draft202012Validator(SCHEMA)


# ============================================================================
# Scenario
# ============================================================================

@dataclass(frozen=True)
class SolveDirectives:
    quotas: Optional[Tuple[Optional[int], ...]] = None
    delta: Optional[float] = None
    Delta: Optional[float] = None


@dataclass(frozen=True)
class ValidateDirectives:
    """Settings of the cross-check suite.

    ``seeds`` replications are audited pathwise; the statistical checks
    compare the pre-arrival law of every cumulative level in replication 0
    with the analytic geometric law.
    """
    levels: int = 20
    horizon: Optional[int] = None
    tv_threshold: float = 0.01
    seeds: int = 1


@dataclass(frozen=True)
class Scenario:
    system: SystemConfig
    name: str = ""
    replications: int = 1
    solve: SolveDirectives = field(default_factory=SolveDirectives)
    trajectory: bool = False
    optimize: Optional[Dict[str, Any]] = None
    validate: ValidateDirectives = field(default_factory=ValidateDirectives)
    out_dir: Optional[Path] = None
    format: str = "table"
    source: Optional[Path] = None

    @property
    def seed(self) -> int:
        return self.system.seed


def validate_document(document: Any) -> None:
    """Check a parsed scenario against the schema.

    Raises:
        ScenarioError: Listing every schema violation
    """
    errors = sorted(_VALIDATOR.iter_errors(document), key=lambda e: [str(p) for p in e.absolute_path])
    if not errors:
        return
    lines: List[str] = []
    for error in errors:
        where = "/".join(str(p) for p in error.absolute_path) or "<root>"
        lines.append(f"  {where}: {error.message}")
    raise ScenarioError("Scenario does not match schema " + SCHEMA_ID + ":\n" + "\n".join(lines))


def build_system(record: Dict[str, Any], seed: int = 0) -> SystemConfig:
    """Build the SystemConfig of a validated ``system`` block."""
    fields: Dict[str, Any] = dict(record)
    fields["arrival"] = from_record(record["arrival"])
    fields["thinning"] = tuple(record["thinning"])
    if "service" in record:
        fields["service"] = from_record(record["service"])
    if "unit_lengths" in record:
        fields["unit_lengths"] = tuple(unit_length_from_record(r) for r in record["unit_lengths"])
    for name in ("class_quotas", "cumulative_quotas", "class_costs", "cumulative_costs"):
        if name in record:
            fields[name] = tuple(record[name])
    return SystemConfig(seed=seed, **fields)


def from_document(document: Any, source: Optional[Path] = None) -> Scenario:
    """Validate a parsed document and build the Scenario.

    Raises:
        ScenarioError: On schema violations or inconsistent values
    """
    validate_document(document)
    try:
        system = build_system(document["system"], int(document.get("seed", 0)))
    except PlannerError as e:
        raise ScenarioError(f"Invalid system block: {e}") from e

    solve = document.get("solve", {})
    quotas = solve.get("quotas")
    if quotas is not None and len(quotas) != system.ell:
        raise ScenarioError(f"solve.quotas needs {system.ell} entries, got {len(quotas)}")
    output = document.get("output", {})

    scenario = Scenario(
        system=system,
        name=document.get("name", ""),
        replications=document.get("replications", 1),
        solve=SolveDirectives(None if quotas is None else tuple(quotas), solve.get("delta"), solve.get("Delta")),
        trajectory=document.get("simulate", {}).get("trajectory", False),
        optimize=document.get("optimize"),
        validate=ValidateDirectives(**document.get("validate", {})),
        out_dir=Path(output["dir"]) if "dir" in output else None,
        format=output.get("format", "table"),
        source=source,
    )
    if scenario.optimize is not None:
        build_problem(scenario)
    return scenario


def load_scenario(path: str) -> Scenario:
    """Read, validate and build a scenario file.

    Args:
        path: Path to a JSON scenario

    Returns:
        Scenario ready to run

    Raises:
        ScenarioError: If the file is missing, is not JSON or fails validation
    """
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"Cannot read scenario {path}: {e.strerror or e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"Scenario {path} is not valid JSON: {e}") from e
    scenario = from_document(document, source)
    log.debug(f"Loaded scenario {path}: {scenario.system.ell} classes, C={scenario.system.C}")
    return scenario


def with_overrides(
    scenario: Scenario,
    seed: Optional[int] = None,
    replications: Optional[int] = None,
    out_dir: Optional[str] = None,
    format: Optional[str] = None,
) -> Scenario:
    """Apply command-line overrides; None leaves a field unchanged."""
    changes: Dict[str, Any] = {}
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise ScenarioError(f"seed must be an unsigned 64-bit integer, got {seed}")
        changes["system"] = replace(scenario.system, seed=seed)
    if replications is not None:
        if replications < 1:
            raise ScenarioError(f"replication count must be positive, got {replications}")
        changes["replications"] = replications
    if out_dir is not None:
        changes["out_dir"] = Path(out_dir)
    if format is not None:
        changes["format"] = format
    return replace(scenario, **changes) if changes else scenario


def build_problem(scenario: Scenario) -> OptimizationProblem:
    """OptimizationProblem of the scenario's ``optimize`` block.

    Raises:
        ScenarioError: If the block is missing or inconsistent with the system
    """
    block = scenario.optimize
    if block is None:
        raise ScenarioError("Scenario has no optimize block")
    try:
        return OptimizationProblem(
            system=scenario.system,
            epsilon=block["epsilon"],
            decision=block.get("decision", "quota_N1"),
            alpha_class=None if "alpha" not in block else tuple(block["alpha"]),
            beta_class=None if "beta" not in block else tuple(block["beta"]),
            N_1=block.get("N_1"),
            mode=block.get("mode", "infinite"),
        )
    except PlannerError as e:
        raise ScenarioError(f"Invalid optimize block: {e}") from e
